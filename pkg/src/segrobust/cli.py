"""Command-line frontend.

Subcommands: corrupt, augment, ablate, evaluate, toy-train, toy-experiment,
report. Every run writes a ``run.json`` with the fully resolved configuration
and seeds into its output directory, so any output can be regenerated
bit-exactly. Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import ablate as ablate_mod
from . import corrupt as corrupt_mod
from . import metrics as metrics_mod
from . import paint as paint_mod
from . import toyseg as toyseg_mod
from .errors import SegRobustError, UnpairedSampleError
from .imagecore import index_dataset, load_image, load_label_map, save_image
from .seeding import derive_seed

RUN_SCHEMA_VERSION = 1


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _parse_severities(text: str) -> list[int]:
    """Accepts comma lists and a-b ranges, e.g. '1-5' or '0,2-3'."""
    out: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if "-" in token[1:]:
            lo, hi = token.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif token:
            out.append(int(token))
    if not out:
        raise ValueError(f"empty severity spec {text!r}")
    return out


def _jobs(args) -> int:
    if getattr(args, "jobs", None) is not None:
        return int(args.jobs)
    env = os.environ.get("SEGROBUST_JOBS")
    if env is not None:
        return int(env)
    return os.cpu_count() or 1


def _apply_config_file(args, command: str) -> None:
    """TOML section [command] fills flags the command line left at None."""
    path = getattr(args, "config", None)
    if not path:
        return
    with open(path, "rb") as f:
        table = tomllib.load(f)
    section = table.get(command, {})
    for key, value in section.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)


def _fill_defaults(args, defaults: dict) -> None:
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _write_run_json(out_dir: Path, command: str, args, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "config"):
            continue
        if isinstance(value, Path):
            value = str(value)
        resolved[key] = value
    payload = {
        "schema_version": RUN_SCHEMA_VERSION,
        "command": command,
        "resolved_config": resolved,
    }
    if extra:
        payload.update(extra)
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2))


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_corrupt(args) -> int:
    _apply_config_file(args, "corrupt")
    _fill_defaults(
        args,
        {
            "layout": "flat",
            "kinds": ",".join(corrupt_mod.CORRUPTION_KINDS),
            "severities": "1-5",
            "seed": 0,
            "classes": 19,
            "ignore_id": 255,
        },
    )
    index = index_dataset(
        args.dataset, layout=args.layout, num_classes=args.classes, ignore_id=args.ignore_id
    )
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    severities = _parse_severities(args.severities)
    out = Path(args.out)
    manifest = corrupt_mod.generate_corrupted_dataset(
        index,
        out,
        kinds=kinds,
        severities=severities,
        base_seed=args.seed,
        jobs=_jobs(args),
    )
    _write_run_json(out, "corrupt", args, {"manifest": manifest.name})
    print(f"wrote {len(kinds) * len(severities) * len(index)} images under {out}")
    return 0


def _cmd_augment(args) -> int:
    _apply_config_file(args, "augment")
    _fill_defaults(
        args,
        {
            "layout": "flat",
            "alpha_min": paint_mod.ALPHA_PRESETS["narrow"][0],
            "alpha_max": paint_mod.ALPHA_PRESETS["narrow"][1],
            "fraction": 0.5,
            "mode": "random_class",
            "batch": 8,
            "seed": 0,
            "classes": 19,
            "ignore_id": 255,
        },
    )
    index = index_dataset(
        args.dataset, layout=args.layout, num_classes=args.classes, ignore_id=args.ignore_id
    )
    cfg = paint_mod.BlendConfig(
        alpha_min=args.alpha_min,
        alpha_max=args.alpha_max,
        fraction_painted=args.fraction,
        paint_mode=args.mode,
    )
    stats = None
    if cfg.paint_mode in ("class_mean", "class_median"):
        stats = paint_mod.compute_class_color_stats(index)
    n = min(args.batch, len(index))
    batch = []
    for sample in index.samples[:n]:
        batch.append(
            (load_image(sample.image_path), load_label_map(sample.label_path, index.ignore_id))
        )
    result = paint_mod.augment_batch(
        batch, cfg, num_classes=index.num_classes, stats=stats, rng_seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, item in enumerate(result.items):
        save_image(batch[i][0], out / f"{i:03d}_original.png")
        save_image(item.image, out / f"{i:03d}_blended.png")
        if item.painted and item.palette is not None:
            painting = paint_mod.render_painting(item.labels, item.palette)
            save_image(painting, out / f"{i:03d}_painting.png")
    with open(out / "provenance.jsonl", "w") as f:
        for record in paint_mod.provenance_records(result, cfg):
            f.write(json.dumps(record) + "\n")
    _write_run_json(out, "augment", args, {"painted_count": result.painted_count})
    print(f"painted {result.painted_count}/{n} preview images under {out}")
    return 0


def _cmd_ablate(args) -> int:
    _apply_config_file(args, "ablate")
    _fill_defaults(
        args,
        {"layout": "flat", "seed": 0, "classes": 19, "ignore_id": 255, "scale": None,
         "sigma": None},
    )
    index = index_dataset(
        args.dataset, layout=args.layout, num_classes=args.classes, ignore_id=args.ignore_id
    )
    template = ablate_mod.AblationSpec(mode=args.mode, scale=args.scale, sigma=args.sigma)
    out = Path(args.out)
    manifest = ablate_mod.generate_ablation_suite(
        index, template, out, base_seed=args.seed, jobs=_jobs(args)
    )
    _write_run_json(out, "ablate", args, {"manifest": manifest.name})
    print(f"wrote {index.num_classes * len(index)} ablated images under {out}")
    return 0


def _cmd_evaluate(args) -> int:
    _apply_config_file(args, "evaluate")
    _fill_defaults(args, {"ignore_id": 255})
    pred_root = Path(args.pred)
    gt_root = Path(args.gt)
    pred_files = sorted(p for p in pred_root.rglob("*.png"))
    if not pred_files:
        raise UnpairedSampleError(f"no .png predictions under {pred_root}")
    cm = metrics_mod.ConfusionMatrix.zeros(args.classes)
    for pf in pred_files:
        rel = pf.relative_to(pred_root)
        gf = gt_root / rel
        if not gf.exists():
            raise UnpairedSampleError(f"prediction {rel} has no ground truth under {gt_root}")
        pred = load_label_map(pf, ignore_id=args.ignore_id)
        gt = load_label_map(gf, ignore_id=args.ignore_id)
        cm = cm + metrics_mod.accumulate_confusion(pred, gt, args.classes)
    iou = metrics_mod.iou_per_class(cm)
    sens = metrics_mod.sensitivity_per_class(cm)
    miou = metrics_mod.mean_iou(cm)
    report = {
        "schema_version": 1,
        "num_pairs": len(pred_files),
        "miou": miou,
        "iou_per_class": [None if np.isnan(v) else float(v) for v in iou],
        "sensitivity_per_class": [None if np.isnan(v) else float(v) for v in sens],
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2))
        table = metrics_mod.format_per_class_table({"iou": iou, "sensitivity": sens})
        (out / "per_class.txt").write_text(table)
        _write_run_json(out, "evaluate", args)
    print(f"mIoU over {len(pred_files)} pairs: {miou:.4f}")
    return 0


def _cmd_toy_train(args) -> int:
    _apply_config_file(args, "toy-train")
    shapes_std, train_std = toyseg_mod.standard_experiment_config()
    _fill_defaults(
        args,
        {
            "epochs": train_std.epochs,
            "batch_size": train_std.batch_size,
            "lr": train_std.learning_rate,
            "momentum": train_std.momentum,
            "seed": train_std.seed,
            "data_seed": shapes_std.seed,
            "train_count": shapes_std.train_count,
            "test_count": shapes_std.test_count,
            "image_size": shapes_std.image_size,
            "alpha_min": train_std.blend.alpha_min,
            "alpha_max": train_std.blend.alpha_max,
        },
    )
    shapes_cfg = replace(
        shapes_std,
        seed=args.data_seed,
        train_count=args.train_count,
        test_count=args.test_count,
        image_size=args.image_size,
    )
    blend = None
    if args.paint:
        blend = paint_mod.BlendConfig(
            alpha_min=args.alpha_min, alpha_max=args.alpha_max, fraction_painted=0.5
        )
    cfg = toyseg_mod.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        blend=blend,
    )
    train_set = toyseg_mod.generate_shapes_dataset(shapes_cfg, "train")
    test_set = toyseg_mod.generate_shapes_dataset(shapes_cfg, "test")
    losses: list = []
    model = toyseg_mod.train(
        train_set, cfg, num_classes=shapes_cfg.num_classes, loss_sink=losses
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    toyseg_mod.save_model(model, out / "model.bin", seed=cfg.seed, config=cfg)
    with open(out / "losses.csv", "w") as f:
        f.write("epoch,mean_loss\n")
        for e, v in enumerate(losses):
            f.write(f"{e + 1},{v:.6f}\n")
    report = toyseg_mod.evaluate_robustness(
        model, test_set, kinds=("gaussian_noise",), severities=(), seed=0
    )
    clean = report.miou("gaussian_noise", 0)
    _write_run_json(out, "toy-train", args, {"clean_miou": clean})
    print(f"trained {cfg.epochs} epochs; clean test mIoU {clean:.4f}; model at {out}/model.bin")
    return 0


def _cmd_toy_experiment(args) -> int:
    _apply_config_file(args, "toy-experiment")
    shapes_std, train_std = toyseg_mod.standard_experiment_config()
    _fill_defaults(
        args,
        {
            "epochs": train_std.epochs,
            "lr": train_std.learning_rate,
            "seed": train_std.seed,
            "data_seed": shapes_std.seed,
            "train_count": shapes_std.train_count,
            "test_count": shapes_std.test_count,
        },
    )
    shapes_cfg = replace(
        shapes_std,
        seed=args.data_seed,
        train_count=args.train_count,
        test_count=args.test_count,
    )
    train_cfg = replace(
        train_std, epochs=args.epochs, learning_rate=args.lr, seed=args.seed
    )
    out = Path(args.out)
    result = toyseg_mod.run_paired_experiment(shapes_cfg, train_cfg, out_dir=out)
    _write_run_json(out, "toy-experiment", args, {"summary": result.summary})
    s = result.summary
    print(
        "clean mIoU: reference {:.4f} painted {:.4f} | noise-avg mIoU: "
        "reference {:.4f} painted {:.4f} (delta {:+.4f})".format(
            s["clean_miou_reference"],
            s["clean_miou_painted"],
            s["noise_avg_miou_reference"],
            s["noise_avg_miou_painted"],
            s["noise_avg_delta"],
        )
    )
    return 0


def _read_miou_rows(path: Path) -> list[tuple[str, str, int, float]]:
    """Rows (variant, kind, severity, miou) from either comparison or benchmark CSVs."""
    import csv as _csv

    rows = []
    with open(path, newline="") as f:
        reader = _csv.reader(f)
        header = next(reader, None)
        while header is not None and header and header[0] == "schema_version":
            header = next(reader, None)
        if header is None:
            return rows
        cols = {name: i for i, name in enumerate(header)}
        for line in reader:
            if not line:
                continue
            try:
                severity = int(line[cols["severity"]])
            except (ValueError, KeyError):
                continue  # avg rows and malformed lines
            if "metric" in cols and line[cols["metric"]] != "miou":
                continue
            value_col = cols.get("miou", cols.get("value"))
            variant = line[cols["variant"]] if "variant" in cols else path.stem
            rows.append((variant, line[cols["kind"]], severity, float(line[value_col])))
    return rows


def _cmd_report(args) -> int:
    _apply_config_file(args, "report")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows: list[tuple[str, str, int, float]] = []
    for path in args.inputs:
        rows.extend(_read_miou_rows(Path(path)))
    if not rows:
        raise UnpairedSampleError("no mIoU rows found in the given CSV files")

    series: dict[tuple[str, str], dict[int, float]] = {}
    for variant, kind, severity, miou in rows:
        series.setdefault((variant, kind), {})[severity] = miou

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    lines = [f"{'variant':<12} {'kind':<16} " + " ".join(f"s{s}" for s in range(6)), "-" * 70]
    for (variant, kind), by_sev in sorted(series.items()):
        cells = " ".join(
            f"{by_sev[s]:.3f}" if s in by_sev else "  -  " for s in range(6)
        )
        lines.append(f"{variant:<12} {kind:<16} {cells}")
    (out / "table.txt").write_text("\n".join(lines) + "\n")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (variant, kind), by_sev in sorted(series.items()):
        sev = sorted(by_sev)
        ax.plot(sev, [by_sev[s] for s in sev], marker="o", label=f"{variant} {kind}")
    ax.set_xlabel("severity level")
    ax.set_ylabel("mIoU")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "miou_vs_severity.png", dpi=150)
    fig.savefig(out / "miou_vs_severity.svg")
    plt.close(fig)

    _write_run_json(out, "report", args)
    print(f"wrote table.txt and miou_vs_severity.png/.svg under {out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> _Parser:
    parser = _Parser(
        prog="segrobust",
        description="Segmentation robustness toolkit: label-painting augmentation, "
        "corruption benchmarks, ablations, metrics, and a toy experiment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_dataset(p):
        p.add_argument("--in", dest="dataset", required=True, metavar="DIR",
                       help="dataset root directory")
        p.add_argument("--layout", choices=("flat", "cityscapes"), default=None,
                       help="dataset layout (default flat: images/ + labels/)")
        p.add_argument("--classes", type=int, default=None,
                       help="number of classes (count, default 19)")
        p.add_argument("--ignore-id", dest="ignore_id", type=int, default=None,
                       help="label id marking ignored pixels (default 255)")

    p = sub.add_parser("corrupt", help="generate a corrupted copy of a dataset")
    common_dataset(p)
    p.add_argument("--out", required=True, metavar="DIR", help="output root directory")
    p.add_argument("--kinds", default=None,
                   help="comma list of corruption kinds (default: all 16)")
    p.add_argument("--severities", default=None,
                   help="severity levels 0-5, e.g. '1-5' or '0,3' (default 1-5)")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed (integer)")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: SEGROBUST_JOBS or all cores)")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("augment", help="emit painted/blended preview panels")
    common_dataset(p)
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--alpha-min", dest="alpha_min", type=float, default=None,
                   help="lower blend weight in [0,1] (default 0.70)")
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=None,
                   help="upper blend weight in [0,1] (default 0.99)")
    p.add_argument("--fraction", type=float, default=None,
                   help="fraction of the batch to paint (default 0.5)")
    p.add_argument("--mode", choices=paint_mod.PAINT_MODES, default=None,
                   help="painting mode (default random_class)")
    p.add_argument("--batch", type=int, default=None,
                   help="number of samples to preview (default 8)")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed (integer)")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("ablate", help="generate class-level texture-ablation suites")
    common_dataset(p)
    p.add_argument("--out", required=True, metavar="DIR", help="output root directory")
    p.add_argument("--mode", required=True, choices=ablate_mod.ABLATION_MODES,
                   help="ablation mode")
    p.add_argument("--scale", type=float, default=None,
                   help="noise std in [0,1] intensity units (class_noise only)")
    p.add_argument("--sigma", type=float, default=None,
                   help="blur std in pixels (class_blur only)")
    p.add_argument("--seed", type=int, default=None, help="base RNG seed (integer)")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (default: SEGROBUST_JOBS or all cores)")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("evaluate", help="score a prediction directory against ground truth")
    p.add_argument("--pred", required=True, metavar="DIR",
                   help="directory of predicted label PNGs")
    p.add_argument("--gt", required=True, metavar="DIR",
                   help="directory of ground-truth label PNGs (matching relative paths)")
    p.add_argument("--classes", type=int, required=True, help="number of classes (count)")
    p.add_argument("--ignore-id", dest="ignore_id", type=int, default=None,
                   help="label id marking ignored pixels (default 255)")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="optional report output directory")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("toy-train", help="train one tiny model on synthetic shapes")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--paint", action="store_true",
                   help="enable label-painting augmentation during training")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (count)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None,
                   help="images per batch (count)")
    p.add_argument("--lr", type=float, default=None, help="SGD learning rate")
    p.add_argument("--momentum", type=float, default=None, help="SGD momentum in [0,1)")
    p.add_argument("--seed", type=int, default=None, help="training seed (integer)")
    p.add_argument("--data-seed", dest="data_seed", type=int, default=None,
                   help="dataset generation seed (integer)")
    p.add_argument("--train-count", dest="train_count", type=int, default=None,
                   help="training images (count)")
    p.add_argument("--test-count", dest="test_count", type=int, default=None,
                   help="test images (count)")
    p.add_argument("--image-size", dest="image_size", type=int, default=None,
                   help="image side length in pixels (>= 32)")
    p.add_argument("--alpha-min", dest="alpha_min", type=float, default=None,
                   help="lower blend weight in [0,1] (with --paint)")
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=None,
                   help="upper blend weight in [0,1] (with --paint)")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_toy_train)

    p = sub.add_parser("toy-experiment",
                       help="paired reference-vs-painted run with robustness report")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (count)")
    p.add_argument("--lr", type=float, default=None, help="SGD learning rate")
    p.add_argument("--seed", type=int, default=None, help="training seed (integer)")
    p.add_argument("--data-seed", dest="data_seed", type=int, default=None,
                   help="dataset generation seed (integer)")
    p.add_argument("--train-count", dest="train_count", type=int, default=None,
                   help="training images (count)")
    p.add_argument("--test-count", dest="test_count", type=int, default=None,
                   help="test images (count)")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_toy_experiment)

    p = sub.add_parser("report", help="render mIoU tables and severity plots from CSVs")
    p.add_argument("--in", dest="inputs", required=True, nargs="+", metavar="CSV",
                   help="comparison.csv or benchmark CSV files")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--config", default=None, help="TOML config file; flags win")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else int(e.code)
    try:
        return args.func(args)
    except (SegRobustError, FileNotFoundError, NotADirectoryError, PermissionError) as e:
        print(f"segrobust: data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"segrobust: usage error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"segrobust: data error: {e}", file=sys.stderr)
        return 2
    except Exception:
        print("segrobust: internal error:", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
