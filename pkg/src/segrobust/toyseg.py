"""Desk-scale check of the core claim: a tiny fully-convolutional net trained
on synthetic textured shapes, with and without label-painting augmentation,
evaluated under the corruption benchmark.

The dataset makes texture (a class-specific color plus stripe/checker pattern)
a perfect predictor on clean data; corruptions then degrade that cue, and the
paired experiment measures how much robustness the augmentation buys.

Everything trains in float64 with explicit im2col convolutions so gradients
can be checked against finite differences.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import paint
from .corrupt import apply_corruption
from .errors import (
    AllPixelsIgnoredError,
    DimensionMismatchError,
    DivergedLossError,
    EmptyDatasetError,
)
from .imagecore import Image, LabelMap
from .kernels import col2im3x3, im2col3x3, round_to_u8
from .metrics import ConfusionMatrix, accumulate_confusion, iou_per_class, mean_iou
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

KERNEL_SIZE = 3
HIDDEN = (16, 32)


# ---------------------------------------------------------------------------
# synthetic shapes dataset


@dataclass(frozen=True)
class TextureSpec:
    """Procedural class texture: dominant color modulated by a periodic pattern."""

    base: tuple  # (r, g, b) in [0, 255]
    amplitude: float | tuple  # scalar or per-channel (r, g, b) swing
    pattern: str  # h_stripes | v_stripes | d_stripes | checker
    period: int


_DEFAULT_BANK_4 = (
    TextureSpec(base=(60, 70, 60), amplitude=18.0, pattern="h_stripes", period=8),
    TextureSpec(base=(200, 60, 60), amplitude=25.0, pattern="v_stripes", period=4),
    TextureSpec(base=(60, 90, 200), amplitude=25.0, pattern="checker", period=5),
    TextureSpec(base=(190, 180, 60), amplitude=25.0, pattern="d_stripes", period=6),
)


def default_texture_bank(num_classes: int) -> tuple:
    """Injective class-to-texture assignment; handcrafted for 4 classes."""
    if num_classes <= 4:
        return _DEFAULT_BANK_4[:num_classes]
    bank = list(_DEFAULT_BANK_4)
    patterns = ("h_stripes", "v_stripes", "checker", "d_stripes")
    for c in range(4, num_classes):
        ang = 2.0 * math.pi * c / num_classes
        base = tuple(
            int(np.clip(128 + 100 * math.cos(ang + k * 2.1), 0, 255)) for k in range(3)
        )
        bank.append(
            TextureSpec(base=base, amplitude=25.0, pattern=patterns[c % 4], period=4 + c % 3 * 2)
        )
    return tuple(bank)


@dataclass(frozen=True)
class ShapesConfig:
    image_size: int = 64
    num_classes: int = 4
    shapes_per_image: tuple = (3, 3)  # inclusive range of shape counts
    shape_size: tuple = (7, 12)  # inclusive half-size / radius range in pixels
    pixel_noise: float = 5.0  # per-channel Gaussian jitter, u8 scale
    texture_bank: Optional[tuple] = None
    train_count: int = 800
    val_count: int = 100
    test_count: int = 200
    seed: int = 0
    ignore_id: int = 255

    def __post_init__(self):
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if 2 * self.shape_size[1] >= self.image_size:
            raise ValueError(
                "largest shape half-size must be under image_size / 2 "
                f"(got {self.shape_size[1]} for image_size {self.image_size})"
            )
        bank = self.texture_bank or default_texture_bank(self.num_classes)
        if len(bank) < self.num_classes:
            raise ValueError("texture bank must cover every class")
        object.__setattr__(self, "texture_bank", tuple(bank))


def _shape_mask(kind: int, size: int, cy: int, cx: int, hw: int) -> np.ndarray:
    yy, xx = np.mgrid[0:hw, 0:hw]
    if kind == 0:  # circle
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= size * size
    if kind == 1:  # square
        return (np.abs(yy - cy) <= size) & (np.abs(xx - cx) <= size)
    # triangle, apex up
    t = yy - (cy - size)
    return (t >= 0) & (t <= 2 * size) & (np.abs(xx - cx) <= t / 2.0)


def _pattern_value(spec: TextureSpec, yy, xx, py: int, px: int) -> np.ndarray:
    p = spec.period
    if spec.pattern == "h_stripes":
        wave = ((yy + py) // p) % 2
    elif spec.pattern == "v_stripes":
        wave = ((xx + px) // p) % 2
    elif spec.pattern == "d_stripes":
        wave = ((yy + xx + py) // p) % 2
    elif spec.pattern == "checker":
        wave = (((yy + py) // p) + ((xx + px) // p)) % 2
    else:
        raise ValueError(f"unknown texture pattern {spec.pattern!r}")
    return wave.astype(np.float64) * 2.0 - 1.0


def _render_sample(cfg: ShapesConfig, rng: np.random.Generator) -> Tuple[Image, LabelMap]:
    hw = cfg.image_size
    labels = np.zeros((hw, hw), dtype=np.uint8)
    occupied = np.zeros((hw, hw), dtype=bool)
    lo, hi = cfg.shapes_per_image
    count = int(rng.integers(lo, hi + 1))
    fg = cfg.num_classes - 1
    for j in range(count):
        cls = 1 + j % fg
        for _ in range(40):
            size = int(rng.integers(cfg.shape_size[0], cfg.shape_size[1] + 1))
            cy = int(rng.integers(size, hw - size))
            cx = int(rng.integers(size, hw - size))
            mask = _shape_mask((cls - 1) % 3, size, cy, cx, hw)
            if not (mask & occupied).any():
                labels[mask] = cls
                occupied |= mask
                break

    yy, xx = np.mgrid[0:hw, 0:hw]
    img = np.empty((hw, hw, 3), dtype=np.float64)
    for c in range(cfg.num_classes):
        sel = labels == c
        if not sel.any():
            continue
        spec = cfg.texture_bank[c]
        py = int(rng.integers(0, spec.period))
        px = int(rng.integers(0, spec.period))
        wave = _pattern_value(spec, yy, xx, py, px)
        amp = np.asarray(spec.amplitude, dtype=np.float64)
        tex = np.asarray(spec.base, dtype=np.float64) + amp * wave[:, :, None]
        img[sel] = tex[sel]
    img += rng.normal(0.0, cfg.pixel_noise, img.shape)
    return Image(round_to_u8(img)), LabelMap(labels, ignore_id=cfg.ignore_id)


def generate_shapes_dataset(cfg: ShapesConfig, split: str = "train") -> List[Tuple[Image, LabelMap]]:
    """Render the split's images; sample i depends only on (cfg.seed, split, i)."""
    counts = {"train": cfg.train_count, "val": cfg.val_count, "test": cfg.test_count}
    if split not in counts:
        raise ValueError(f"split must be one of {sorted(counts)}, got {split!r}")
    out = []
    for i in range(counts[split]):
        rng = make_rng(cfg.seed, split, i)
        out.append(_render_sample(cfg, rng))
    return out


def expected_class_pixels(cfg: ShapesConfig) -> np.ndarray:
    """Analytic per-class expected pixel count per image, for generator audits.

    Assumes the default one-shape-per-foreground-class round-robin with
    shapes_per_image == (k, k), ignoring the rare placement rejections.
    """
    sizes = np.arange(cfg.shape_size[0], cfg.shape_size[1] + 1, dtype=np.float64)
    area_by_geometry = (
        float(np.mean(np.pi * sizes**2)),  # circle
        float(np.mean((2 * sizes + 1) ** 2)),  # square
        float(np.mean(2 * sizes**2 + 2 * sizes + 1)),  # triangle
    )
    total = float(cfg.image_size**2)
    counts = np.zeros(cfg.num_classes, dtype=np.float64)
    k = cfg.shapes_per_image[0]
    fg = cfg.num_classes - 1
    for j in range(k):
        cls = 1 + j % fg
        counts[cls] += area_by_geometry[(cls - 1) % 3]
    counts[0] = total - counts[1:].sum()
    return counts


# ---------------------------------------------------------------------------
# TinyFCN: 3x3 conv(3->16) - ReLU - 3x3 conv(16->32) - ReLU - 3x3 conv(32->C)


@dataclass
class TinyFCN:
    weights: List[np.ndarray]  # each (out_ch, in_ch, 3, 3) float64
    biases: List[np.ndarray]  # each (out_ch,) float64
    num_classes: int

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "TinyFCN":
        return TinyFCN(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            num_classes=self.num_classes,
        )


def layer_shapes(num_classes: int) -> List[Tuple[int, int]]:
    chans = (3,) + HIDDEN + (num_classes,)
    return [(chans[i + 1], chans[i]) for i in range(len(chans) - 1)]


def init_model(num_classes: int, rng_seed: int) -> TinyFCN:
    """He-normal weights, zero biases."""
    weights, biases = [], []
    for li, (out_ch, in_ch) in enumerate(layer_shapes(num_classes)):
        rng = make_rng(rng_seed, "layer", li)
        std = math.sqrt(2.0 / (in_ch * KERNEL_SIZE * KERNEL_SIZE))
        weights.append(rng.normal(0.0, std, (out_ch, in_ch, KERNEL_SIZE, KERNEL_SIZE)))
        biases.append(np.zeros(out_ch, dtype=np.float64))
    return TinyFCN(weights=weights, biases=biases, num_classes=num_classes)


def _w_matrix(w: np.ndarray) -> np.ndarray:
    # (out, in, ky, kx) -> (9 * in, out) matching _im2col's tap-major column order
    return w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])


def _forward_batch(model: TinyFCN, x: np.ndarray, keep_cache: bool):
    """x: (N, H, W, 3) in [0, 1]. Returns (logits, cache)."""
    n, h, w, _ = x.shape
    cache = []
    cur = x
    last = len(model.weights) - 1
    for li, (wgt, b) in enumerate(zip(model.weights, model.biases)):
        col = im2col3x3(cur)
        z = col @ _w_matrix(wgt)
        z += b
        if li < last:
            mask = z > 0
            np.maximum(z, 0.0, out=z)
        else:
            mask = None
        if keep_cache:
            cache.append((col, mask))
        cur = z.reshape(n, h, w, wgt.shape[0])
    return cur, cache


def _backward_batch(model: TinyFCN, x_shape, cache, dlogits_flat: np.ndarray):
    n, h, w, _ = x_shape
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    d = dlogits_flat
    for li in range(len(model.weights) - 1, -1, -1):
        col, mask = cache[li]
        if mask is not None:
            d *= mask
        grads_b[li] = d.sum(axis=0)
        dw_mat = col.T @ d
        wgt = model.weights[li]
        grads_w[li] = dw_mat.reshape(3, 3, wgt.shape[1], wgt.shape[0]).transpose(3, 2, 0, 1)
        if li > 0:
            out_ch, in_ch = wgt.shape[0], wgt.shape[1]
            if out_ch < in_ch:
                # input gradient as a plain conv with flipped weights; the
                # im2col of d is cheap when the layer has few output channels
                wflip = wgt[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                d = im2col3x3(d.reshape(n, h, w, out_ch)) @ _w_matrix(wflip)
            else:
                dcol = d @ _w_matrix(wgt).T
                da = col2im3x3(dcol, n, h, w, in_ch)
                d = da.reshape(n * h * w, in_ch)
    return grads_w, grads_b


def forward(model: TinyFCN, img: Image) -> np.ndarray:
    """Logits of shape (H, W, num_classes); input normalized to [0, 1]."""
    x = img.data.astype(np.float64)[None] / 255.0
    logits, _ = _forward_batch(model, x, keep_cache=False)
    return logits[0]


def predict(model: TinyFCN, img: Image) -> LabelMap:
    return LabelMap(np.argmax(forward(model, img), axis=-1).astype(np.uint8))


def _softmax_loss_grad(logits: np.ndarray, gt: np.ndarray, ignore_id: int):
    """Mean masked cross-entropy over (N, H, W, C) logits; returns flat dlogits."""
    c = logits.shape[-1]
    flat = logits.reshape(-1, c)
    g = gt.reshape(-1).astype(np.int64)
    keep = g != ignore_id
    valid = np.flatnonzero(keep)
    if valid.size == 0:
        raise AllPixelsIgnoredError("every pixel carries the ignore label")
    z = flat - flat.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    gi = g[valid]
    loss = float(-(z[valid, gi] - np.log(sez[valid, 0])).mean())
    d = ez / sez
    d[valid, gi] -= 1.0
    d[~keep] = 0.0
    d /= valid.size
    return loss, d


def loss_and_grad(model: TinyFCN, img: Image, labels: LabelMap):
    """Masked softmax cross-entropy and exact analytic parameter gradients."""
    if (img.height, img.width) != (labels.height, labels.width):
        raise DimensionMismatchError("image and label dimensions differ")
    x = img.data.astype(np.float64)[None] / 255.0
    logits, cache = _forward_batch(model, x, keep_cache=True)
    loss, dflat = _softmax_loss_grad(logits, labels.ids[None], labels.ignore_id)
    gw, gb = _backward_batch(model, x.shape, cache, dflat)
    return loss, {"weights": gw, "biases": gb}


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 8
    learning_rate: float = 0.15
    lr_decay: float = 1.0
    momentum: float = 0.9
    seed: int = 0
    blend: Optional[paint.BlendConfig] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.blend is not None and self.batch_size % 2 != 0:
            raise ValueError("batch_size must be even when blending is active")


def _infer_num_classes(train_set) -> int:
    top = 0
    for _, labels in train_set:
        ids = labels.ids[labels.ids != labels.ignore_id]
        if ids.size:
            top = max(top, int(ids.max()))
    return top + 1


def train(
    train_set: Sequence[Tuple[Image, LabelMap]],
    cfg: TrainConfig,
    num_classes: Optional[int] = None,
    loss_sink: Optional[list] = None,
) -> TinyFCN:
    """SGD with momentum; optionally paints half of every batch.

    Deterministic: (train_set, cfg) fully determine the returned parameters.
    Per-epoch mean losses are logged and appended to loss_sink when given.
    """
    n = len(train_set)
    if n == 0:
        raise EmptyDatasetError("training set is empty")
    if num_classes is None:
        num_classes = _infer_num_classes(train_set)

    model = init_model(num_classes, derive_seed(cfg.seed, "init"))
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay**epoch
        perm = make_rng(cfg.seed, "shuffle", epoch).permutation(n)
        epoch_losses = []
        for bi in range(0, n, cfg.batch_size):
            idx = perm[bi : bi + cfg.batch_size]
            batch = [train_set[i] for i in idx]
            if cfg.blend is not None:
                aug = paint.augment_batch(
                    batch,
                    cfg.blend,
                    num_classes=num_classes,
                    rng_seed=derive_seed(cfg.seed, "augment", epoch, bi),
                )
                batch = [(it.image, it.labels) for it in aug.items]
            x = np.stack([im.data for im, _ in batch]).astype(np.float64) / 255.0
            gt = np.stack([lb.ids for _, lb in batch])
            ignore_id = batch[0][1].ignore_id

            logits, cache = _forward_batch(model, x, keep_cache=True)
            loss, dflat = _softmax_loss_grad(logits, gt, ignore_id)
            if not math.isfinite(loss):
                raise DivergedLossError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {bi // cfg.batch_size}"
                )
            gw, gb = _backward_batch(model, x.shape, cache, dflat)
            for li in range(len(model.weights)):
                vel_w[li] = cfg.momentum * vel_w[li] - lr * gw[li]
                vel_b[li] = cfg.momentum * vel_b[li] - lr * gb[li]
                model.weights[li] += vel_w[li]
                model.biases[li] += vel_b[li]
            epoch_losses.append(loss)
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        log.info("epoch %d/%d mean loss %.6f", epoch + 1, cfg.epochs, mean_loss)
        if loss_sink is not None:
            loss_sink.append(mean_loss)
    return model


# ---------------------------------------------------------------------------
# robustness evaluation and the paired experiment


@dataclass
class RobustnessReport:
    """kind -> severity (0 = clean) -> {"miou", "iou_per_class"}."""

    cells: Dict[str, Dict[int, dict]]

    def miou(self, kind: str, severity: int) -> float:
        return self.cells[kind][severity]["miou"]


def _eval_images(model: TinyFCN, images, labels_list, num_classes, batch: int = 8):
    cm = ConfusionMatrix.zeros(num_classes)
    for s in range(0, len(images), batch):
        chunk = images[s : s + batch]
        x = np.stack([im.data for im in chunk]).astype(np.float64) / 255.0
        logits, _ = _forward_batch(model, x, keep_cache=False)
        preds = np.argmax(logits, axis=-1).astype(np.uint8)
        for j in range(len(chunk)):
            cm = cm + accumulate_confusion(
                LabelMap(preds[j]), labels_list[s + j], num_classes
            )
    return cm


def evaluate_robustness(
    model: TinyFCN,
    test_set: Sequence[Tuple[Image, LabelMap]],
    kinds: Sequence[str],
    severities: Sequence[int] = (1, 2, 3, 4, 5),
    seed: int = 0,
) -> RobustnessReport:
    """mIoU per (kind, severity), always including the severity-0 clean pass."""
    if len(test_set) == 0:
        raise EmptyDatasetError("test set is empty")
    labels_list = [lb for _, lb in test_set]
    num_classes = model.num_classes
    cells: Dict[str, Dict[int, dict]] = {}
    for kind in kinds:
        cells[kind] = {}
        for severity in sorted(set([0, *severities])):
            corrupted = [
                apply_corruption(im, kind, severity, derive_seed(seed, kind, severity, i))
                for i, (im, _) in enumerate(test_set)
            ]
            cm = _eval_images(model, corrupted, labels_list, num_classes)
            cells[kind][severity] = {
                "miou": mean_iou(cm),
                "iou_per_class": iou_per_class(cm).tolist(),
            }
    return RobustnessReport(cells=cells)


@dataclass
class ComparisonResult:
    reference: RobustnessReport
    painted: RobustnessReport
    summary: dict
    reference_model: Optional[TinyFCN] = None
    painted_model: Optional[TinyFCN] = None


STANDARD_KINDS = ("gaussian_noise", "shot_noise")
STANDARD_SEVERITIES = (1, 2, 3)


# all four classes share short-period patterns so every 7x7 window carries
# orientation evidence; dominant colors are distinct but close, which keeps
# the color shortcut usable on clean data and fragile under noise
_STANDARD_BANK = (
    TextureSpec(base=(105, 108, 105), amplitude=60.0, pattern="h_stripes", period=4),
    TextureSpec(base=(128, 100, 100), amplitude=60.0, pattern="v_stripes", period=4),
    TextureSpec(base=(100, 106, 130), amplitude=60.0, pattern="checker", period=4),
    TextureSpec(base=(126, 122, 98), amplitude=60.0, pattern="d_stripes", period=4),
)


def standard_experiment_config() -> Tuple[ShapesConfig, TrainConfig]:
    """The frozen configuration of the acceptance experiment."""
    shapes = ShapesConfig(
        image_size=64,
        num_classes=4,
        shapes_per_image=(4, 6),
        shape_size=(10, 16),
        pixel_noise=2.0,
        texture_bank=_STANDARD_BANK,
        train_count=800,
        val_count=0,
        test_count=200,
        seed=714,
    )
    trainer = TrainConfig(
        epochs=15,
        batch_size=8,
        learning_rate=0.02,
        momentum=0.9,
        seed=2205,
        blend=paint.BlendConfig(alpha_min=0.5, alpha_max=0.99, fraction_painted=0.5),
    )
    return shapes, trainer


def _noise_average(report: RobustnessReport, kinds, severities) -> float:
    vals = [report.miou(k, s) for k in kinds for s in severities]
    return float(np.mean(vals))


def run_paired_experiment(
    shapes_cfg: ShapesConfig,
    train_cfg: TrainConfig,
    out_dir: Optional[str | Path] = None,
    kinds: Sequence[str] = STANDARD_KINDS,
    severities: Sequence[int] = STANDARD_SEVERITIES,
) -> ComparisonResult:
    """Train reference (no blending) and painted variants from one init seed,
    evaluate both on the same corrupted test sets, and emit a side-by-side
    report.

    Fairness: both variants share the data seed, init seed, and batch order;
    only the painting stage differs. Both see bit-identical corrupted test
    images because the evaluation seed is shared too.
    """
    if train_cfg.blend is None:
        raise ValueError("train_cfg.blend must be set; it defines the painted variant")
    train_set = generate_shapes_dataset(shapes_cfg, "train")
    test_set = generate_shapes_dataset(shapes_cfg, "test")

    ref_losses: list = []
    paint_losses: list = []
    reference = train(
        train_set,
        replace(train_cfg, blend=None),
        num_classes=shapes_cfg.num_classes,
        loss_sink=ref_losses,
    )
    painted = train(
        train_set, train_cfg, num_classes=shapes_cfg.num_classes, loss_sink=paint_losses
    )

    eval_seed = derive_seed(train_cfg.seed, "eval")
    ref_report = evaluate_robustness(reference, test_set, kinds, severities, eval_seed)
    paint_report = evaluate_robustness(painted, test_set, kinds, severities, eval_seed)

    clean_kind = kinds[0]
    noise_ref = _noise_average(ref_report, kinds, severities)
    noise_paint = _noise_average(paint_report, kinds, severities)
    summary = {
        "schema_version": 1,
        "clean_miou_reference": ref_report.miou(clean_kind, 0),
        "clean_miou_painted": paint_report.miou(clean_kind, 0),
        "noise_avg_miou_reference": noise_ref,
        "noise_avg_miou_painted": noise_paint,
        "clean_delta": paint_report.miou(clean_kind, 0) - ref_report.miou(clean_kind, 0),
        "noise_avg_delta": noise_paint - noise_ref,
        "kinds": list(kinds),
        "severities": list(severities),
        "final_loss_reference": ref_losses[-1] if ref_losses else None,
        "final_loss_painted": paint_losses[-1] if paint_losses else None,
    }

    result = ComparisonResult(
        reference=ref_report,
        painted=paint_report,
        summary=summary,
        reference_model=reference,
        painted_model=painted,
    )
    if out_dir is not None:
        _write_comparison(result, Path(out_dir))
    return result


def _write_comparison(result: ComparisonResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "comparison.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "kind", "severity", "miou"])
        for variant, report in (("reference", result.reference), ("painted", result.painted)):
            for kind in sorted(report.cells):
                for severity in sorted(report.cells[kind]):
                    w.writerow([variant, kind, severity, f"{report.miou(kind, severity):.6f}"])
    lines = ["kind severity reference painted delta", "-" * 44]
    for kind in sorted(result.reference.cells):
        for severity in sorted(result.reference.cells[kind]):
            r = result.reference.miou(kind, severity)
            p = result.painted.miou(kind, severity)
            lines.append(f"{kind} {severity} {r:.4f} {p:.4f} {p - r:+.4f}")
    (out_dir / "delta_table.txt").write_text("\n".join(lines) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(result.summary, indent=2))


# ---------------------------------------------------------------------------
# model serialization: one-line JSON header + flat little-endian float64 blob


MODEL_MAGIC = "tinyfcn-v1"


def save_model(
    model: TinyFCN,
    path: str | Path,
    seed: Optional[int] = None,
    config: Optional[TrainConfig] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "magic": MODEL_MAGIC,
        "schema_version": 1,
        "num_classes": model.num_classes,
        "layers": [list(w.shape) for w in model.weights],
        "dtype": "<f8",
        "seed": seed,
        "config_hash": hashlib.sha256(repr(config).encode()).hexdigest()
        if config is not None
        else None,
    }
    blob = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for pair in zip(model.weights, model.biases)
        for a in pair
    )
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(blob)
    return path


def load_model(path: str | Path) -> TinyFCN:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("magic") != MODEL_MAGIC:
            raise ValueError(f"{path} is not a serialized model file")
        blob = f.read()
    weights, biases = [], []
    offset = 0
    for shape in header["layers"]:
        w = np.frombuffer(blob, dtype="<f8", count=int(np.prod(shape)), offset=offset)
        offset += w.nbytes
        weights.append(w.reshape(shape).copy())
        b = np.frombuffer(blob, dtype="<f8", count=shape[0], offset=offset)
        offset += b.nbytes
        biases.append(b.copy())
    return TinyFCN(weights=weights, biases=biases, num_classes=header["num_classes"])
