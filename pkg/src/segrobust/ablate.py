"""Class-level texture ablations for shape-bias analysis.

Each mode destroys the texture of one target class while leaving every other
pixel bit-identical (silhouette excepted, which blacks them out): replace the
class by its dataset-wide mean color, drown it in strong Gaussian noise, blur
it severely, or reduce the whole image to a two-color silhouette.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .corrupt import resolve_jobs
from .errors import MissingClassStatsError
from .imagecore import DatasetIndex, Image, LabelMap, load_image, load_label_map, save_image
from .paint import ClassColorStats, compute_class_color_stats
from .seeding import derive_seed, make_rng

ABLATION_MODES = ("class_mean_replace", "class_noise", "class_blur", "silhouette")


@dataclass(frozen=True)
class AblationSpec:
    """One ablation: mode plus its mode-specific knob.

    ``target_class`` may be None in a template that a suite run sweeps over
    all classes; applying a spec requires it to be set.
    """

    mode: str
    target_class: Optional[int] = None
    scale: Optional[float] = None  # class_noise: noise std in [0,1] units (1.0 => 255)
    sigma: Optional[float] = None  # class_blur: blur std in pixels

    def __post_init__(self):
        if self.mode not in ABLATION_MODES:
            raise ValueError(f"mode must be one of {ABLATION_MODES}, got {self.mode!r}")
        if self.mode == "class_noise":
            if self.scale is None or self.scale <= 0:
                raise ValueError("class_noise needs scale > 0")
        elif self.scale is not None:
            raise ValueError(f"scale only applies to class_noise, not {self.mode}")
        if self.mode == "class_blur":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("class_blur needs sigma > 0")
        elif self.sigma is not None:
            raise ValueError(f"sigma only applies to class_blur, not {self.mode}")


def _class_mask(labels: LabelMap, class_id: int) -> np.ndarray:
    return labels.ids == class_id


def _mean_color_u8(stats: ClassColorStats, class_id: int) -> np.ndarray:
    if not 0 <= class_id < stats.num_classes or not stats.present[class_id]:
        raise MissingClassStatsError(f"no color stats for class {class_id}")
    return kernels.round_to_u8(stats.mean[class_id])


def ablate_class_mean(
    img: Image, labels: LabelMap, class_id: int, stats: ClassColorStats
) -> Image:
    """Replace the class's pixels by its rounded dataset-wide mean color."""
    color = _mean_color_u8(stats, class_id)
    out = np.array(img.data)
    out[_class_mask(labels, class_id)] = color
    return Image(out)


def ablate_class_noise(
    img: Image, labels: LabelMap, class_id: int, scale: float, rng_seed: int
) -> Image:
    """Add strong Gaussian noise (std scale*255) to the class's pixels only."""
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    mask = _class_mask(labels, class_id)
    out = np.array(img.data)
    n = int(mask.sum())
    if n:
        rng = make_rng(rng_seed, "class-noise", class_id)
        noisy = out[mask].astype(np.float64) + rng.normal(0.0, scale * 255.0, (n, 3))
        out[mask] = kernels.round_to_u8(noisy)
    return Image(out)


def ablate_class_blur(img: Image, labels: LabelMap, class_id: int, sigma: float) -> Image:
    """Composite a severely blurred copy of the image into the class mask."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    mask = _class_mask(labels, class_id)
    out = np.array(img.data)
    if mask.any():
        radius = int(math.ceil(3.0 * sigma))
        t = np.arange(-radius, radius + 1, dtype=np.float64)
        w = np.exp(-(t * t) / (2.0 * sigma * sigma))
        w /= w.sum()
        blurred = kernels.correlate_sep(img.data.astype(np.float64), w)
        out[mask] = kernels.round_to_u8(blurred)[mask]
    return Image(out)


def ablate_silhouette(
    img: Image, labels: LabelMap, class_id: int, stats: ClassColorStats
) -> Image:
    """Class pixels get the mean color, everything else black: at most 2 colors."""
    color = _mean_color_u8(stats, class_id)
    out = np.zeros_like(img.data)
    out[_class_mask(labels, class_id)] = color
    return Image(out)


def apply_ablation(
    img: Image,
    labels: LabelMap,
    spec: AblationSpec,
    stats: Optional[ClassColorStats] = None,
    rng_seed: int = 0,
) -> Image:
    """Dispatch one fully specified ablation."""
    if spec.target_class is None:
        raise ValueError("spec.target_class must be set to apply an ablation")
    c = spec.target_class
    if spec.mode == "class_mean_replace":
        if stats is None:
            raise MissingClassStatsError("class_mean_replace requires class color stats")
        return ablate_class_mean(img, labels, c, stats)
    if spec.mode == "class_noise":
        return ablate_class_noise(img, labels, c, spec.scale, rng_seed)
    if spec.mode == "class_blur":
        return ablate_class_blur(img, labels, c, spec.sigma)
    if stats is None:
        raise MissingClassStatsError("silhouette requires class color stats")
    return ablate_silhouette(img, labels, c, stats)


MANIFEST_NAME = "ablation_manifest.json"


def generate_ablation_suite(
    index: DatasetIndex,
    template: AblationSpec,
    out_root: str | Path,
    base_seed: int = 0,
    stats: Optional[ClassColorStats] = None,
    jobs: Optional[int] = None,
) -> Path:
    """Emit the template's ablation for every sample and every class ID under
    ``<out_root>/<mode>/<class_id>/<relative image path>``, plus a manifest.

    Each output depends only on (base_seed, class, sample index); parallel runs
    are byte-identical to serial ones. Classes absent from stats fall back to a
    black replacement color for the stat modes, so coverage stays exhaustive.
    """
    needs_stats = template.mode in ("class_mean_replace", "silhouette")
    if needs_stats and stats is None:
        stats = compute_class_color_stats(index)

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    manifest_path = out_root / MANIFEST_NAME
    header = {
        "schema_version": 1,
        "mode": template.mode,
        "scale": template.scale,
        "sigma": template.sigma,
        "base_seed": base_seed,
        "num_classes": index.num_classes,
        "num_samples": len(index),
        "complete": False,
    }
    manifest_path.write_text(json.dumps(header, indent=2))

    # pad absent classes with black stats so every class directory is emitted
    if needs_stats:
        mean = np.array(stats.mean)
        mean[~stats.present] = 0.0
        counts = np.array(stats.pixel_counts)
        counts[counts == 0] = 1
        stats = ClassColorStats(mean=mean, median=np.array(stats.median), pixel_counts=counts)

    tasks = [
        (c, i, sample)
        for c in range(index.num_classes)
        for i, sample in enumerate(index.samples)
    ]

    def run_one(task):
        c, i, sample = task
        rel = index.relative_sample_path(sample)
        dest = out_root / template.mode / str(c) / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        spec = replace(template, target_class=c)
        seed = derive_seed(base_seed, template.mode, c, i)
        img = load_image(sample.image_path)
        labels = load_label_map(sample.label_path, index.ignore_id)
        save_image(apply_ablation(img, labels, spec, stats, seed), dest)
        return {
            "class": c,
            "index": i,
            "image": str(Path(template.mode) / str(c) / rel),
            "label": os.path.relpath(sample.label_path, index.root),
            "seed": seed,
        }

    n_jobs = resolve_jobs(jobs)
    if n_jobs == 1:
        entries = [run_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            entries = list(pool.map(run_one, tasks))

    header["complete"] = True
    header["entries"] = entries
    manifest_path.write_text(json.dumps(header, indent=2))
    return manifest_path


def table_rows_for_ablations(scales: Sequence[float] = (0.5, 1.0),
                             sigmas: Sequence[float] = (20.0, 30.0)) -> list[AblationSpec]:
    """The standard row set: mean replacement, two noise scales, two blur widths."""
    rows = [AblationSpec(mode="class_mean_replace")]
    rows += [AblationSpec(mode="class_noise", scale=s) for s in scales]
    rows += [AblationSpec(mode="class_blur", sigma=s) for s in sigmas]
    rows.append(AblationSpec(mode="silhouette"))
    return rows
