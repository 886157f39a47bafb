"""Label-painting augmentation.

A label map is treated as a texture-free stand-in for its image: every class
(or instance) is filled with a color, and the result is alpha-blended over the
original so that per-channel ``out = alpha * painting + (1 - alpha) * original``.
Random palettes are drawn uniformly from the 8-bit sRGB cube; mean/median
palettes come from dataset-wide per-class color statistics. Batch augmentation
paints an exact fraction of each batch (half by default) and leaves the rest
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatchError,
    EmptyBatchError,
    IdOutOfRangeError,
    InconsistentInstanceMapError,
    MissingClassStatsError,
)
from .imagecore import DatasetIndex, Image, InstanceMap, LabelMap, load_image, load_label_map
from .seeding import derive_seed, make_rng, seed_bytes, seed_bytes_bulk, seed_words, stream_tag

PAINT_MODES = ("random_class", "random_instance", "class_mean", "class_median")

# alpha intervals that worked best at full scale: a narrow high-alpha band and
# a wider one, exposed as named presets for configs
ALPHA_PRESETS = {
    "narrow": (0.70, 0.99),
    "wide": (0.50, 0.99),
}


@dataclass(frozen=True)
class Palette:
    """Per-class colors plus a dedicated color for ignore pixels."""

    colors: np.ndarray  # (num_classes, 3) uint8
    ignore_color: np.ndarray  # (3,) uint8

    def __post_init__(self):
        colors = np.ascontiguousarray(self.colors, dtype=np.uint8)
        ignore = np.ascontiguousarray(self.ignore_color, dtype=np.uint8)
        if colors.ndim != 2 or colors.shape[1] != 3 or ignore.shape != (3,):
            raise ValueError("palette must be (num_classes, 3) colors and a (3,) ignore color")
        colors.flags.writeable = False
        ignore.flags.writeable = False
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "ignore_color", ignore)

    def __len__(self) -> int:
        return self.colors.shape[0]

    def lookup_table(self, ignore_id: int) -> np.ndarray:
        """256-entry color table indexed by uint8 class ID."""
        lut = np.zeros((256, 3), dtype=np.uint8)
        lut[: len(self)] = self.colors
        lut[ignore_id] = self.ignore_color
        return lut


@dataclass(frozen=True)
class BlendConfig:
    alpha_min: float
    alpha_max: float
    fraction_painted: float = 0.5
    paint_mode: str = "random_class"

    def __post_init__(self):
        if not 0.0 <= self.alpha_min <= self.alpha_max <= 1.0:
            raise ValueError(f"need 0 <= alpha_min <= alpha_max <= 1, got {self}")
        if not 0.0 < self.fraction_painted <= 1.0:
            raise ValueError(f"fraction_painted must be in (0, 1], got {self.fraction_painted}")
        if self.paint_mode not in PAINT_MODES:
            raise ValueError(f"paint_mode must be one of {PAINT_MODES}, got {self.paint_mode!r}")

    @classmethod
    def preset(cls, name: str, **kwargs) -> "BlendConfig":
        lo, hi = ALPHA_PRESETS[name]
        return cls(alpha_min=lo, alpha_max=hi, **kwargs)


@dataclass(frozen=True)
class ClassColorStats:
    """Dataset-wide per-class color statistics; absent classes hold NaN."""

    mean: np.ndarray  # (num_classes, 3) float64, NaN where absent
    median: np.ndarray  # (num_classes, 3) float64, NaN where absent
    pixel_counts: np.ndarray  # (num_classes,) int64

    @property
    def num_classes(self) -> int:
        return self.pixel_counts.shape[0]

    @property
    def present(self) -> np.ndarray:
        return self.pixel_counts > 0


@dataclass(frozen=True)
class AugmentedItem:
    image: Image
    labels: LabelMap
    painted: bool
    alpha_used: Optional[float] = None
    item_seed: Optional[int] = None
    palette: Optional[Palette] = None


@dataclass(frozen=True)
class AugmentedBatch:
    items: tuple[AugmentedItem, ...]

    @property
    def painted_count(self) -> int:
        return sum(1 for it in self.items if it.painted)


def sample_palette(num_classes: int, rng_seed: int) -> Palette:
    """Draw num_classes colors plus an ignore color, uniform over [0, 255]^3."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    # counter-mode bytes instead of a Generator: palettes are sampled per
    # painted item, so construction cost shows up directly in augment time
    raw = seed_bytes(derive_seed(rng_seed), (num_classes + 1) * 3)
    draws = raw.reshape(num_classes + 1, 3)
    return Palette(colors=draws[:num_classes], ignore_color=draws[num_classes])


def render_painting(labels: LabelMap, palette: Palette) -> Image:
    """Fill every class with its palette color; ignore pixels get the ignore color."""
    labels.validate(len(palette))
    lut = palette.lookup_table(labels.ignore_id)
    return Image(lut[labels.ids])


def render_instance_painting(
    labels: LabelMap, instances: InstanceMap, rng_seed: int
) -> Image:
    """Paint each instance with its own random color; the rest falls back to a
    per-class random palette drawn under the same seed."""
    if (labels.height, labels.width) != (instances.height, instances.width):
        raise DimensionMismatchError("instance map dimensions differ from label map")
    inst_ids = instances.ids
    fg = inst_ids != instances.background_id
    # each instance must live inside a single class
    valid = fg & (labels.ids != labels.ignore_id)
    if valid.any():
        pairs = np.unique(
            np.stack([inst_ids[valid].astype(np.int64), labels.ids[valid].astype(np.int64)]),
            axis=1,
        )
        uniq, counts = np.unique(pairs[0], return_counts=True)
        if (counts > 1).any():
            bad = int(uniq[counts > 1][0])
            raise InconsistentInstanceMapError(f"instance {bad} spans multiple classes")

    # fallback palette covers the full uint8 ID range so it never depends on
    # which classes happen to be present
    fallback = sample_palette(256, derive_seed(rng_seed, "class-fallback"))
    out = np.array(fallback.lookup_table(labels.ignore_id)[labels.ids])
    for iid in np.unique(inst_ids[fg]):
        color_rng = make_rng(rng_seed, "instance", int(iid))
        out[inst_ids == iid] = color_rng.integers(0, 256, size=3, dtype=np.uint8)
    return Image(out)


def _stats_from_pairs(
    pairs: Iterable[tuple[Image, LabelMap]], num_classes: int
) -> ClassColorStats:
    sums = np.zeros((num_classes, 3), dtype=np.float64)
    counts = np.zeros(num_classes, dtype=np.int64)
    buckets: list[list[np.ndarray]] = [[] for _ in range(num_classes)]
    for img, labels in pairs:
        if (img.height, img.width) != (labels.height, labels.width):
            raise DimensionMismatchError("image and label dimensions differ")
        flat_ids = labels.ids.ravel()
        flat_rgb = img.data.reshape(-1, 3)
        for c in range(num_classes):
            sel = flat_ids == c
            n = int(sel.sum())
            if n == 0:
                continue
            pix = flat_rgb[sel]
            sums[c] += pix.sum(axis=0, dtype=np.float64)
            counts[c] += n
            buckets[c].append(pix)
    mean = np.full((num_classes, 3), np.nan)
    median = np.full((num_classes, 3), np.nan)
    for c in range(num_classes):
        if counts[c] > 0:
            mean[c] = sums[c] / counts[c]
            median[c] = np.median(np.concatenate(buckets[c]).astype(np.float64), axis=0)
    return ClassColorStats(mean=mean, median=median, pixel_counts=counts)


def compute_class_color_stats(index: DatasetIndex) -> ClassColorStats:
    """Per-class per-channel mean and median over every pixel of the dataset."""
    if len(index) == 0:
        raise EmptyBatchError("dataset index is empty")

    def _iter():
        for s in index.samples:
            yield load_image(s.image_path), load_label_map(s.label_path, index.ignore_id)

    return _stats_from_pairs(_iter(), index.num_classes)


def class_color_stats_from_pairs(
    pairs: Sequence[tuple[Image, LabelMap]], num_classes: int
) -> ClassColorStats:
    """In-memory variant of :func:`compute_class_color_stats`."""
    if len(pairs) == 0:
        raise EmptyBatchError("no image/label pairs given")
    return _stats_from_pairs(pairs, num_classes)


def stat_palette(
    stats: ClassColorStats, mode: str, ignore_color: Sequence[int] = (0, 0, 0)
) -> Palette:
    """Palette holding the rounded per-class mean or median colors."""
    if mode == "mean":
        values = stats.mean
    elif mode == "median":
        values = stats.median
    else:
        raise ValueError(f"mode must be 'mean' or 'median', got {mode!r}")
    colors = np.where(np.isnan(values), 0.0, values)
    return Palette(
        colors=kernels.round_to_u8(colors),
        ignore_color=np.asarray(ignore_color, dtype=np.uint8),
    )


def render_stat_painting(
    labels: LabelMap,
    stats: ClassColorStats,
    mode: str,
    ignore_color: Sequence[int] = (0, 0, 0),
) -> Image:
    """Fill every class with its rounded dataset-wide mean or median color."""
    labels.validate(stats.num_classes)
    present_here = np.unique(labels.ids)
    present_here = present_here[present_here != labels.ignore_id]
    missing = present_here[~stats.present[present_here]]
    if missing.size:
        raise MissingClassStatsError(f"no color stats for class {int(missing[0])}")
    palette = stat_palette(stats, mode, ignore_color)
    return render_painting(labels, palette)


def alpha_blend(original: Image, painting: Image, alpha: float) -> Image:
    """Blend ``alpha`` of the painting over the original.

    Channels are computed in float64 and rounded half away from zero, so
    alpha 0 returns the original and alpha 1 the painting bit-exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if original.data.shape != painting.data.shape:
        raise DimensionMismatchError(
            f"blend shapes differ: {original.data.shape} vs {painting.data.shape}"
        )
    v = alpha * painting.data.astype(np.float64) + (1.0 - alpha) * original.data.astype(np.float64)
    return Image(np.floor(v + 0.5).astype(np.uint8))


def sample_alpha(cfg: BlendConfig, rng_seed: int) -> float:
    """Draw alpha uniformly from [alpha_min, alpha_max]."""
    if cfg.alpha_min == cfg.alpha_max:
        return cfg.alpha_min
    return float(make_rng(rng_seed).uniform(cfg.alpha_min, cfg.alpha_max))


def _painted_count(fraction: float, n: int) -> int:
    # round half up, so a lone image in an odd batch still gets painted
    return int(np.floor(fraction * n + 0.5))


BatchItem = tuple  # (Image, LabelMap) or (Image, LabelMap, InstanceMap | None)

_PALETTE_TAG = stream_tag("palette")


def augment_batch(
    batch: Sequence[BatchItem],
    cfg: BlendConfig,
    num_classes: int,
    stats: Optional[ClassColorStats] = None,
    rng_seed: int = 0,
) -> AugmentedBatch:
    """Paint an exact fraction of the batch and pass the rest through untouched.

    The painted subset is chosen uniformly without replacement. Each painted
    item draws its palette from a stream derived from (rng_seed, item index),
    which is what the provenance log reports; alphas come from one batch-wide
    stream so the per-batch cost stays near the blend kernel itself.
    """
    n = len(batch)
    if n == 0:
        raise EmptyBatchError("cannot augment an empty batch")
    if cfg.paint_mode in ("class_mean", "class_median") and stats is None:
        raise MissingClassStatsError(f"paint_mode {cfg.paint_mode} requires class color stats")

    # subset and alphas come straight off the counter-mode word stream: the k
    # smallest of n random 64-bit keys form a uniform subset draw, and
    # (word >> 11) * 2^-53 a uniform float; plain ints keep the per-batch
    # bookkeeping well under the cost of one blend kernel call
    k = _painted_count(cfg.fraction_painted, n)
    keys = seed_words(derive_seed(rng_seed, "batch"), n)
    painted = frozenset(sorted(range(n), key=keys.__getitem__)[:k])
    if cfg.alpha_min == cfg.alpha_max:
        alphas = [cfg.alpha_min] * k
    else:
        span = cfg.alpha_max - cfg.alpha_min
        alphas = [
            cfg.alpha_min + span * ((w >> 11) * 2.0**-53)
            for w in seed_words(derive_seed(rng_seed, "alpha"), k)
        ]

    paint_mode = cfg.paint_mode
    item_seeds = [derive_seed(rng_seed, i) for i in sorted(painted)]
    palette_bytes = None
    if paint_mode == "random_class" and k:
        # palette bytes for the whole painted subset in one mix; each row is
        # exactly what sample_palette draws per item under the pinned seeds
        palette_bytes = seed_bytes_bulk(
            [derive_seed(derive_seed(s, _PALETTE_TAG)) for s in item_seeds],
            (num_classes + 1) * 3,
        )

    items = []
    drawn = 0
    for i, entry in enumerate(batch):
        img, labels = entry[0], entry[1]
        instances = entry[2] if len(entry) > 2 else None
        if i not in painted:
            items.append(AugmentedItem(image=img, labels=labels, painted=False))
            continue

        item_seed = item_seeds[drawn]
        alpha = alphas[drawn]

        if paint_mode == "random_instance":
            painting_seed = derive_seed(item_seed, _PALETTE_TAG)
            if instances is None:
                raise InconsistentInstanceMapError(f"batch item {i} has no instance map")
            painting = render_instance_painting(labels, instances, painting_seed)
            blended = alpha_blend(img, painting, alpha)
            palette = None
        else:
            if paint_mode == "random_class":
                row = palette_bytes[drawn]
                palette = Palette(
                    colors=row[: 3 * num_classes].reshape(num_classes, 3),
                    ignore_color=row[3 * num_classes : 3 * num_classes + 3],
                )
            else:
                mode = "mean" if paint_mode == "class_mean" else "median"
                ignore_color = make_rng(item_seed, "ignore-color").integers(
                    0, 256, size=3, dtype=np.uint8
                )
                palette = stat_palette(stats, mode, ignore_color)
            labels.validate(len(palette))
            lut = palette.lookup_table(labels.ignore_id)
            blended = Image(kernels.paint_blend(img.data, labels.ids, lut, alpha))
        drawn += 1

        items.append(
            AugmentedItem(
                image=blended,
                labels=labels,
                painted=True,
                alpha_used=alpha,
                item_seed=item_seed,
                palette=palette,
            )
        )
    return AugmentedBatch(items=tuple(items))


def provenance_records(batch: AugmentedBatch, cfg: BlendConfig) -> list[dict]:
    """One JSON-ready record per painted item, for reproducibility audits."""
    records = []
    for i, item in enumerate(batch.items):
        if not item.painted:
            continue
        records.append(
            {
                "index": i,
                "paint_mode": cfg.paint_mode,
                "alpha": item.alpha_used,
                "item_seed": item.item_seed,
                "palette_seed": derive_seed(item.item_seed, "palette"),
            }
        )
    return records
