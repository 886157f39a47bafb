"""Shared fixture builders for the test suite."""

import numpy as np

from segrobust.imagecore import (
    Image,
    LabelMap,
    index_dataset,
    save_image,
    save_label_map,
)
from segrobust.seeding import make_rng


def textured_image(seed: int, size: int = 64) -> Image:
    """Blocky color texture plus grain; busy enough for corruption tests."""
    rng = make_rng(seed, "img")
    blocks = rng.integers(0, 256, size=(size // 8, size // 8, 3)).astype(np.float64)
    img = np.kron(blocks, np.ones((8, 8, 1)))
    img += rng.normal(0.0, 12.0, img.shape)
    return Image(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def constant_image(value, size: int = 64) -> Image:
    return Image(np.full((size, size, 3), value, dtype=np.uint8))


def random_labels(
    seed: int,
    size: int = 64,
    num_classes: int = 8,
    ignore_fraction: float = 0.05,
    ignore_id: int = 255,
) -> LabelMap:
    rng = make_rng(seed, "lab")
    ids = rng.integers(0, num_classes, size=(size, size)).astype(np.uint8)
    if ignore_fraction > 0:
        ids[rng.random((size, size)) < ignore_fraction] = ignore_id
    return LabelMap(ids, ignore_id=ignore_id)


def write_flat_dataset(root, count: int = 4, size: int = 32, num_classes: int = 5, seed: int = 0):
    """Write a small images/ + labels/ tree and return its index."""
    for i in range(count):
        save_image(textured_image(seed * 1000 + i, size), root / "images" / f"s{i:03d}.png")
        save_label_map(
            random_labels(seed * 1000 + i, size, num_classes, ignore_fraction=0.0),
            root / "labels" / f"s{i:03d}.png",
        )
    return index_dataset(root, layout="flat", num_classes=num_classes)
