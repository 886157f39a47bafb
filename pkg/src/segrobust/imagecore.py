"""Raster types, PNG I/O, and dataset-tree ingestion.

Storage is fixed to 8-bit PNG for both images and labels; labels hold raw
class IDs in a single channel (the Cityscapes labelIds convention). 16-bit
sources are rejected rather than truncated. The class count is caller
supplied everywhere; Cityscapes-style evaluation conventionally uses 19
classes with ignore ID 255.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image as _PILImage
from PIL import UnidentifiedImageError

from .errors import (
    DecodeError,
    EmptyDatasetError,
    IdOutOfRangeError,
    UnpairedSampleError,
    UnsupportedFormatError,
)

MANIFEST_SCHEMA_VERSION = 1


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Image:
    """H x W x 3 raster of 8-bit sRGB intensities."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"image data must be (H, W, 3), got {self.data.shape}")
        if self.data.dtype != np.uint8:
            raise ValueError(f"image data must be uint8, got {self.data.dtype}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelMap:
    """H x W raster of class IDs with a distinguished ignore ID."""

    ids: np.ndarray
    ignore_id: int = 255

    def __post_init__(self):
        if self.ids.ndim != 2:
            raise ValueError(f"label ids must be (H, W), got {self.ids.shape}")
        if self.ids.dtype != np.uint8:
            raise ValueError(f"label ids must be uint8, got {self.ids.dtype}")
        object.__setattr__(self, "ids", _freeze(self.ids))

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    def validate(self, num_classes: int) -> None:
        """Reject IDs outside [0, num_classes) that are not the ignore ID."""
        ids = self.ids
        # single max() settles the common all-valid case without temporaries
        if int(ids.max(initial=0)) < num_classes:
            return
        bad = (ids >= num_classes) & (ids != self.ignore_id)
        if bad.any():
            offender = int(ids[bad][0])
            raise IdOutOfRangeError(
                f"label id {offender} outside [0, {num_classes}) and != ignore {self.ignore_id}"
            )


@dataclass(frozen=True)
class InstanceMap:
    """H x W raster of instance IDs; background uses ``background_id``."""

    ids: np.ndarray
    background_id: int = 0

    def __post_init__(self):
        if self.ids.ndim != 2:
            raise ValueError(f"instance ids must be (H, W), got {self.ids.shape}")
        object.__setattr__(self, "ids", _freeze(self.ids.astype(np.int32, copy=False)))

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]


@dataclass(frozen=True)
class Sample:
    image_path: Path
    label_path: Path
    instance_path: Optional[Path] = None


@dataclass(frozen=True)
class DatasetIndex:
    """Lexicographically ordered (image, label, instance?) triples under a root."""

    root: Path
    samples: tuple[Sample, ...]
    num_classes: int = 19
    ignore_id: int = 255

    def __len__(self) -> int:
        return len(self.samples)

    def relative_sample_path(self, sample: Sample) -> Path:
        try:
            return sample.image_path.relative_to(self.root)
        except ValueError:
            return Path(sample.image_path.name)


# ---------------------------------------------------------------------------
# PNG I/O

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _read_png_header(path: Path) -> tuple[int, int]:
    """Return (bit depth, color type) from the IHDR chunk."""
    with open(path, "rb") as fh:
        head = fh.read(26)
    if len(head) < 26 or head[:8] != _PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise DecodeError(f"{path}: not a PNG file")
    return head[24], head[25]


def _open_png(path: Path) -> _PILImage.Image:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    bit_depth, _ = _read_png_header(path)
    if bit_depth > 8:
        raise UnsupportedFormatError(f"{path}: {bit_depth}-bit PNG not supported")
    try:
        img = _PILImage.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return img


def load_image(path: Path | str) -> Image:
    """Load a 3- or 4-channel 8-bit PNG; the alpha channel is discarded."""
    img = _open_png(Path(path))
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise UnsupportedFormatError(f"{path}: mode {img.mode} is not a color image")
    return Image(np.asarray(img, dtype=np.uint8))


def save_image(img: Image, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _PILImage.fromarray(np.asarray(img.data)).save(path, format="PNG")


def load_label_map(path: Path | str, ignore_id: int = 255) -> LabelMap:
    """Load a single-channel 8-bit PNG of raw class IDs, no remapping."""
    img = _open_png(Path(path))
    if img.mode != "L":
        raise UnsupportedFormatError(f"{path}: mode {img.mode} is not a single-channel label file")
    return LabelMap(np.asarray(img, dtype=np.uint8), ignore_id=ignore_id)


def save_label_map(labels: LabelMap, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _PILImage.fromarray(np.asarray(labels.ids), mode="L").save(path, format="PNG")


def load_instance_map(path: Path | str, background_id: int = 0) -> InstanceMap:
    """Load a single-channel 8-bit PNG of instance IDs."""
    img = _open_png(Path(path))
    if img.mode != "L":
        raise UnsupportedFormatError(f"{path}: mode {img.mode} is not a single-channel instance file")
    return InstanceMap(np.asarray(img, dtype=np.uint8), background_id=background_id)


# ---------------------------------------------------------------------------
# dataset indexing

_CITYSCAPES_IMG_SUFFIX = "_leftImg8bit.png"
_CITYSCAPES_LABEL_SUFFIX = "_gtFine_labelIds.png"
_CITYSCAPES_INSTANCE_SUFFIX = "_gtFine_instanceIds.png"


def _index_flat(root: Path) -> list[Sample]:
    images = {p.stem: p for p in sorted((root / "images").glob("*.png"))}
    labels = {p.stem: p for p in sorted((root / "labels").glob("*.png"))}
    for stem in images.keys() - labels.keys():
        raise UnpairedSampleError(f"image {images[stem]} has no label")
    for stem in labels.keys() - images.keys():
        raise UnpairedSampleError(f"label {labels[stem]} has no image")
    return [Sample(images[s], labels[s]) for s in sorted(images)]


def _index_cityscapes(root: Path) -> list[Sample]:
    img_root = root / "leftImg8bit"
    samples = []
    for img_path in sorted(img_root.rglob(f"*{_CITYSCAPES_IMG_SUFFIX}")):
        rel = img_path.relative_to(img_root)
        stem = img_path.name[: -len(_CITYSCAPES_IMG_SUFFIX)]
        gt_dir = root / "gtFine" / rel.parent
        label_path = gt_dir / f"{stem}{_CITYSCAPES_LABEL_SUFFIX}"
        if not label_path.exists():
            raise UnpairedSampleError(f"image {img_path} has no label {label_path}")
        instance_path = gt_dir / f"{stem}{_CITYSCAPES_INSTANCE_SUFFIX}"
        samples.append(
            Sample(img_path, label_path, instance_path if instance_path.exists() else None)
        )
    return samples


def index_dataset(
    root: Path | str,
    layout: str = "flat",
    num_classes: int = 19,
    ignore_id: int = 255,
) -> DatasetIndex:
    """Index a dataset tree; order is lexicographic by image path.

    ``cityscapes`` layout expects leftImg8bit/<split>/<city>/ paired with
    gtFine/; ``flat`` expects images/*.png and labels/*.png sharing stems.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(root)
    if layout == "flat":
        samples = _index_flat(root)
    elif layout == "cityscapes":
        samples = _index_cityscapes(root)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if not samples:
        raise EmptyDatasetError(f"no samples found under {root} (layout={layout})")
    return DatasetIndex(root, tuple(samples), num_classes=num_classes, ignore_id=ignore_id)


def index_to_manifest(index: DatasetIndex, path: Path | str) -> None:
    """Serialize an index to a JSON manifest for cache reuse."""
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "root": str(index.root),
        "num_classes": index.num_classes,
        "ignore_id": index.ignore_id,
        "samples": [
            {
                "image": str(s.image_path),
                "label": str(s.label_path),
                **({"instance": str(s.instance_path)} if s.instance_path else {}),
            }
            for s in index.samples
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))


def index_from_manifest(path: Path | str) -> DatasetIndex:
    doc = json.loads(Path(path).read_text())
    samples = tuple(
        Sample(
            Path(s["image"]),
            Path(s["label"]),
            Path(s["instance"]) if "instance" in s else None,
        )
        for s in doc["samples"]
    )
    return DatasetIndex(
        Path(doc["root"]), samples, num_classes=doc["num_classes"], ignore_id=doc["ignore_id"]
    )
