"""Segmentation evaluation: confusion matrices, IoU, sensitivity, SNR, and
severity-averaged benchmark aggregation with the noise-only SNR exclusion rule.

Classes with a zero denominator are reported as NaN ("absent") and skipped by
means, never scored as 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .corrupt import CORRUPTION_FAMILIES
from .errors import (
    DimensionMismatchError,
    IdOutOfRangeError,
    MissingResultsError,
    NoEvaluableClassesError,
)
from .imagecore import Image, LabelMap

NOISE_FAMILY = CORRUPTION_FAMILIES["noise"]
SNR_THRESHOLD = 10.0


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[g][p] = pixels with ground truth g predicted as p."""

    counts: np.ndarray  # (C, C) int64
    num_classes: int

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.shape != (self.num_classes, self.num_classes):
            raise DimensionMismatchError(
                f"confusion counts shape {counts.shape} != ({self.num_classes},)*2"
            )
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), num_classes)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise DimensionMismatchError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.num_classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate_confusion(pred: LabelMap, gt: LabelMap, num_classes: int) -> ConfusionMatrix:
    """Per-pixel confusion tally; ignore-labeled ground truth is skipped."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchError("prediction and ground truth dimensions differ")
    p = pred.ids.ravel().astype(np.int64)
    g = gt.ids.ravel().astype(np.int64)
    keep = g != gt.ignore_id
    p = p[keep]
    g = g[keep]
    if p.size and int(p.max()) >= num_classes:
        raise IdOutOfRangeError(f"prediction id {int(p.max())} >= num_classes {num_classes}")
    if g.size and int(g.max()) >= num_classes:
        raise IdOutOfRangeError(f"ground-truth id {int(g.max())} >= num_classes {num_classes}")
    flat = np.bincount(g * num_classes + p, minlength=num_classes * num_classes)
    return ConfusionMatrix(flat.reshape(num_classes, num_classes), num_classes)


def merge_confusions(matrices: Sequence[ConfusionMatrix]) -> ConfusionMatrix:
    if not matrices:
        raise ValueError("no confusion matrices to merge")
    out = matrices[0]
    for m in matrices[1:]:
        out = out + m
    return out


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """IoU_c = TP / (TP + FN + FP); NaN where the denominator is zero."""
    tp = np.diag(cm.counts).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    col = cm.counts.sum(axis=0).astype(np.float64)
    denom = row + col - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(denom > 0, tp / denom, np.nan)
    return iou


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean of present classes' IoU."""
    iou = iou_per_class(cm)
    if np.isnan(iou).all():
        raise NoEvaluableClassesError("every class is absent from this confusion matrix")
    return float(np.nanmean(iou))


def sensitivity_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """s_c = TP / (TP + FN); NaN for classes with no ground-truth pixels."""
    tp = np.diag(cm.counts).astype(np.float64)
    row = cm.counts.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(row > 0, tp / row, np.nan)
    return s


def snr(clean: Image, corrupted: Image) -> float:
    """Mean clean intensity over RMS residual, on the [0, 255] scale.

    Returns +inf for identical images.
    """
    if clean.data.shape != corrupted.data.shape:
        raise DimensionMismatchError("SNR inputs must have identical shape")
    a = clean.data.astype(np.float64)
    b = corrupted.data.astype(np.float64)
    rms = math.sqrt(float(np.mean((b - a) ** 2)))
    if rms == 0.0:
        return math.inf
    return float(a.mean()) / rms


def psnr(reference: Image, other: Image) -> float:
    """Peak SNR in dB against a 255 peak; +inf for identical images."""
    if reference.data.shape != other.data.shape:
        raise DimensionMismatchError("PSNR inputs must have identical shape")
    a = reference.data.astype(np.float64)
    b = other.data.astype(np.float64)
    mse = float(np.mean((b - a) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 / math.sqrt(mse))


@dataclass
class BenchmarkReport:
    """Severity-resolved metrics plus per-kind averages over included severities."""

    per_severity: Dict[str, Dict[int, dict]]  # kind -> severity -> {"miou", "iou_per_class"}
    kind_average: Dict[str, float]  # NaN when every severity is excluded
    included_severities: Dict[str, tuple]
    excluded_severities: Dict[str, tuple]
    snr_by_kind: Dict[str, Dict[int, float]]
    snr_threshold: float
    sensitivity: Optional[Dict[str, np.ndarray]] = None  # experiment label -> per-class s
    schema_version: int = 1
    extra: dict = field(default_factory=dict)


def aggregate_benchmark(
    per_severity_results: Mapping[str, Mapping[int, Mapping]],
    snr_by_kind_severity: Optional[Mapping[str, Mapping[int, float]]] = None,
    snr_threshold: float = SNR_THRESHOLD,
) -> BenchmarkReport:
    """Average mIoU over severities 1..5 per kind.

    Noise-family kinds drop severities whose SNR falls below the threshold;
    every other family always averages all five levels. Severity 0 entries are
    carried through in the report but never enter averages.
    """
    snr_by_kind_severity = snr_by_kind_severity or {}
    per_severity: Dict[str, Dict[int, dict]] = {}
    kind_average: Dict[str, float] = {}
    included: Dict[str, tuple] = {}
    excluded: Dict[str, tuple] = {}
    snr_out: Dict[str, Dict[int, float]] = {}

    for kind, by_sev in per_severity_results.items():
        cells = {int(s): dict(v) for s, v in by_sev.items()}
        missing = [s for s in range(1, 6) if s not in cells]
        if missing:
            raise MissingResultsError(f"kind {kind!r} missing severities {missing}")
        per_severity[kind] = cells

        kind_snr = {int(s): float(v) for s, v in snr_by_kind_severity.get(kind, {}).items()}
        snr_out[kind] = kind_snr
        if kind in NOISE_FAMILY:
            missing_snr = [s for s in range(1, 6) if s not in kind_snr]
            if missing_snr:
                raise MissingResultsError(
                    f"noise kind {kind!r} missing SNR for severities {missing_snr}"
                )
            keep = tuple(s for s in range(1, 6) if kind_snr[s] >= snr_threshold)
        else:
            keep = tuple(range(1, 6))
        included[kind] = keep
        excluded[kind] = tuple(s for s in range(1, 6) if s not in keep)
        if keep:
            kind_average[kind] = float(
                np.mean([cells[s]["miou"] for s in keep])
            )
        else:
            kind_average[kind] = float("nan")

    return BenchmarkReport(
        per_severity=per_severity,
        kind_average=kind_average,
        included_severities=included,
        excluded_severities=excluded,
        snr_by_kind=snr_out,
        snr_threshold=snr_threshold,
    )


def _kind_family(kind: str) -> str:
    for family, kinds in CORRUPTION_FAMILIES.items():
        if kind in kinds:
            return family
    return "other"


def write_benchmark_csv(report: BenchmarkReport, path: str | Path) -> Path:
    """Long-form CSV: one row per (kind, severity, metric)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["schema_version", report.schema_version])
        w.writerow(["kind", "severity", "metric", "value", "excluded"])
        for kind in sorted(report.per_severity):
            for s in sorted(report.per_severity[kind]):
                cell = report.per_severity[kind][s]
                excl = s in report.excluded_severities.get(kind, ())
                w.writerow([kind, s, "miou", f"{cell['miou']:.6f}", int(excl)])
                if s in report.snr_by_kind.get(kind, {}):
                    w.writerow(
                        [kind, s, "snr", f"{report.snr_by_kind[kind][s]:.6f}", int(excl)]
                    )
            w.writerow([kind, "avg", "miou", f"{report.kind_average[kind]:.6f}", 0])
    return path


def format_benchmark_table(report: BenchmarkReport) -> str:
    """Human-readable severity-averaged table grouped by corruption family."""
    lines = []
    header = f"{'family':<9} {'kind':<16} {'severities':<12} {'mean mIoU':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    order = {f: i for i, f in enumerate(CORRUPTION_FAMILIES)}
    for kind in sorted(report.kind_average, key=lambda k: (order.get(_kind_family(k), 99), k)):
        inc = report.included_severities[kind]
        sev = ",".join(str(s) for s in inc) if inc else "none"
        avg = report.kind_average[kind]
        shown = f"{avg:9.4f}" if not math.isnan(avg) else "   absent"
        lines.append(f"{_kind_family(kind):<9} {kind:<16} {sev:<12} {shown}")
    return "\n".join(lines) + "\n"


def format_per_class_table(
    rows: Mapping[str, np.ndarray], class_names: Optional[Sequence[str]] = None
) -> str:
    """Row per experiment, column per class; NaN rendered as '-'."""
    first = next(iter(rows.values()))
    n = len(first)
    names = list(class_names) if class_names is not None else [str(c) for c in range(n)]
    label_w = max(12, max(len(r) for r in rows))
    cells = " ".join(f"{name:>8}" for name in names)
    lines = [f"{'experiment':<{label_w}} {cells}"]
    for label, values in rows.items():
        rendered = " ".join(
            f"{v:8.4f}" if not math.isnan(float(v)) else f"{'-':>8}" for v in values
        )
        lines.append(f"{label:<{label_w}} {rendered}")
    return "\n".join(lines) + "\n"
