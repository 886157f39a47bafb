import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import constant_image, random_labels, textured_image
from segrobust import metrics
from segrobust.errors import (
    IdOutOfRangeError,
    MissingResultsError,
    NoEvaluableClassesError,
)
from segrobust.imagecore import Image, LabelMap


def brute_confusion(pred, gt, num_classes, ignore_id=255):
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    for g, p in zip(gt.reshape(-1), pred.reshape(-1)):
        if g == ignore_id:
            continue
        m[g, p] += 1
    return m


def test_confusion_matches_brute_force(rng):
    for trial in range(10):
        gt = random_labels(trial, 24, 6, ignore_fraction=0.1)
        pred = random_labels(trial + 100, 24, 6, ignore_fraction=0.0)
        cm = metrics.accumulate_confusion(pred, gt, 6)
        np.testing.assert_array_equal(cm.counts, brute_confusion(pred.ids, gt.ids, 6))


def test_confusion_rejects_out_of_range():
    gt = LabelMap(np.zeros((4, 4), dtype=np.uint8))
    bad_pred = LabelMap(np.full((4, 4), 9, dtype=np.uint8))
    with pytest.raises(IdOutOfRangeError):
        metrics.accumulate_confusion(bad_pred, gt, 4)


def test_confusion_merge_and_add():
    gt = random_labels(1, 16, 4, 0.0)
    pred = random_labels(2, 16, 4, 0.0)
    cm = metrics.accumulate_confusion(pred, gt, 4)
    both = metrics.merge_confusions([cm, cm])
    np.testing.assert_array_equal(both.counts, cm.counts * 2)
    np.testing.assert_array_equal((cm + cm).counts, both.counts)


def test_iou_and_sensitivity_hand_fixture():
    # class 0: TP=3, FN=1, FP=2 -> iou 3/6, sensitivity 3/4
    counts = np.array([[3, 1], [2, 5]], dtype=np.int64)
    cm = metrics.ConfusionMatrix(counts, counts.shape[0])
    iou = metrics.iou_per_class(cm)
    sens = metrics.sensitivity_per_class(cm)
    assert iou[0] == pytest.approx(3 / 6, abs=0)
    assert sens[0] == pytest.approx(0.75, abs=0)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_iou_never_exceeds_sensitivity(seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 50, size=(5, 5)).astype(np.int64)
    cm = metrics.ConfusionMatrix(counts, counts.shape[0])
    iou = metrics.iou_per_class(cm)
    sens = metrics.sensitivity_per_class(cm)
    ok = ~np.isnan(iou)
    assert (iou[ok] <= sens[ok] + 1e-15).all()


def test_absent_class_nan_and_mean_iou():
    counts = np.zeros((3, 3), dtype=np.int64)
    counts[0, 0] = 10
    counts[1, 1] = 5
    counts[1, 0] = 5
    cm = metrics.ConfusionMatrix(counts, counts.shape[0])
    iou = metrics.iou_per_class(cm)
    assert math.isnan(iou[2])
    assert metrics.mean_iou(cm) == pytest.approx((10 / 15 + 0.5) / 2)


def test_mean_iou_all_absent_raises():
    cm = metrics.ConfusionMatrix.zeros(4)
    with pytest.raises(NoEvaluableClassesError):
        metrics.mean_iou(cm)


def test_snr_contract_values():
    clean = constant_image(100, 32)
    assert metrics.snr(clean, clean) == math.inf
    shifted = Image(np.full((32, 32, 3), 110, dtype=np.uint8))
    assert metrics.snr(clean, shifted) == pytest.approx(10.0, abs=1e-12)


def test_snr_of_known_noise():
    rng = np.random.default_rng(5)
    base = np.full((128, 128, 3), 128.0)
    noisy = np.clip(np.floor(base + rng.normal(0, 25.5, base.shape) + 0.5), 0, 255)
    clean = Image(base.astype(np.uint8))
    corrupted = Image(noisy.astype(np.uint8))
    got = metrics.snr(clean, corrupted)
    assert abs(got - 128.0 / 25.5) / (128.0 / 25.5) < 0.05


def test_psnr_exact_formula():
    clean = constant_image(50, 16)
    other = Image(np.full((16, 16, 3), 54, dtype=np.uint8))  # rmse 4
    assert metrics.psnr(clean, other) == pytest.approx(20 * math.log10(255 / 4), abs=1e-12)
    assert metrics.psnr(clean, clean) == math.inf


def _cells(mious):
    return {s: {"miou": m, "iou_per_class": [m]} for s, m in zip(range(1, 6), mious)}


def test_snr_gating_drops_low_severities():
    results = {"gaussian_noise": _cells([0.8, 0.7, 0.6, 0.5, 0.4])}
    snrs = {"gaussian_noise": {1: 31.0, 2: 16.0, 3: 8.0, 4: 4.0, 5: 2.0}}
    rep = metrics.aggregate_benchmark(results, snrs)
    assert rep.included_severities["gaussian_noise"] == (1, 2)
    assert rep.excluded_severities["gaussian_noise"] == (3, 4, 5)
    assert rep.kind_average["gaussian_noise"] == pytest.approx(0.75)


def test_blur_kinds_never_excluded():
    results = {"defocus_blur": _cells([0.8, 0.7, 0.6, 0.5, 0.4])}
    snrs = {"defocus_blur": {1: 31.0, 2: 16.0, 3: 8.0, 4: 4.0, 5: 2.0}}
    rep = metrics.aggregate_benchmark(results, snrs)
    assert rep.included_severities["defocus_blur"] == (1, 2, 3, 4, 5)
    assert rep.kind_average["defocus_blur"] == pytest.approx(0.6)


def test_all_severities_excluded_gives_nan():
    results = {"shot_noise": _cells([0.8, 0.7, 0.6, 0.5, 0.4])}
    snrs = {"shot_noise": {s: 1.0 for s in range(1, 6)}}
    rep = metrics.aggregate_benchmark(results, snrs)
    assert math.isnan(rep.kind_average["shot_noise"])


def test_missing_severity_or_snr_raises():
    partial = {"contrast": {s: {"miou": 0.5} for s in (1, 2, 3)}}
    with pytest.raises(MissingResultsError):
        metrics.aggregate_benchmark(partial)
    no_snr = {"impulse_noise": _cells([0.8, 0.7, 0.6, 0.5, 0.4])}
    with pytest.raises(MissingResultsError):
        metrics.aggregate_benchmark(no_snr)


def test_csv_round_trip_and_tables(tmp_path):
    results = {
        "gaussian_noise": _cells([0.8, 0.7, 0.6, 0.5, 0.4]),
        "fog": _cells([0.9, 0.85, 0.8, 0.75, 0.7]),
    }
    snrs = {"gaussian_noise": {1: 31.0, 2: 16.0, 3: 8.0, 4: 4.0, 5: 2.0}}
    rep = metrics.aggregate_benchmark(results, snrs)
    path = metrics.write_benchmark_csv(rep, tmp_path / "bench.csv")
    text = path.read_text()
    assert "schema_version" in text
    assert "gaussian_noise" in text and "fog" in text

    table = metrics.format_benchmark_table(rep)
    assert "noise" in table and "weather" in table

    per_class = metrics.format_per_class_table({"gaussian_noise": np.array([0.5, 0.6])})
    assert "gaussian_noise" in per_class
