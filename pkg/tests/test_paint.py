import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_labels, textured_image, write_flat_dataset
from segrobust import paint
from segrobust.errors import (
    DimensionMismatchError,
    InconsistentInstanceMapError,
    MissingClassStatsError,
)
from segrobust.imagecore import Image, InstanceMap, LabelMap
from segrobust.seeding import make_rng


def test_blend_config_validation():
    with pytest.raises(ValueError):
        paint.BlendConfig(alpha_min=0.8, alpha_max=0.5)
    with pytest.raises(ValueError):
        paint.BlendConfig(alpha_min=-0.1, alpha_max=0.5)
    with pytest.raises(ValueError):
        paint.BlendConfig(0.5, 0.9, fraction_painted=1.5)
    with pytest.raises(ValueError):
        paint.BlendConfig(0.5, 0.9, paint_mode="nope")
    cfg = paint.BlendConfig.preset("wide")
    assert (cfg.alpha_min, cfg.alpha_max) == paint.ALPHA_PRESETS["wide"]


def test_sample_palette_shape_and_determinism():
    p1 = paint.sample_palette(7, rng_seed=11)
    p2 = paint.sample_palette(7, rng_seed=11)
    assert p1.colors.shape == (7, 3) and p1.colors.dtype == np.uint8
    np.testing.assert_array_equal(p1.colors, p2.colors)
    np.testing.assert_array_equal(p1.ignore_color, p2.ignore_color)
    assert not np.array_equal(p1.colors, paint.sample_palette(7, rng_seed=12).colors)


def test_palette_colors_uniform_chi_square():
    # pooled channel values over many palettes should look uniform on [0, 256)
    draws = np.concatenate(
        [paint.sample_palette(16, rng_seed=s).colors.reshape(-1) for s in range(200)]
    )
    counts, _ = np.histogram(draws, bins=16, range=(0, 256))
    expected = draws.size / 16
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 15 dof; 1e-6 two-sided quantile is ~60
    assert chi2 < 60.0, chi2


def test_render_painting_uses_lut_and_ignore_color():
    lm = LabelMap(np.array([[0, 1], [2, 255]], dtype=np.uint8))
    pal = paint.sample_palette(3, rng_seed=0)
    img = paint.render_painting(lm, pal)
    np.testing.assert_array_equal(img.data[0, 0], pal.colors[0])
    np.testing.assert_array_equal(img.data[0, 1], pal.colors[1])
    np.testing.assert_array_equal(img.data[1, 0], pal.colors[2])
    np.testing.assert_array_equal(img.data[1, 1], pal.ignore_color)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(min_value=0.0, max_value=1.0), seed=st.integers(0, 2**31))
def test_alpha_blend_matches_rounded_formula(alpha, seed):
    rng = np.random.default_rng(seed)
    orig = Image(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    pnt = Image(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    got = paint.alpha_blend(orig, pnt, alpha)
    want = np.floor(
        alpha * pnt.data.astype(np.float64) + (1 - alpha) * orig.data.astype(np.float64) + 0.5
    ).astype(np.uint8)
    np.testing.assert_array_equal(got.data, want)


def test_alpha_blend_endpoints_and_validation():
    orig, pnt = textured_image(1, 16), textured_image(2, 16)
    np.testing.assert_array_equal(paint.alpha_blend(orig, pnt, 0.0).data, orig.data)
    np.testing.assert_array_equal(paint.alpha_blend(orig, pnt, 1.0).data, pnt.data)
    with pytest.raises(ValueError):
        paint.alpha_blend(orig, pnt, 1.2)
    with pytest.raises(DimensionMismatchError):
        paint.alpha_blend(orig, textured_image(3, 24), 0.5)


def test_sample_alpha_bounds_and_distribution():
    cfg = paint.BlendConfig(0.5, 0.99)
    vals = np.array([paint.sample_alpha(cfg, s) for s in range(400)])
    assert vals.min() >= 0.5 and vals.max() <= 0.99
    assert abs(vals.mean() - 0.745) < 0.02


def _batch(n, seed=0, size=24, num_classes=5):
    return [
        (textured_image(seed * 100 + i, size), random_labels(seed * 100 + i, size, num_classes, 0.1))
        for i in range(n)
    ]


def test_exact_half_painted_even_batches():
    cfg = paint.BlendConfig(0.5, 0.99, fraction_painted=0.5)
    for n in (2, 8, 16):
        for seed in range(5):
            out = paint.augment_batch(_batch(n, seed), cfg, num_classes=5, rng_seed=seed)
            assert out.painted_count == n // 2


def test_painted_count_rounds_half_up_for_odd_batches():
    cfg = paint.BlendConfig(0.5, 0.99, fraction_painted=0.5)
    out = paint.augment_batch(_batch(5), cfg, num_classes=5, rng_seed=3)
    assert out.painted_count == 3
    out1 = paint.augment_batch(_batch(1), cfg, num_classes=5, rng_seed=3)
    assert out1.painted_count == 1


def test_fraction_bounds_and_full_batch():
    with pytest.raises(ValueError):
        paint.BlendConfig(0.5, 0.9, 0.0)  # fraction must stay in (0, 1]
    base = _batch(4)
    full = paint.augment_batch(base, paint.BlendConfig(0.5, 0.9, 1.0), 5, rng_seed=1)
    assert full.painted_count == 4
    assert all(it.painted for it in full.items)


def test_augment_preserves_labels_and_order():
    base = _batch(6)
    out = paint.augment_batch(base, paint.BlendConfig(0.5, 0.99), 5, rng_seed=9)
    for it, (img, lm) in zip(out.items, base):
        np.testing.assert_array_equal(it.labels.ids, lm.ids)
        if not it.painted:
            np.testing.assert_array_equal(it.image.data, img.data)
        else:
            assert it.alpha_used is not None and 0.5 <= it.alpha_used <= 0.99


def test_augment_blend_formula_per_item():
    # painted item must equal the rounded blend of its palette painting
    base = _batch(4)
    out = paint.augment_batch(base, paint.BlendConfig(0.6, 0.6), 5, rng_seed=4)
    for it, (img, lm) in zip(out.items, base):
        if not it.painted:
            continue
        painting = paint.render_painting(lm, it.palette)
        want = paint.alpha_blend(img, painting, it.alpha_used)
        np.testing.assert_array_equal(it.image.data, want.data)


def test_each_painted_item_gets_fresh_palette():
    out = paint.augment_batch(_batch(8), paint.BlendConfig(0.5, 0.99, 1.0), 5, rng_seed=7)
    palettes = [it.palette.colors.tobytes() for it in out.items]
    assert len(set(palettes)) == len(palettes)


def test_augment_determinism():
    a = paint.augment_batch(_batch(6), paint.BlendConfig(0.5, 0.99), 5, rng_seed=21)
    b = paint.augment_batch(_batch(6), paint.BlendConfig(0.5, 0.99), 5, rng_seed=21)
    c = paint.augment_batch(_batch(6), paint.BlendConfig(0.5, 0.99), 5, rng_seed=22)
    for x, y in zip(a.items, b.items):
        np.testing.assert_array_equal(x.image.data, y.image.data)
    assert any(
        not np.array_equal(x.image.data, y.image.data) for x, y in zip(a.items, c.items)
    )


def test_class_color_stats_hand_oracle(tmp_path):
    index = write_flat_dataset(tmp_path, count=3, size=16, num_classes=4)
    stats = paint.compute_class_color_stats(index)
    pixels = {c: [] for c in range(4)}
    from segrobust.imagecore import load_image, load_label_map

    for s in index.samples:
        img, lm = load_image(s.image_path), load_label_map(s.label_path)
        for c in range(4):
            pixels[c].append(img.data[lm.ids == c])
    for c in range(4):
        arr = np.concatenate(pixels[c]).astype(np.float64)
        if arr.size == 0:
            assert np.isnan(stats.mean[c]).all()
            continue
        np.testing.assert_allclose(stats.mean[c], arr.mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(stats.median[c], np.median(arr, axis=0), atol=1e-9)
        assert stats.pixel_counts[c] == arr.shape[0]


def test_stats_absent_class_is_nan_and_render_raises():
    img = textured_image(5, 16)
    lm = LabelMap(np.zeros((16, 16), dtype=np.uint8))  # only class 0 present
    stats = paint.class_color_stats_from_pairs([(img, lm)], num_classes=3)
    assert np.isnan(stats.mean[1]).all() and np.isnan(stats.mean[2]).all()

    mixed = LabelMap(np.full((16, 16), 2, dtype=np.uint8))
    with pytest.raises(MissingClassStatsError):
        paint.render_stat_painting(mixed, stats, "mean")


def test_render_stat_painting_mean_mode():
    img = Image(np.full((8, 8, 3), 100, dtype=np.uint8))
    lm = LabelMap(np.zeros((8, 8), dtype=np.uint8))
    stats = paint.class_color_stats_from_pairs([(img, lm)], num_classes=1)
    out = paint.render_stat_painting(lm, stats, "mean")
    assert (out.data == 100).all()


def test_instance_painting_colors_and_consistency():
    ids = np.zeros((8, 8), dtype=np.uint8)
    ids[:4, :4] = 1
    ids[4:, 4:] = 2
    labels = LabelMap(np.where(ids > 0, 1, 0).astype(np.uint8))
    inst = InstanceMap(ids.astype(np.int32))
    img = paint.render_instance_painting(labels, inst, rng_seed=3)
    c1 = img.data[0, 0]
    c2 = img.data[5, 5]
    assert not np.array_equal(c1, c2)  # same class, two instances, two colors
    assert (img.data[:4, :4] == c1).all()

    bad_labels = LabelMap(np.where(ids == 2, 2, labels.ids).astype(np.uint8))
    spanning = InstanceMap(np.where(ids > 0, 1, 0).astype(np.int32))
    with pytest.raises(InconsistentInstanceMapError):
        paint.render_instance_painting(bad_labels, spanning, rng_seed=3)


def test_provenance_records_cover_painted_items():
    cfg = paint.BlendConfig(0.5, 0.99)
    out = paint.augment_batch(_batch(4), cfg, 5, rng_seed=2)
    recs = paint.provenance_records(out, cfg)
    assert len(recs) == out.painted_count == 2
    for r in recs:
        assert out.items[r["index"]].painted
        assert r["paint_mode"] == "random_class"
        assert 0.5 <= r["alpha"] <= 0.99
        assert r["item_seed"] == out.items[r["index"]].item_seed
