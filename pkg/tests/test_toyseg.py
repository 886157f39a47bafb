import math

import numpy as np
import pytest

from segrobust import paint, toyseg
from segrobust.errors import AllPixelsIgnoredError
from segrobust.imagecore import Image, LabelMap
from segrobust.metrics import accumulate_confusion, mean_iou
from segrobust.seeding import derive_seed


def small_cfg(**kw):
    base = dict(
        image_size=32,
        num_classes=4,
        shapes_per_image=(2, 3),
        shape_size=(5, 8),
        pixel_noise=2.0,
        texture_bank=toyseg.default_texture_bank(4),
        train_count=8,
        val_count=0,
        test_count=4,
        seed=11,
    )
    base.update(kw)
    return toyseg.ShapesConfig(**base)


def test_dataset_deterministic_and_split_dependent():
    cfg = small_cfg()
    a = toyseg.generate_shapes_dataset(cfg, "train")
    b = toyseg.generate_shapes_dataset(cfg, "train")
    t = toyseg.generate_shapes_dataset(cfg, "test")
    assert len(a) == 8 and len(t) == 4
    for (ia, la), (ib, lb) in zip(a, b):
        np.testing.assert_array_equal(ia.data, ib.data)
        np.testing.assert_array_equal(la.ids, lb.ids)
    assert not np.array_equal(a[0][0].data, t[0][0].data)


def test_zero_shapes_is_all_background():
    cfg = small_cfg(shapes_per_image=(0, 0))
    img, labels = toyseg.generate_shapes_dataset(cfg, "train")[0]
    assert (labels.ids == 0).all()
    assert img.data.shape == (32, 32, 3)


def test_class_pixel_budget_matches_generator():
    # long-run average pixel share per class should track the analytic areas
    cfg = small_cfg(shapes_per_image=(3, 3), train_count=500, image_size=48)
    expected = toyseg.expected_class_pixels(cfg)
    counts = np.zeros(cfg.num_classes)
    for _, labels in toyseg.generate_shapes_dataset(cfg, "train"):
        counts += np.bincount(labels.ids.reshape(-1), minlength=cfg.num_classes)
    counts /= cfg.train_count
    np.testing.assert_allclose(counts, expected, rtol=0.2)


def test_default_bank_size_and_init_shapes():
    bank = toyseg.default_texture_bank(6)
    assert len(bank) == 6
    model = toyseg.init_model(5, 3)
    assert [w.shape for w in model.weights] == [(16, 3, 3, 3), (32, 16, 3, 3), (5, 32, 3, 3)]
    assert model.parameter_count == sum(w.size for w in model.weights) + 16 + 32 + 5


def test_zero_model_gives_zero_logits_and_shapes():
    model = toyseg.init_model(4, 0)
    for w in model.weights:
        w[:] = 0.0
    img = Image(np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8))
    logits = toyseg.forward(model, img)
    assert logits.shape == (16, 16, 4)
    np.testing.assert_array_equal(logits, 0.0)
    assert toyseg.predict(model, img).ids.shape == (16, 16)


def test_center_tap_model_is_pointwise_linear():
    # a single layer whose 3x3 kernels only use the center tap reduces to
    # a per-pixel matmul, which we can check against numpy directly
    rng = np.random.default_rng(7)
    w = np.zeros((2, 3, 3, 3))
    w[:, :, 1, 1] = rng.normal(size=(2, 3))
    b = rng.normal(size=2)
    model = toyseg.TinyFCN(weights=[w], biases=[b], num_classes=2)
    img = Image(rng.integers(0, 256, (9, 9, 3), dtype=np.uint8))
    logits = toyseg.forward(model, img)
    x = img.data.astype(np.float64) / 255.0
    np.testing.assert_allclose(logits, x @ w[:, :, 1, 1].T + b, atol=1e-12)


def test_uniform_logits_loss_is_log_c():
    model = toyseg.init_model(4, 0)
    for w in model.weights:
        w[:] = 0.0
    img = Image(np.full((8, 8, 3), 100, dtype=np.uint8))
    labels = LabelMap(np.zeros((8, 8), dtype=np.uint8))
    loss, _ = toyseg.loss_and_grad(model, img, labels)
    assert loss == pytest.approx(math.log(4), abs=1e-12)


def test_saturated_correct_logit_loss_near_zero():
    model = toyseg.init_model(2, 0)
    for w in model.weights:
        w[:] = 0.0
    model.biases[-1][0] = 50.0
    img = Image(np.full((8, 8, 3), 100, dtype=np.uint8))
    labels = LabelMap(np.zeros((8, 8), dtype=np.uint8))
    loss, _ = toyseg.loss_and_grad(model, img, labels)
    assert loss < 1e-12


def test_all_ignored_raises():
    model = toyseg.init_model(3, 0)
    img = Image(np.full((8, 8, 3), 100, dtype=np.uint8))
    labels = LabelMap(np.full((8, 8), 255, dtype=np.uint8))
    with pytest.raises(AllPixelsIgnoredError):
        toyseg.loss_and_grad(model, img, labels)


def test_softmax_grad_rows_sum_to_zero():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(1, 4, 4, 5))
    gt = rng.integers(0, 5, size=(1, 4, 4))
    gt[0, 0, 0] = 255
    loss, d = toyseg._softmax_loss_grad(logits, gt, 255)
    assert math.isfinite(loss)
    np.testing.assert_allclose(d.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_array_equal(d[0], 0.0)  # ignored pixel contributes nothing


def test_gradient_spot_check_against_central_differences():
    model = toyseg.init_model(3, 5)
    rng = np.random.default_rng(9)
    img = Image(rng.integers(0, 256, (6, 6, 3), dtype=np.uint8))
    labels = LabelMap(rng.integers(0, 3, (6, 6)).astype(np.uint8))
    _, grads = toyseg.loss_and_grad(model, img, labels)
    h = 1e-5
    for li in range(3):
        w = model.weights[li]
        for _ in range(4):
            idx = tuple(rng.integers(0, s) for s in w.shape)
            orig = w[idx]
            w[idx] = orig + h
            lp, _ = toyseg.loss_and_grad(model, img, labels)
            w[idx] = orig - h
            lm, _ = toyseg.loss_and_grad(model, img, labels)
            w[idx] = orig
            num = (lp - lm) / (2 * h)
            ana = grads["weights"][li][idx]
            assert abs(num - ana) <= 1e-4 * max(1.0, abs(num))


def test_train_config_validation():
    with pytest.raises(ValueError):
        toyseg.TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        toyseg.TrainConfig(epochs=-1)
    with pytest.raises(ValueError):
        toyseg.TrainConfig(batch_size=7, blend=paint.BlendConfig(0.5, 0.99))


def test_zero_epochs_returns_initial_parameters():
    cfg = small_cfg()
    data = toyseg.generate_shapes_dataset(cfg, "train")
    tc = toyseg.TrainConfig(epochs=0, batch_size=4, learning_rate=0.1, seed=3)
    model = toyseg.train(data, tc, num_classes=4)
    fresh = toyseg.init_model(4, derive_seed(3, "init"))
    for a, b in zip(model.weights, fresh.weights):
        np.testing.assert_array_equal(a, b)


def test_loss_decreases_over_short_run():
    cfg = small_cfg(train_count=50)
    data = toyseg.generate_shapes_dataset(cfg, "train")
    losses = []
    tc = toyseg.TrainConfig(epochs=5, batch_size=8, learning_rate=0.02, seed=1)
    toyseg.train(data, tc, num_classes=4, loss_sink=losses)
    assert len(losses) == 5
    assert losses[-1] < losses[0]


def test_training_bit_deterministic_with_and_without_blend():
    cfg = small_cfg(train_count=16)
    data = toyseg.generate_shapes_dataset(cfg, "train")
    for blend in (None, paint.BlendConfig(0.5, 0.99, fraction_painted=0.5)):
        tc = toyseg.TrainConfig(epochs=2, batch_size=8, learning_rate=0.02, seed=5, blend=blend)
        m1 = toyseg.train(data, tc, num_classes=4)
        m2 = toyseg.train(data, tc, num_classes=4)
        for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
            np.testing.assert_array_equal(a, b)


def test_model_save_load_round_trip(tmp_path):
    model = toyseg.init_model(4, 17)
    path = toyseg.save_model(model, tmp_path / "model.bin", seed=17)
    back = toyseg.load_model(path)
    assert back.num_classes == 4
    for a, b in zip(model.weights + model.biases, back.weights + back.biases):
        np.testing.assert_array_equal(a, b)


def test_load_rejects_foreign_file(tmp_path):
    bad = tmp_path / "notamodel.bin"
    bad.write_bytes(b'{"magic": "something-else"}\n' + b"\x00" * 64)
    with pytest.raises(ValueError):
        toyseg.load_model(bad)


def test_robustness_report_layout_and_clean_column():
    cfg = small_cfg(test_count=6)
    test_set = toyseg.generate_shapes_dataset(cfg, "test")
    model = toyseg.init_model(4, 2)
    kinds = ("gaussian_noise", "fog")
    rep = toyseg.evaluate_robustness(model, test_set, kinds, severities=(1, 2), seed=0)
    assert set(rep.cells) == set(kinds)
    for kind in kinds:
        assert sorted(rep.cells[kind]) == [0, 1, 2]

    # the severity-0 column must equal a direct clean evaluation
    cm = None
    for img, labels in test_set:
        c = accumulate_confusion(toyseg.predict(model, img), labels, 4)
        cm = c if cm is None else cm + c
    clean = mean_iou(cm)
    assert rep.miou("gaussian_noise", 0) == pytest.approx(clean, abs=1e-12)
    assert rep.miou("fog", 0) == pytest.approx(clean, abs=1e-12)


def test_predict_invariant_to_logit_shift():
    model = toyseg.init_model(4, 21)
    img = Image(np.random.default_rng(1).integers(0, 256, (12, 12, 3), dtype=np.uint8))
    before = toyseg.predict(model, img)
    shifted = model.copy()
    shifted.biases[-1] += 7.5
    after = toyseg.predict(shifted, img)
    np.testing.assert_array_equal(before.ids, after.ids)
