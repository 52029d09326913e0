import math

import numpy as np
import pytest

from backend import model as net
from backend.errors import ContractViolation, MalformedInputError


def batch(n=4, size=8, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, size, size, 3))
    labels = rng.integers(0, 4, size=n)
    return x, labels


# ---------------- Forward ----------------
def test_zero_head_gives_uniform_logits():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=5, seed=0)
    x, _ = batch()
    np.testing.assert_array_equal(net.forward(model, x), np.zeros((4, 5)))


def test_identical_images_identical_rows():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=1, zero_head=False)
    x, _ = batch(1)
    logits = net.forward(model, np.concatenate([x, x]))
    np.testing.assert_array_equal(logits[0], logits[1])


def test_forward_does_not_touch_params():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=2, zero_head=False)
    before = model.params.copy()
    net.forward(model, batch()[0])
    np.testing.assert_array_equal(model.params, before)


def test_input_shape_mismatch():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4)
    with pytest.raises(ContractViolation):
        net.forward(model, np.zeros((2, 16, 16, 3)))


def test_arch_must_end_in_class_linear():
    with pytest.raises(ContractViolation):
        net.parse_arch("conv3x3:4,relu,gap", 10)
    with pytest.raises(ContractViolation):
        net.parse_arch("flatten,linear:7", 10)
    with pytest.raises(ContractViolation):
        net.parse_arch("conv5x5:4,linear", 10)


def test_init_is_seeded():
    a = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=3, zero_head=False)
    b = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=3, zero_head=False)
    c = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=4, zero_head=False)
    np.testing.assert_array_equal(a.params, b.params)
    assert not np.array_equal(a.params, c.params)


# ---------------- Loss ----------------
def test_uniform_logits_loss_is_ln_c():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4)
    x, labels = batch()
    loss, _ = net.loss_and_grad(model, x, labels)
    assert loss == pytest.approx(math.log(4))


def test_saturated_logits_loss_floor():
    logits = np.array([[30.0, 0.0, 0.0]])
    loss, _, _ = net.cross_entropy(logits, np.array([0]))
    assert loss < 1e-12
    smoothed, _, _ = net.cross_entropy(logits, np.array([0]), smoothing=0.3)
    assert smoothed > 1.0


def test_label_out_of_range():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4)
    x, _ = batch(2)
    with pytest.raises(ContractViolation):
        net.loss_and_grad(model, x, np.array([0, 4]))


# ---------------- Gradient check ----------------
def test_grad_check_default_architecture():
    model = net.init_model(input_shape=(16, 16, 3), num_classes=4, seed=5, zero_head=False)
    x, labels = batch(4, 16, 5)
    assert net.grad_check(model, x, labels, n_params=200) < 1e-4


def test_grad_check_with_label_smoothing():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=6, zero_head=False)
    x, labels = batch(4, 8, 6)
    assert net.grad_check(model, x, labels, smoothing=0.1, n_params=200) < 1e-4


def test_grad_check_linear_model():
    model = net.init_model(net.LINEAR_ARCH, (8, 8, 3), 4, seed=7, zero_head=False)
    x, labels = batch(4, 8, 7)
    assert model.size > 200
    assert net.grad_check(model, x, labels, n_params=200) < 1e-6


def test_grad_check_catches_corruption():
    model = net.init_model(net.LINEAR_ARCH, (4, 4, 3), 4, seed=8, zero_head=False)
    x, labels = batch(4, 4, 8)
    _, grad = net.loss_and_grad(model, x, labels)
    worst = int(np.argmax(np.abs(grad)))
    bad = grad.copy()
    bad[worst] *= 2.0
    assert net.grad_check(model, x, labels, analytic=bad, indices=[worst]) > 0.3


# ---------------- SGD ----------------
def test_zero_lr_keeps_params():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=9, zero_head=False)
    optim = net.OptimState.for_model(model)
    before = model.params.copy()
    _, grad = net.loss_and_grad(model, *batch())
    net.sgd_step(model, optim, grad, 0.0)
    np.testing.assert_array_equal(model.params, before)


def test_plain_gradient_step():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=10, zero_head=False)
    optim = net.OptimState.for_model(model, momentum=0.0, weight_decay=0.0)
    before = model.params.copy()
    _, grad = net.loss_and_grad(model, *batch())
    net.sgd_step(model, optim, grad, 0.1)
    np.testing.assert_allclose(model.params, before - 0.1 * grad)


def test_two_momentum_steps_follow_the_recurrence():
    model = net.init_model(net.LINEAR_ARCH, (4, 4, 3), 4, seed=13, zero_head=False)
    optim = net.OptimState.for_model(model, momentum=0.9, weight_decay=0.01)
    rng = np.random.default_rng(13)
    g1, g2 = rng.normal(size=model.size), rng.normal(size=model.size)
    lr = 0.1
    theta0 = model.params.copy()
    v1 = g1 + 0.01 * theta0
    theta1 = theta0 - lr * v1
    v2 = 0.9 * v1 + g2 + 0.01 * theta1
    theta2 = theta1 - lr * v2

    net.sgd_step(model, optim, g1, lr)
    np.testing.assert_allclose(model.params, theta1, rtol=1e-12, atol=1e-14)
    net.sgd_step(model, optim, g2, lr)
    np.testing.assert_allclose(optim.momentum_buffer, v2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(model.params, theta2, rtol=1e-12, atol=1e-14)


def test_training_steps_are_deterministic():
    def run():
        model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=11)
        optim = net.OptimState.for_model(model)
        x, labels = batch(8, 8, 11)
        for _ in range(5):
            _, grad = net.loss_and_grad(model, x, labels)
            net.sgd_step(model, optim, grad, 0.05)
        return model.params
    np.testing.assert_array_equal(run(), run())


def test_full_batch_descent_halves_the_loss(tiny_sets):
    train_set, _ = tiny_sets
    model = net.init_model(input_shape=(16, 16, 3), num_classes=4, seed=0)
    optim = net.OptimState.for_model(model, momentum=0.9, weight_decay=0.0)
    x = net.normalize_images(train_set.image_stack())
    y = train_set.labels
    assert len(y) == 32
    losses = []
    for _ in range(50):
        loss, grad = net.loss_and_grad(model, x, y)
        losses.append(loss)
        net.sgd_step(model, optim, grad, 0.1)
    final, _ = net.loss_and_grad(model, x, y)
    assert losses[0] == pytest.approx(math.log(4))
    assert final <= 0.5 * math.log(4)


# ---------------- LR schedule ----------------
def test_warmup_starts_at_zero_and_peaks():
    s = net.LrSchedule(warmup_epochs=2, total_epochs=10, iters_per_epoch=5, base_lr=0.1)
    assert net.lr_at(s, 0) == 0.0
    assert net.lr_at(s, 1) == pytest.approx(0.01)
    assert net.lr_at(s, 10) == pytest.approx(0.1)


def test_cosine_midpoint_and_end():
    s = net.LrSchedule(warmup_epochs=0, total_epochs=1, iters_per_epoch=101, base_lr=0.2)
    assert net.lr_at(s, 0) == pytest.approx(0.2)
    assert net.lr_at(s, 50) == pytest.approx(0.1, abs=1e-9)
    assert net.lr_at(s, 100) == pytest.approx(0.0, abs=1e-15)


def test_schedule_is_monotone_after_warmup():
    s = net.LrSchedule(warmup_epochs=1, total_epochs=6, iters_per_epoch=7, base_lr=0.05)
    lrs = [net.lr_at(s, i) for i in range(s.warmup_iters, s.total_iters)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert lrs[-1] <= 0.05 * 1e-3


def test_warmup_must_fit():
    with pytest.raises(ContractViolation):
        net.LrSchedule(warmup_epochs=5, total_epochs=5, iters_per_epoch=1, base_lr=0.1)


# ---------------- Checkpoint ----------------
def test_checkpoint_restores_float32_params():
    model = net.init_model(input_shape=(8, 8, 3), num_classes=4, seed=12, zero_head=False,
                           dtype="float32")
    optim = net.OptimState.for_model(model)
    optim.momentum_buffer[:] = 0.5
    data = net.save_checkpoint(model, optim)
    assert data.startswith(b"SRACKPT1")
    restored, momentum = net.load_checkpoint(data, dtype="float32")
    assert restored.descriptor() == model.descriptor()
    np.testing.assert_array_equal(restored.params, model.params)
    np.testing.assert_array_equal(momentum, np.full(model.size, 0.5))


def test_checkpoint_without_optimizer():
    model = net.init_model(net.LINEAR_ARCH, (4, 4, 3), 3)
    _, momentum = net.load_checkpoint(net.save_checkpoint(model))
    assert momentum is None


@pytest.mark.parametrize("data", [b"", b"NOTACKPT", b"SRACKPT1\x05\x00\x00\x00ab"])
def test_bad_checkpoints(data):
    with pytest.raises(MalformedInputError):
        net.load_checkpoint(data)
