import math

import numpy as np
import pytest

from grrmf import _kernels
from grrmf.core import FactorModel, ObservationSet, OrdinalMatrix, predict_real
from grrmf.errors import DivergenceError, ValidationError
from grrmf.generators import identity, upper_triangle
from grrmf.link import LinkKind, grf
from grrmf.optim import (
    Loss,
    TrainConfig,
    accuracy_half,
    loss_gradients,
    loss_linear,
    loss_multi_sigmoid,
    loss_round,
    loss_value,
    rmse,
    train,
)


def _random_case(rng, n=5, m=5, k=2, n_levels=3, frac=0.7):
    u, v = rng.normal(size=(n, k)), rng.normal(size=(m, k))
    tau = np.sort(rng.uniform(-1.5, 1.5, size=n_levels))
    while np.min(np.diff(tau), initial=1.0) < 0.05:
        tau = np.sort(rng.uniform(-1.5, 1.5, size=n_levels))
    mask = rng.random((n, m)) < frac
    mask[0, 0] = True
    rows, cols = np.nonzero(mask)
    vals = rng.integers(0, n_levels + 1, size=rows.size)
    return FactorModel(u, v, tau), ObservationSet((n, m), rows, cols, vals, n_levels=n_levels)


# -- loss values against brute-force loops -----------------------------------


def test_loss_linear_examples():
    model = FactorModel([[0.0]], [[1.0]], [0.5, 1.5])
    obs = ObservationSet((1, 1), [0], [0], [2])
    assert loss_linear(model, obs) == 4.0
    eye = FactorModel(np.eye(3), np.eye(3), [0.5])
    assert loss_linear(eye, ObservationSet.full(identity(3))) == 0.0


def test_loss_round_examples():
    obs = ObservationSet((1, 1), [0], [0], [1])
    assert loss_round(FactorModel([[2.0]], [[1.0]], [0.5, 1.5]), obs) == pytest.approx(0.5)
    assert loss_round(FactorModel([[1.0]], [[1.0]], [0.5, 1.5]), obs) == 0.0


def test_loss_multi_sigmoid_examples():
    zero = FactorModel([[0.0]], [[0.0]], [0.0])
    assert loss_multi_sigmoid(zero, ObservationSet((1, 1), [0], [0], [0])) == pytest.approx(0.25)
    big = FactorModel([[1e3]], [[1.0]], [0.0])
    assert loss_multi_sigmoid(big, ObservationSet((1, 1), [0], [0], [1])) == pytest.approx(0.0, abs=1e-12)


def test_losses_match_double_loops():
    rng = np.random.default_rng(42)
    for _ in range(20):
        model, obs = _random_case(rng)
        l2 = rng.uniform(0, 0.1)
        pad = 10.0 * (model.thresholds[-1] - model.thresholds[0] + 1.0)
        padded = np.concatenate([[model.thresholds[0] - pad], model.thresholds, [model.thresholds[-1] + pad]])
        lin = rnd = ms = 0.0
        for i, j, y in obs.entries():
            xi = sum(model.u[i, c] * model.v[j, c] for c in range(model.rank))
            lin += (y - xi) ** 2
            rnd += max(padded[y] - xi, 0.0) + max(xi - padded[y + 1], 0.0)
            ms += (y - sum(1 / (1 + math.exp(-(xi - t))) for t in model.thresholds)) ** 2
        reg = l2 * (np.sum(model.u**2) + np.sum(model.v**2))
        assert loss_linear(model, obs, l2) == pytest.approx(lin + reg, rel=1e-12)
        assert loss_round(model, obs, l2_reg=l2) == pytest.approx(rnd + reg, rel=1e-12)
        assert loss_multi_sigmoid(model, obs, l2) == pytest.approx(ms + reg, rel=1e-12)


def test_zero_round_loss_reproduces_levels():
    rng = np.random.default_rng(4)
    for _ in range(50):
        model, _ = _random_case(rng, n_levels=2)
        y = grf(predict_real(model), model.thresholds)
        obs = ObservationSet.full(OrdinalMatrix(y, 2))
        assert loss_round(model, obs) == 0.0


# -- gradients ---------------------------------------------------------------


def _near_kink(model, obs, pad, tol=1e-3):
    x = np.einsum("ek,ek->e", model.u[obs.rows], model.v[obs.cols])
    padded = np.concatenate([[model.thresholds[0] - pad], model.thresholds, [model.thresholds[-1] + pad]])
    lo, hi = padded[obs.values], padded[obs.values + 1]
    return np.min(np.abs(np.concatenate([x - lo, x - hi]))) < tol


def _fd_check(model, obs, cfg, pad, h=1e-5):
    grads = dict(zip(("u", "v", "thresholds"), loss_gradients(model, obs, cfg, boundary_pad=pad)))
    worst = 0.0
    for name, grad in grads.items():
        for idx in np.ndindex(grad.shape):
            vals = []
            for step in (h, -h):
                parts = {"u": model.u.copy(), "v": model.v.copy(), "thresholds": model.thresholds.copy()}
                parts[name][idx] += step
                vals.append(loss_value(FactorModel(**parts), obs, cfg, pad))
            fd = (vals[0] - vals[1]) / (2 * h)
            worst = max(worst, abs(grad[idx] - fd) / max(1.0, abs(grad[idx])))
    return worst


@pytest.mark.parametrize("loss", list(Loss))
def test_gradients_match_finite_differences(loss):
    rng = np.random.default_rng({"linear": 1, "round": 2, "multi_sigmoid": 3}[loss.value])
    accepted = 0
    while accepted < 100:
        model, obs = _random_case(rng, n=3, m=3, k=2, n_levels=int(rng.integers(1, 4)))
        cfg = TrainConfig(loss=loss, rank=2, l2_reg=float(rng.uniform(0, 0.1)), sharpness=float(rng.uniform(0.5, 2)))
        pad = 3.0
        if loss is Loss.ROUND and _near_kink(model, obs, pad, tol=2e-3):
            continue
        assert _fd_check(model, obs, cfg, pad) < 1e-4
        accepted += 1


def test_kernel_agrees_with_vectorized_gradients():
    rng = np.random.default_rng(11)
    for loss in Loss:
        for _ in range(20):
            model, obs = _random_case(rng)
            cfg = TrainConfig(loss=loss, rank=2, sharpness=1.3)
            pad = 4.0
            _, g_v, g_tau = loss_gradients(model, obs, cfg, boundary_pad=pad)
            kv = np.zeros_like(model.v)
            ktau = np.zeros_like(model.thresholds)
            total = 0.0
            for i, j, y in obs.entries():
                x = float(model.u[i] @ model.v[j])
                val, gx = _kernels.entry_loss_grad(x, y, model.thresholds, _kernels_id(loss), pad, 1.3, 0.0, ktau)
                total += val
                kv[j] += gx * model.u[i]
            assert np.allclose(kv, g_v, atol=1e-12)
            assert np.allclose(ktau, g_tau, atol=1e-12)
            assert total == pytest.approx(loss_value(model, obs, cfg, pad), rel=1e-12)


def _kernels_id(loss):
    return {Loss.LINEAR: _kernels.LINEAR, Loss.ROUND: _kernels.ROUND, Loss.MULTI_SIGMOID: _kernels.MULTI_SIGMOID}[loss]


def test_smoothed_hinge_gradient():
    rng = np.random.default_rng(8)
    for _ in range(20):
        model, obs = _random_case(rng, n=3, m=3)
        cfg = TrainConfig(loss=Loss.ROUND, rank=2, hinge_smoothing=0.1)
        assert _fd_check(model, obs, cfg, 3.0) < 1e-4


def test_multi_sigmoid_gradient_uses_sigmoid_derivative():
    model = FactorModel([[0.0]], [[1.0]], [0.0])
    obs = ObservationSet((1, 1), [0], [0], [1])
    g_u, _, g_tau = loss_gradients(model, obs, TrainConfig(loss=Loss.MULTI_SIGMOID, rank=1))
    # r = 0.5, slope 0.25
    assert g_u[0, 0] == pytest.approx(-2 * 0.5 * 0.25)
    assert g_tau[0] == pytest.approx(2 * 0.5 * 0.25)


# -- metrics -----------------------------------------------------------------


def _metric_case(preds, truth):
    n = len(preds)
    model = FactorModel(np.array(preds, dtype=float)[:, None], np.ones((1, 1)), [0.5])
    obs = ObservationSet((n, 1), np.arange(n), np.zeros(n, int), truth, is_validation=np.ones(n, bool))
    return model, obs


def test_metric_examples():
    model, obs = _metric_case([0, 1, 2, 3], [0, 1, 2, 3])
    assert rmse(model, obs) == 0.0 and accuracy_half(model, obs) == 1.0
    model, obs = _metric_case([1, 2, 3, 4], [0, 1, 2, 3])
    assert rmse(model, obs) == 1.0 and accuracy_half(model, obs) == 0.0
    model, obs = _metric_case([0, 1, 2.4, 4], [0, 1, 2, 3])
    assert rmse(model, obs) == pytest.approx(math.sqrt(1.16 / 4))
    assert accuracy_half(model, obs) == 0.75


def test_metric_links():
    model, obs = _metric_case([0.2, 0.9], [0, 1])
    assert rmse(model, obs, LinkKind.GRF) == 0.0
    assert rmse(model, obs, LinkKind.MULTI_SIGMOID) > 0.0


def test_empty_validation_is_an_error():
    model = FactorModel([[1.0]], [[1.0]], [0.5])
    with pytest.raises(ValidationError):
        rmse(model, ObservationSet((1, 1), [0], [0], [1]))


# -- training ----------------------------------------------------------------


def test_upper_triangle_recovery():
    cfg = TrainConfig(loss=Loss.ROUND, rank=1, thresholds_fixed=True, initial_thresholds=(0.5,), max_epochs=10000,
                      patience=500, seed=0)
    rep = train(upper_triangle(10), cfg)
    assert min(rep.rmse_curve) < 0.05


def test_identity_linear_respects_svd_floor():
    y = identity(10)
    rep = train(y, TrainConfig(loss=Loss.LINEAR, rank=2, learning_rate=0.02, max_epochs=2000, seed=1))
    err = np.sum((y.data - predict_real(rep.final_model)) ** 2)
    assert err >= 8.0 - 1e-9


def test_training_is_deterministic():
    cfg = TrainConfig(loss=Loss.MULTI_SIGMOID, rank=2, max_epochs=30, seed=5)
    a = train(upper_triangle(6), cfg)
    b = train(upper_triangle(6), cfg)
    assert a.loss_curve == b.loss_curve and a.rmse_curve == b.rmse_curve
    assert np.array_equal(a.final_model.u, b.final_model.u)


def test_final_model_is_best_epoch():
    y = upper_triangle(8)
    mask = np.random.default_rng(0).random((8, 8)) < 0.3
    obs = ObservationSet.full(y).with_split(mask.ravel())
    rep = train(obs, TrainConfig(loss=Loss.ROUND, rank=1, max_epochs=200, patience=20, seed=0))
    assert rep.best_epoch == int(np.argmin(rep.rmse_curve)) + 1
    assert rmse(rep.final_model, obs, LinkKind.GRF) == pytest.approx(min(rep.rmse_curve))
    assert rep.epochs_run == len(rep.loss_curve)


def test_learned_thresholds_stay_sorted():
    y = OrdinalMatrix(np.random.default_rng(2).integers(0, 4, size=(8, 8)), 3)
    rep = train(y, TrainConfig(loss=Loss.ROUND, rank=2, learning_rate=0.2, max_epochs=100, seed=0))
    assert np.all(np.diff(rep.last_model.thresholds) >= 1e-3 - 1e-12)


def test_divergence_is_reported():
    y = OrdinalMatrix(np.full((6, 6), 5), 5)
    with pytest.raises(DivergenceError, match="epoch"):
        train(y, TrainConfig(loss=Loss.LINEAR, rank=2, learning_rate=50.0, max_epochs=50))


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValidationError):
        TrainConfig(initial_thresholds=(1.0, 0.0))
    with pytest.raises(ValidationError):
        train(upper_triangle(3), TrainConfig(initial_thresholds=(0.1, 0.2)))
