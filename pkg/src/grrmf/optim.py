"""SGD training of factor models under linear, Round and multi-sigmoid losses."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from grrmf import _kernels
from grrmf.core import (
    FactorModel,
    ObservationSet,
    OrdinalMatrix,
    check_thresholds,
    default_boundary_pad,
    level_bounds,
)
from grrmf.errors import DivergenceError, ValidationError
from grrmf.link import LinkKind

log = logging.getLogger(__name__)

__all__ = [
    "Loss",
    "TrainConfig",
    "TrainReport",
    "auto_thresholds",
    "loss_linear",
    "loss_round",
    "loss_multi_sigmoid",
    "loss_value",
    "loss_gradients",
    "train",
    "rmse",
    "accuracy_half",
    "predict_observed",
    "metric_link",
]


class Loss(str, Enum):
    LINEAR = "linear"
    ROUND = "round"
    MULTI_SIGMOID = "multi_sigmoid"


_LOSS_ID = {Loss.LINEAR: _kernels.LINEAR, Loss.ROUND: _kernels.ROUND, Loss.MULTI_SIGMOID: _kernels.MULTI_SIGMOID}


def metric_link(loss) -> LinkKind:
    """Link used when scoring a model trained with ``loss``."""
    return {
        Loss.LINEAR: LinkKind.IDENTITY,
        Loss.ROUND: LinkKind.GRF,
        Loss.MULTI_SIGMOID: LinkKind.MULTI_SIGMOID,
    }[Loss(loss)]


def auto_thresholds(n_levels: int) -> np.ndarray:
    return np.arange(n_levels, dtype=float) + 0.5


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`train`.

    ``patience=None`` disables early stopping. ``init_scale=None`` means
    ``1/sqrt(rank)``. ``boundary_pad=None`` derives the Round loss padding
    from the initial thresholds.
    """

    loss: Loss = Loss.ROUND
    rank: int = 2
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    l2_reg: float = 0.0
    max_epochs: int = 1000
    patience: int | None = None
    seed: int = 0
    thresholds_fixed: bool = False
    initial_thresholds: tuple[float, ...] | str = "auto"
    init_scale: float | None = None
    hinge_smoothing: float = 0.0
    sharpness: float = 1.0
    boundary_pad: float | None = None
    min_gap: float = 1e-3
    freeze_u: bool = False

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not (0 < self.lr_decay <= 1):
            raise ValidationError("lr_decay must lie in (0, 1]")
        if self.l2_reg < 0:
            raise ValidationError("l2_reg must be nonnegative")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.rank < 1:
            raise ValidationError("rank must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience must be >= 1 or None")
        if self.hinge_smoothing < 0:
            raise ValidationError("hinge_smoothing must be nonnegative")
        if not self.sharpness > 0:
            raise ValidationError("sharpness must be positive")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValidationError("init_scale must be positive")
        if not isinstance(self.initial_thresholds, str):
            object.__setattr__(
                self, "initial_thresholds", tuple(float(t) for t in check_thresholds(self.initial_thresholds))
            )
        elif self.initial_thresholds != "auto":
            raise ValidationError("initial_thresholds must be a vector or 'auto'")

    def thresholds_for(self, n_levels: int) -> np.ndarray:
        if self.initial_thresholds == "auto":
            return auto_thresholds(n_levels)
        tau = np.array(self.initial_thresholds, dtype=float)
        if tau.size != n_levels:
            raise ValidationError(f"{tau.size} initial thresholds given for N={n_levels}")
        return tau


@dataclass
class TrainReport:
    epochs_run: int
    loss_curve: list[float]
    rmse_curve: list[float]
    final_model: FactorModel
    stopped_early: bool
    best_epoch: int
    last_model: FactorModel = field(repr=False, default=None)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_rmse"])
            for e, (lo, r) in enumerate(zip(self.loss_curve, self.rmse_curve), start=1):
                writer.writerow([e, repr(lo), repr(r)])


# -- losses -----------------------------------------------------------------


def _scores(model: FactorModel, obs: ObservationSet) -> np.ndarray:
    return np.einsum("ek,ek->e", model.u[obs.rows], model.v[obs.cols])


def _l2(model: FactorModel, l2_reg: float) -> float:
    return l2_reg * (np.sum(model.u**2) + np.sum(model.v**2))


def _train_part(obs: ObservationSet) -> ObservationSet:
    return obs.train() if obs.is_validation.any() else obs


def loss_linear(model: FactorModel, obs: ObservationSet, l2_reg: float = 0.0) -> float:
    """Squared error on training entries plus ``l2_reg * (|U|^2 + |V|^2)``."""
    obs = _train_part(obs)
    r = obs.values - _scores(model, obs)
    return float(np.sum(r**2) + _l2(model, l2_reg))


def _hinge(z, smoothing):
    if smoothing > 0:
        return smoothing * np.logaddexp(0.0, z / smoothing)
    return np.maximum(z, 0.0)


def loss_round(model: FactorModel, obs: ObservationSet, intervals=None, l2_reg: float = 0.0,
               hinge_smoothing: float = 0.0) -> float:
    """Interval hinge: penalty for training scores leaving their level's interval."""
    obs = _train_part(obs)
    x = _scores(model, obs)
    if intervals is None:
        lo, hi = level_bounds(obs.values, model.thresholds, default_boundary_pad(model.thresholds))
    else:
        lo = intervals.lower[obs.rows, obs.cols]
        hi = intervals.upper[obs.rows, obs.cols]
    pen = _hinge(lo - x, hinge_smoothing) + _hinge(x - hi, hinge_smoothing)
    return float(np.sum(pen) + _l2(model, l2_reg))


def loss_multi_sigmoid(model: FactorModel, obs: ObservationSet, l2_reg: float = 0.0, sharpness: float = 1.0) -> float:
    obs = _train_part(obs)
    x = _scores(model, obs)
    p = expit(sharpness * (x[:, None] - model.thresholds)).sum(axis=1)
    return float(np.sum((obs.values - p) ** 2) + _l2(model, l2_reg))


def loss_value(model: FactorModel, obs: ObservationSet, config: TrainConfig,
               boundary_pad: float | None = None) -> float:
    """Full training objective for ``config.loss``."""
    if config.loss is Loss.LINEAR:
        return loss_linear(model, obs, config.l2_reg)
    if config.loss is Loss.ROUND:
        pad = boundary_pad if boundary_pad is not None else _pad_for(config, model.thresholds)
        train_obs = _train_part(obs)
        lo, hi = level_bounds(train_obs.values, model.thresholds, pad)
        x = _scores(model, train_obs)
        pen = _hinge(lo - x, config.hinge_smoothing) + _hinge(x - hi, config.hinge_smoothing)
        return float(np.sum(pen) + _l2(model, config.l2_reg))
    return loss_multi_sigmoid(model, obs, config.l2_reg, config.sharpness)


def _pad_for(config: TrainConfig, thresholds) -> float:
    return config.boundary_pad if config.boundary_pad is not None else default_boundary_pad(thresholds)


def loss_gradients(model: FactorModel, obs: ObservationSet, config: TrainConfig, boundary_pad: float | None = None):
    """Analytic gradients of :func:`loss_value` w.r.t. ``(U, V, tau)``.

    For the Round loss the padded outer bounds move with the outer
    thresholds, and the hinge subgradient at a kink is 0.
    """
    obs = _train_part(obs)
    x = _scores(model, obs)
    y = obs.values.astype(float)
    tau = model.thresholds
    g_tau = np.zeros_like(tau)
    if config.loss is Loss.LINEAR:
        g_x = -2.0 * (y - x)
    elif config.loss is Loss.ROUND:
        pad = boundary_pad if boundary_pad is not None else _pad_for(config, tau)
        lo, hi = level_bounds(obs.values, tau, pad)
        if config.hinge_smoothing > 0:
            gl = expit((lo - x) / config.hinge_smoothing)
            gh = expit((x - hi) / config.hinge_smoothing)
        else:
            gl = (lo - x > 0).astype(float)
            gh = (x - hi > 0).astype(float)
        g_x = gh - gl
        n_thr = tau.size
        np.add.at(g_tau, np.where(obs.values == 0, 0, obs.values - 1), gl)
        np.add.at(g_tau, np.minimum(obs.values, n_thr - 1), -gh)
    else:
        s = expit(config.sharpness * (x[:, None] - tau))
        t = config.sharpness * s * (1.0 - s)
        r = y - s.sum(axis=1)
        g_x = -2.0 * r * t.sum(axis=1)
        g_tau = (2.0 * r[:, None] * t).sum(axis=0)
    g_u = np.zeros_like(model.u)
    g_v = np.zeros_like(model.v)
    np.add.at(g_u, obs.rows, g_x[:, None] * model.v[obs.cols])
    np.add.at(g_v, obs.cols, g_x[:, None] * model.u[obs.rows])
    g_u += 2.0 * config.l2_reg * model.u
    g_v += 2.0 * config.l2_reg * model.v
    return g_u, g_v, g_tau


# -- metrics ----------------------------------------------------------------

_LINK_ID = {LinkKind.IDENTITY: 0, LinkKind.GRF: 1, LinkKind.MULTI_SIGMOID: 2}


def predict_observed(model: FactorModel, obs: ObservationSet, link=LinkKind.IDENTITY, sharpness: float = 1.0):
    link = LinkKind(link)
    if link not in _LINK_ID:
        raise ValidationError(f"unsupported metric link {link.value}")
    return _kernels.predictions(
        np.ascontiguousarray(model.u), np.ascontiguousarray(model.v), np.asarray(model.thresholds, dtype=float),
        obs.rows, obs.cols, _LINK_ID[link], sharpness,
    )


def _eval_part(obs: ObservationSet) -> ObservationSet:
    part = obs.validation()
    if len(part) == 0:
        raise ValidationError("validation set is empty")
    return part


def rmse(model: FactorModel, obs: ObservationSet, link=LinkKind.IDENTITY, sharpness: float = 1.0) -> float:
    """RMSE of link-mapped predictions on the validation-tagged entries."""
    part = _eval_part(obs)
    pred = predict_observed(model, part, link, sharpness)
    return float(np.sqrt(np.mean((pred - part.values) ** 2)))


def accuracy_half(model: FactorModel, obs: ObservationSet, link=LinkKind.IDENTITY, sharpness: float = 1.0) -> float:
    """Fraction of validation predictions within +-0.5 of the true level."""
    part = _eval_part(obs)
    pred = predict_observed(model, part, link, sharpness)
    return float(np.mean(np.abs(pred - part.values) <= 0.5))


# -- training ---------------------------------------------------------------


def _as_observations(data) -> ObservationSet:
    if isinstance(data, OrdinalMatrix):
        return ObservationSet.full(data)
    if isinstance(data, ObservationSet):
        return data
    raise ValidationError(f"train expects an OrdinalMatrix or ObservationSet, got {type(data).__name__}")


def train(data, config: TrainConfig, u_init=None, n_levels: int | None = None) -> TrainReport:
    """Fit a factor model by per-entry SGD.

    ``data`` is a fully observed :class:`OrdinalMatrix` or an
    :class:`ObservationSet`; validation-tagged entries drive early stopping
    and the per-epoch RMSE (training entries are scored when none are
    tagged). The returned ``final_model`` is the epoch with the lowest RMSE.
    """
    obs = _as_observations(data)
    if n_levels is None:
        n_levels = obs.n_levels if obs.n_levels is not None else max(1, int(obs.values.max(initial=1)))
    train_obs = obs.train()
    if len(train_obs) == 0:
        raise ValidationError("no training observations")
    eval_obs = obs.validation() if obs.is_validation.any() else train_obs.with_split(np.ones(len(train_obs), bool))

    n, m = obs.shape
    k = config.rank
    rng = np.random.default_rng(config.seed)
    scale = config.init_scale if config.init_scale is not None else 1.0 / math.sqrt(k)
    u = rng.uniform(-scale, scale, size=(n, k))
    v = rng.uniform(-scale, scale, size=(m, k))
    if u_init is not None:
        u = np.array(u_init, dtype=float, copy=True)
        if u.shape != (n, k):
            raise ValidationError(f"u_init must have shape {(n, k)}")
    tau = config.thresholds_for(n_levels).copy()
    pad = _pad_for(config, tau)
    learn_tau = (not config.thresholds_fixed) and config.loss is not Loss.LINEAR

    rows, cols, vals = train_obs.rows, train_obs.cols, train_obs.values
    loss_id = _LOSS_ID[config.loss]
    link = metric_link(config.loss)
    link_id = _LINK_ID[link]

    def val_rmse():
        pred = _kernels.predictions(u, v, tau, eval_obs.rows, eval_obs.cols, link_id, config.sharpness)
        return float(np.sqrt(np.mean((pred - eval_obs.values) ** 2)))

    loss_curve, rmse_curve = [], []
    best = (math.inf, 0, None)
    stale = 0
    stopped_early = False
    lr = config.learning_rate
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_obs))
        _kernels.sgd_epoch(u, v, tau, rows, cols, vals, order, loss_id, lr, config.l2_reg, learn_tau,
                           config.freeze_u, pad, config.sharpness, config.hinge_smoothing, config.min_gap)
        data_part = _kernels.data_loss(u, v, tau, rows, cols, vals, loss_id, pad, config.sharpness,
                                       config.hinge_smoothing)
        with np.errstate(over="ignore", invalid="ignore"):
            # overflow here is reported as divergence just below
            total = data_part + config.l2_reg * (np.sum(u * u) + np.sum(v * v))
        if not math.isfinite(total) or not np.all(np.isfinite(u)) or not np.all(np.isfinite(v)):
            raise DivergenceError(
                f"training diverged at epoch {epoch} (learning rate {lr:g}, loss {config.loss.value})"
            )
        score = val_rmse()
        loss_curve.append(float(total))
        rmse_curve.append(score)
        if score < best[0]:
            best = (score, epoch, (u.copy(), v.copy(), tau.copy()))
            stale = 0
        else:
            stale += 1
            if config.patience is not None and stale >= config.patience:
                stopped_early = True
                break
        lr *= config.lr_decay

    bu, bv, btau = best[2]
    log.debug("trained %s k=%d: %d epochs, best rmse %.4f at %d", config.loss.value, k, epoch, best[0], best[1])
    return TrainReport(
        epochs_run=len(loss_curve),
        loss_curve=loss_curve,
        rmse_curve=rmse_curve,
        final_model=FactorModel(bu, bv, btau),
        stopped_early=stopped_early,
        best_epoch=best[1],
        last_model=FactorModel(u, v, tau),
    )
