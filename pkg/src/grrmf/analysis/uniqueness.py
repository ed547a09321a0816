"""Uniqueness conditions for completing a GRF matrix from partial observations.

With ``U`` fixed, an unobserved score ``X_ij = U_i V_j`` is a linear
combination ``sum_k a_k X_{i_k j}`` of ``k`` observed scores in the same
column. How far those observed scores may move inside their intervals
decides whether ``X_ij`` can leave its own interval.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from grrmf.core import FactorModel, ObservationSet, default_boundary_pad, level_bounds, predict_real
from grrmf.errors import ValidationError
from grrmf.link import grf
from grrmf.optim import Loss, TrainConfig, train

SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class EntryRecord:
    row: int
    col: int
    basis_rows: tuple[int, ...]
    coeffs: np.ndarray
    coeff_sum: float
    necessary_ok: bool
    epsilon_bar: float
    sufficient_ok: bool

    def as_dict(self) -> dict:
        return {
            "row": self.row,
            "col": self.col,
            "basis_rows": list(self.basis_rows),
            "coeffs": self.coeffs.tolist(),
            "coeff_sum": self.coeff_sum,
            "necessary_ok": self.necessary_ok,
            "epsilon_bar": self.epsilon_bar,
            "sufficient_ok": self.sufficient_ok,
        }


@dataclass
class UniquenessReport:
    records: list[EntryRecord]
    t_min: float
    t_max: float
    epsilon_used: float
    unverifiable_columns: list[int] = field(default_factory=list)

    def record(self, row: int, col: int) -> EntryRecord:
        for r in self.records:
            if r.row == row and r.col == col:
                return r
        raise KeyError((row, col))

    @property
    def all_sufficient(self) -> bool:
        return bool(self.records) and all(r.sufficient_ok for r in self.records)

    def to_jsonl(self) -> str:
        head = {
            "t_min": self.t_min,
            "t_max": self.t_max,
            "epsilon_used": self.epsilon_used,
            "unverifiable_columns": self.unverifiable_columns,
            "entries": len(self.records),
        }
        lines = [json.dumps(head)] + [json.dumps(r.as_dict()) for r in self.records]
        return "\n".join(lines) + "\n"


def select_basis(u_rows: np.ndarray, k: int) -> list[int] | None:
    """Greedily pick ``k`` rows maximizing the smallest singular value of the block.

    Returns positions into ``u_rows`` or None when no well-conditioned
    choice exists.
    """
    chosen: list[int] = []
    for _ in range(k):
        best, best_sigma = None, -1.0
        for r in range(u_rows.shape[0]):
            if r in chosen:
                continue
            sigma = np.linalg.svd(u_rows[chosen + [r]], compute_uv=False)[-1]
            if sigma > best_sigma:
                best, best_sigma = r, sigma
        if best is None or best_sigma < SINGULAR_TOL:
            return None
        chosen.append(best)
    return chosen


def _interval_lengths(tau: np.ndarray, pad: float) -> np.ndarray:
    padded = np.concatenate([[tau[0] - pad], tau, [tau[-1] + pad]])
    return np.diff(padded)


def _check_column(j, model, x, obs_rows, obs_vals, unobserved_rows, tau, pad, ratio, epsilon):
    k = model.rank
    if len(obs_rows) < k:
        return None
    pos = select_basis(model.u[obs_rows], k)
    if pos is None:
        return None
    basis = obs_rows[pos]
    lo_b, hi_b = level_bounds(obs_vals[pos], tau, pad)
    eps_plus = hi_b - x[basis, j]
    eps_minus = lo_b - x[basis, j]
    block = model.u[basis]
    records = []
    for i in unobserved_rows:
        a = np.linalg.solve(block.T, model.u[i])
        coeff_sum = float(np.sum(np.abs(a)))
        level = grf(x[i, j], tau)
        lo, hi = level_bounds(np.array([level]), tau, pad)
        eps_bar = float(min(hi[0] - x[i, j], x[i, j] - lo[0]))
        sgn = a >= 0
        rise = float(np.sum(a * np.where(sgn, eps_plus, eps_minus)))
        fall = float(np.sum(a * np.where(sgn, eps_minus, eps_plus)))
        records.append(EntryRecord(
            row=int(i),
            col=int(j),
            basis_rows=tuple(int(b) for b in basis),
            coeffs=a,
            coeff_sum=coeff_sum,
            necessary_ok=coeff_sum <= epsilon * ratio,
            epsilon_bar=eps_bar,
            sufficient_ok=eps_bar >= max(rise, abs(fall)),
        ))
    return records


def _check_consistent(model: FactorModel, obs: ObservationSet, x: np.ndarray):
    if model.shape != obs.shape:
        raise ValidationError(f"model shape {model.shape} does not match observations {obs.shape}")
    pred = grf(x[obs.rows, obs.cols], model.thresholds)
    bad = np.flatnonzero(pred != obs.values)
    if bad.size:
        r, c = int(obs.rows[bad[0]]), int(obs.cols[bad[0]])
        raise ValidationError(f"model disagrees with {bad.size} observed entries, first at ({r}, {c})")


def uniqueness_check(obs: ObservationSet, model: FactorModel, epsilon: float = 0.5,
                     boundary_pad: float | None = None, threads: int = 1) -> UniquenessReport:
    """Evaluate the necessary and sufficient uniqueness conditions on every unobserved entry.

    ``model`` must reproduce every observed level. Columns without ``k``
    observed rows of full rank are listed in ``unverifiable_columns``.
    Validation tags on ``obs`` are ignored: every entry counts as observed.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    tau = model.thresholds
    pad = default_boundary_pad(tau) if boundary_pad is None else float(boundary_pad)
    if not pad > 0:
        raise ValidationError("boundary_pad must be positive")
    x = predict_real(model)
    _check_consistent(model, obs, x)
    lengths = _interval_lengths(tau, pad)
    t_min, t_max = float(lengths.min()), float(lengths.max())
    ratio = t_min / t_max
    mask = obs.as_mask()
    m = obs.shape[1]
    level_grid = np.zeros(obs.shape, dtype=np.int64)
    level_grid[obs.rows, obs.cols] = obs.values

    def column(j):
        obs_rows = np.flatnonzero(mask[:, j])
        missing = np.flatnonzero(~mask[:, j])
        if missing.size == 0:
            return j, []
        return j, _check_column(j, model, x, obs_rows, level_grid[obs_rows, j], missing, tau, pad, ratio, epsilon)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(column, range(m)))
    else:
        results = [column(j) for j in range(m)]
    records, unverifiable = [], []
    for j, recs in results:
        if recs is None:
            unverifiable.append(j)
        else:
            records.extend(recs)
    return UniquenessReport(records, t_min, t_max, float(epsilon), unverifiable)


@dataclass(frozen=True)
class Counterexample:
    """Two models that agree after GRF on every observed entry but not at ``(row, col)``."""

    reference: FactorModel
    alternative: FactorModel
    row: int
    col: int
    reference_level: int
    alternative_level: int


def find_counterexample(obs: ObservationSet, model: FactorModel, row: int, col: int,
                        boundary_pad: float | None = None, margin: float = 1e-6) -> Counterexample | None:
    """Search for a change of ``V_col`` that keeps column ``col`` on its observed levels but moves ``(row, col)``.

    Each direction (up or down across the nearest threshold) is a linear
    program over the change in ``V_col``. A found completion is confirmed
    with the GRF before it is returned.
    """
    tau = model.thresholds
    pad = default_boundary_pad(tau) if boundary_pad is None else float(boundary_pad)
    x = predict_real(model)
    _check_consistent(model, obs, x)
    if obs.as_mask()[row, col]:
        raise ValidationError(f"entry ({row}, {col}) is observed")
    in_col = obs.cols == col
    rows, levels = obs.rows[in_col], obs.values[in_col]
    u = model.u
    v_col = model.v[col]
    ref_level = int(grf(x[row, col], tau))

    a_ub, b_ub = np.empty((0, model.rank)), np.empty(0)
    if rows.size:
        lo, hi = level_bounds(levels, tau, pad)
        gap = np.minimum(x[rows, col] - lo, hi - x[rows, col])
        delta = min(margin, 0.5 * float(gap.min()))
        base = x[rows, col]
        # lo + delta <= base + U_r c <= hi - delta
        a_ub = np.vstack([u[rows], -u[rows]])
        b_ub = np.concatenate([hi - delta - base, base - lo - delta])
    box = 1e3 * (1.0 + float(np.abs(v_col).max()))
    bounds = [(-box, box)] * model.rank

    for direction in (1, -1):
        if direction > 0 and ref_level == tau.size:
            continue
        if direction < 0 and ref_level == 0:
            continue
        target = tau[ref_level] if direction > 0 else tau[ref_level - 1]
        need = direction * (target - x[row, col])
        res = linprog(-direction * u[row], A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            continue
        reach = direction * float(u[row] @ res.x)
        if reach <= need:
            continue
        # land halfway past the threshold; the feasible set is convex and contains c = 0
        t = (need + 0.5 * (reach - need)) / reach
        new_v = model.v.copy()
        new_v[col] = v_col + t * res.x
        alt = FactorModel(model.u, new_v, tau)
        x_alt = predict_real(alt)
        same = np.array_equal(grf(x_alt[obs.rows, obs.cols], tau), obs.values)
        alt_level = int(grf(x_alt[row, col], tau))
        if same and alt_level != ref_level:
            return Counterexample(model, alt, int(row), int(col), ref_level, alt_level)
    return None


def refit_agreement(obs: ObservationSet, model: FactorModel, restarts: int = 20, learning_rate: float = 0.05,
                    max_epochs: int = 3000, boundary_pad: float | None = None, seed: int = 0) -> list[float]:
    """Refit ``V`` from the observations with ``U`` held at the reference and compare completions.

    Each restart draws a fresh ``V`` and trains the Round loss with the
    reference thresholds fixed. Returns, per restart, the fraction of
    unobserved entries whose GRF level matches the reference.
    """
    tau = model.thresholds
    x_ref = grf(predict_real(model), tau)
    missing = ~obs.as_mask()
    if not missing.any():
        return [1.0] * restarts
    plain = ObservationSet(obs.shape, obs.rows, obs.cols, obs.values, n_levels=tau.size)
    out = []
    for r in range(restarts):
        cfg = TrainConfig(
            loss=Loss.ROUND,
            rank=model.rank,
            learning_rate=learning_rate,
            max_epochs=max_epochs,
            patience=50,
            seed=seed + r,
            thresholds_fixed=True,
            initial_thresholds=tuple(tau),
            boundary_pad=boundary_pad,
            freeze_u=True,
        )
        fit = train(plain, cfg, u_init=model.u).final_model
        x_fit = grf(predict_real(fit), tau)
        out.append(float(np.mean(x_fit[missing] == x_ref[missing])))
    return out
