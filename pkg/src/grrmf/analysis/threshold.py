"""Constructive witness for a GRR bound under a change of thresholds.

Given a witness ``(U, V, tau)`` of ``Y`` and new thresholds ``tau'``, the
construction combines copies of the witness that are each valid under a
slightly perturbed threshold vector ``T_i`` (``tau_i`` moved by ``eps_i``),
scales them by ``k_i > 0`` and adds a constant column ``c``. Matching the
combined thresholds ``sum_i k_i T_i + c`` to ``tau'`` fixes ``c`` and every
``k_i`` once the total scale ``s = sum_i k_i`` is chosen, so ``s`` is found
by a one-dimensional search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from grrmf.analysis.witness import GrrWitness, verify_witness
from grrmf.core import OrdinalMatrix, check_thresholds
from grrmf.errors import ValidationError

EPS_GRID_STEPS = 40
SCALE_GRID = np.geomspace(1e-3, 1e3, 241)


@dataclass
class ThresholdDemoReport:
    success: bool
    achieved_rank: int
    bound: int
    effective_rank: int
    scale: float
    shift: float
    coefficients: list = field(default_factory=list)
    epsilons: list = field(default_factory=list)
    witness: GrrWitness | None = None
    diagnostic: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "success": self.success,
            "achieved_rank": self.achieved_rank,
            "bound": self.bound,
            "effective_rank": self.effective_rank,
            "scale": self.scale,
            "shift": self.shift,
            "coefficients": self.coefficients,
            "epsilons": self.epsilons,
            "diagnostic": self.diagnostic,
        })


def _room(x: np.ndarray, tau: np.ndarray, i: int, direction: int) -> float:
    """How far ``tau_i`` may move in ``direction`` before it reaches a score or a neighbour threshold."""
    flat = x.ravel()
    if direction < 0:
        below = flat[flat < tau[i]]
        limits = [tau[i] - below.max()] if below.size else [np.inf]
        if i > 0:
            limits.append(tau[i] - tau[i - 1])
    else:
        above = flat[flat > tau[i]]
        limits = [above.min() - tau[i]] if above.size else [np.inf]
        if i + 1 < tau.size:
            limits.append(tau[i + 1] - tau[i])
    room = min(limits)
    return 1.0 if not np.isfinite(room) else float(room)


def _pick_eps(y, w, i, direction):
    """Largest ``eps`` on the grid ``room / 2^j`` keeping ``w.u w.v^T`` valid with ``tau_i`` moved by ``-eps``."""
    x = w.real()
    tau = w.thresholds
    room = _room(x, tau, i, -direction)
    for j in range(1, EPS_GRID_STEPS + 1):
        eps = direction * room / 2.0**j
        moved = tau.copy()
        moved[i] -= eps
        if np.all(np.diff(moved) > 0) and verify_witness(y, GrrWitness(w.u, w.v, moved)):
            return eps
    return None


def _numerical_rank(x: np.ndarray) -> int:
    sigma = np.linalg.svd(x, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > max(x.shape) * np.finfo(float).eps * sigma[0]))


def _attempt(y, w, tau_new, s, eps_cache):
    tau = w.thresholds
    n_thr = tau.size
    c = tau_new[-1] - s * tau[-1]
    ks = np.zeros(n_thr)
    eps = np.zeros(n_thr)
    for i in range(n_thr - 1):
        num = s * tau[i] + c - tau_new[i]
        if abs(num) <= 1e-14 * max(1.0, abs(tau_new[i])):
            continue
        direction = 1 if num > 0 else -1
        key = (i, direction)
        if key not in eps_cache:
            eps_cache[key] = _pick_eps(y, w, i, direction)
        if eps_cache[key] is None:
            return None, (-np.inf, f"no valid eps_{i + 1} on the grid room/2^j, j<={EPS_GRID_STEPS}")
        eps[i] = eps_cache[key]
        ks[i] = num / eps[i]
    k0 = s - ks.sum()
    if k0 < 0:
        return None, (k0 / s, f"k_0 = {k0:.3g} < 0 at scale {s:.3g}")
    us, vs, thr = [], [], np.zeros(n_thr)
    for k_i, coef in [(k0, None)] + [(ks[i], i) for i in range(n_thr - 1)]:
        if k_i <= 0:
            continue
        t_i = tau.copy()
        if coef is not None:
            t_i[coef] -= eps[coef]
        us.append(np.sqrt(k_i) * w.u)
        vs.append(np.sqrt(k_i) * w.v)
        thr += k_i * t_i
    n, m = w.u.shape[0], w.v.shape[0]
    if c != 0:
        us.append(np.full((n, 1), c))
        vs.append(np.ones((m, 1)))
        thr += c
    cand = GrrWitness(np.hstack(us), np.hstack(vs), thr)
    if not np.allclose(cand.thresholds, tau_new, rtol=1e-9, atol=1e-9):
        return None, (0.0, "combined thresholds do not match the target")
    cand = GrrWitness(cand.u, cand.v, tau_new)
    if not verify_witness(y, cand):
        return None, (0.0, f"combined factorization fails verification at scale {s:.3g}")
    return (cand, s, c, [float(k0)] + ks[:-1].tolist(), eps[:-1].tolist()), None


def threshold_bound_demo(y: OrdinalMatrix, witness: GrrWitness, tau_alt) -> ThresholdDemoReport:
    """Build and verify a witness for ``y`` under ``tau_alt`` of rank at most ``N k + 1``."""
    if not verify_witness(y, witness):
        raise ValidationError("witness does not reproduce the matrix")
    tau_new = check_thresholds(tau_alt)
    tau = witness.thresholds
    if tau_new.size != tau.size:
        raise ValidationError(f"expected {tau.size} thresholds, got {tau_new.size}")
    n_thr, k = tau.size, witness.rank
    bound = n_thr * k + 1
    # scales that zero one numerator keep that block out of the sum
    exact = [(tau_new[-1] - tau_new[i]) / (tau[-1] - tau[i]) for i in range(n_thr - 1)]
    scales = sorted({float(s) for s in exact if s > 0} | {1.0}) + SCALE_GRID.tolist()
    eps_cache: dict = {}
    # keep the attempt closest to feasible (largest relative k_0) for the diagnostic
    closest = (-np.inf, "no scale tried")
    for s in scales:
        found, failure = _attempt(y, witness, tau_new, s, eps_cache)
        if found is None:
            if failure[0] >= closest[0]:
                closest = failure
            continue
        cand, s, c, ks, eps = found
        return ThresholdDemoReport(
            success=True,
            achieved_rank=cand.rank,
            bound=bound,
            effective_rank=_numerical_rank(cand.real()),
            scale=float(s),
            shift=float(c),
            coefficients=ks,
            epsilons=eps,
            witness=cand,
            diagnostic="verified",
        )
    return ThresholdDemoReport(False, 0, bound, 0, float("nan"), float("nan"),
                               diagnostic=f"construction failed: {closest[1]}")
