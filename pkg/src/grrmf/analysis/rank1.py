"""Exact decision of rank-1 GRF representability for small matrices.

With the signs of ``u`` and ``v`` fixed, ``u_i v_j`` lands in the open
level interval ``(tau_y, tau_{y+1})`` iff ``log|u_i| + log|v_j|`` lies in a
(possibly half-infinite) open interval. Substituting ``b_j -> -b_j`` turns
this into a system of strict difference constraints, which is feasible
iff the constraint graph has no cycle of nonpositive weight. Every sign
pattern of ``(u, v)`` in ``{-1, 0, +1}`` is tried, so a negative answer is
exhaustive rather than grid-limited.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from grrmf.analysis.witness import GrrWitness, verify_witness
from grrmf.core import OrdinalMatrix, check_thresholds
from grrmf.errors import ValidationError
from grrmf.link import grf

MAX_SIDE = 8
_TIE = 1e-12


@dataclass(frozen=True)
class Rank1Result:
    representable: bool
    witness: GrrWitness | None
    resolution: float
    patterns_checked: int
    note: str


def _log_interval(level: int, sign: int, tau: np.ndarray):
    """Open interval for ``log|x|`` given the level of ``x`` and its sign."""
    lo = -math.inf if level == 0 else tau[level - 1]
    hi = math.inf if level == tau.size else tau[level]
    if sign > 0:
        if hi <= 0:
            return None
        return (math.log(lo) if lo > 0 else -math.inf, math.log(hi) if hi < math.inf else math.inf)
    if lo >= 0:
        return None
    # x = -e^z in (lo, hi)  <=>  e^z in (-hi, -lo)
    return (math.log(-hi) if hi < 0 else -math.inf, math.log(-lo) if lo > -math.inf else math.inf)


def _constraint_graph(y, tau, row_sign, col_sign):
    """Edge-weight matrix for ``x_a - x_b < w`` stored as ``w[b, a]``; None if a zero entry is inconsistent."""
    n, m = y.shape
    size = n + m
    w = np.full((size, size), math.inf)
    zero_level = grf(0.0, tau)
    for i in range(n):
        for j in range(m):
            if row_sign[i] == 0 or col_sign[j] == 0:
                if y[i, j] != zero_level:
                    return None
                continue
            interval = _log_interval(int(y[i, j]), row_sign[i] * col_sign[j], tau)
            if interval is None:
                return None
            lo, hi = interval
            # a_i - b'_j = z with b'_j = -log|v_j|
            if hi < math.inf:
                w[n + j, i] = min(w[n + j, i], hi)
            if lo > -math.inf:
                w[i, n + j] = min(w[i, n + j], -lo)
    return w


def _shortest_paths(w):
    d = w.copy()
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def _feasible(w) -> bool:
    # strict constraints: any cycle of weight <= 0 is a contradiction
    d = _shortest_paths(w)
    return bool(np.all(np.diag(d) > _TIE))


def _solve(w, delta):
    """Potentials satisfying every constraint with slack ``delta``."""
    d = _shortest_paths(w - delta)
    if np.any(np.diag(d) < 0):
        return None
    potentials = np.minimum(0.0, d.min(axis=0))
    return potentials


def _sign_options(y, tau, col_sign, i):
    options = []
    zero_level = grf(0.0, tau)
    for s in (1, -1, 0):
        ok = True
        for j, t in enumerate(col_sign):
            if s == 0 or t == 0:
                ok = y[i, j] == zero_level
            else:
                ok = _log_interval(int(y[i, j]), s * t, tau) is not None
            if not ok:
                break
        if ok:
            options.append(s)
    return options


def rank1_grf_representable(y: OrdinalMatrix, thresholds, resolution: float = 1e-3) -> Rank1Result:
    """Decide whether ``y = GRF_tau(u v^T)`` for some real vectors ``u, v``.

    Requires ``n, m <= 8``. A positive answer carries a witness accepted by
    :func:`verify_witness`. The decision itself is exact; ``resolution`` is
    only reported, and the witness search keeps widening log-slack from 1.0
    down to well below it.
    """
    tau = check_thresholds(thresholds)
    n, m = y.shape
    if n > MAX_SIDE or m > MAX_SIDE:
        raise ValidationError(f"rank-1 decision supports at most {MAX_SIDE}x{MAX_SIDE}, got {n}x{m}")
    if tau.size != y.n_levels:
        raise ValidationError("threshold count does not match the matrix level count")
    data = y.data
    checked = 0
    # (u, v) and (-u, -v) give the same product, so the first nonzero column sign is +1
    for col_sign in itertools.product((1, -1, 0), repeat=m):
        nz = [t for t in col_sign if t != 0]
        if nz and nz[0] < 0:
            continue
        row_options = [_sign_options(data, tau, col_sign, i) for i in range(n)]
        if any(not opts for opts in row_options):
            continue
        for row_sign in itertools.product(*row_options):
            checked += 1
            w = _constraint_graph(data, tau, row_sign, col_sign)
            if w is None or not _feasible(w):
                continue
            witness = _build_witness(data, tau, w, row_sign, col_sign, resolution)
            if witness is not None and verify_witness(y, witness):
                return Rank1Result(True, witness, resolution, checked, "certified witness")
    return Rank1Result(
        False, None, resolution, checked,
        f"no rank-1 witness found at resolution {resolution:g} (all sign patterns exhausted)",
    )


def _build_witness(data, tau, w, row_sign, col_sign, resolution):
    n = data.shape[0]
    # widest slack first so the witness keeps a comfortable margin
    delta = 1.0
    while delta > 1e-12:
        pot = _solve(w, delta)
        if pot is not None:
            # unconstrained nodes sit at potential 0; that is fine
            a = pot[:n]
            b = -pot[n:]
            u = np.array([s * math.exp(ai) for s, ai in zip(row_sign, a)])[:, None]
            v = np.array([t * math.exp(bj) for t, bj in zip(col_sign, b)])[:, None]
            cand = GrrWitness(u, v, tau)
            if np.array_equal(grf(cand.real(), tau), data) and cand.min_margin > 1e-9:
                return cand
        delta /= 2.0
    return None
