"""Randomized constructive checks of GRR lemmas.

Each check builds the factorization promised by a lemma and verifies it
against the GRF directly. These are identities, so a single violation is
a bug rather than noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from grrmf.analysis.witness import GrrWitness, verify_witness
from grrmf.core import OrdinalMatrix
from grrmf.link import grf, round_binary

CHECKS = (
    "decomposition",
    "shift",
    "scale",
    "transpose",
    "subadditivity",
    "threshold_sum",
    "threshold_subset",
)


@dataclass
class LemmaReport:
    trials: int
    seed: int
    passed: dict = field(default_factory=lambda: {name: 0 for name in CHECKS})
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_jsonl(self) -> str:
        lines = [json.dumps({"check": name, "passed": self.passed[name], "trials": self.trials}) for name in CHECKS]
        lines += [json.dumps({"violation": v}) for v in self.violations]
        return "\n".join(lines) + "\n"


def _random_witness(rng, n, m, k, n_levels, margin=1e-6):
    """Gaussian factors with thresholds placed between sorted scores."""
    if n_levels > n * m - 1:
        raise ValueError("need n*m - 1 >= n_levels to place distinct thresholds")
    while True:
        u = rng.standard_normal((n, k))
        v = rng.standard_normal((m, k))
        x = u @ v.T
        flat = np.sort(x.ravel())
        gaps = np.flatnonzero(np.diff(flat) > 2 * margin)
        if gaps.size < n_levels:
            continue
        picks = np.sort(rng.choice(gaps, size=n_levels, replace=False))
        tau = 0.5 * (flat[picks] + flat[picks + 1])
        return GrrWitness(u, v, tau)


def _ordinal(w: GrrWitness) -> OrdinalMatrix:
    return OrdinalMatrix(grf(w.real(), w.thresholds), w.thresholds.size)


def _check_decomposition(rng, w):
    tau = w.thresholds
    xs = np.concatenate([w.real().ravel(), tau, rng.normal(scale=3.0, size=50)])
    direct = grf(xs, tau)
    summed = sum(round_binary(xs, t) for t in tau)
    return bool(np.array_equal(direct, summed))


def _check_shift(rng, w, y):
    c = 0.0 if rng.random() < 0.1 else float(rng.normal(scale=5.0))
    if c == 0.0:
        # no augmentation needed: the same witness already works
        return verify_witness(y, w)
    n, m = w.u.shape[0], w.v.shape[0]
    shifted = GrrWitness(np.hstack([w.u, np.full((n, 1), c)]), np.hstack([w.v, np.ones((m, 1))]), w.thresholds + c)
    return shifted.rank == w.rank + 1 and verify_witness(y, shifted)


def _check_scale(rng, w, y):
    k = 1.0 if rng.random() < 0.1 else float(rng.uniform(0.1, 10.0))
    scaled = GrrWitness(np.sqrt(k) * w.u, np.sqrt(k) * w.v, k * w.thresholds)
    if k == 1.0 and not (np.array_equal(scaled.u, w.u) and np.array_equal(scaled.v, w.v)):
        return False
    return scaled.rank == w.rank and verify_witness(y, scaled)


def _check_transpose(w, y):
    return verify_witness(y.T, w.transpose())


def _check_subadditivity(rng, w):
    n, m = w.u.shape[0], w.v.shape[0]
    other = _random_witness(rng, n, m, int(rng.integers(1, 4)), w.thresholds.size)
    u = np.hstack([w.u, other.u])
    v = np.hstack([w.v, other.v])
    return u.shape[1] == w.rank + other.rank and np.allclose(u @ v.T, w.real() + other.real(), atol=1e-12)


def _check_threshold_sum(rng, w, y):
    # a second witness of the same Y: scale and shift the first
    a = float(rng.uniform(0.5, 3.0))
    c = float(rng.normal())
    n, m = w.u.shape[0], w.v.shape[0]
    other = GrrWitness(np.hstack([a * w.u, np.full((n, 1), c)]), np.hstack([w.v, np.ones((m, 1))]),
                       a * w.thresholds + c)
    if not verify_witness(y, other):
        return False
    combined = GrrWitness(np.hstack([w.u, other.u]), np.hstack([w.v, other.v]), w.thresholds + other.thresholds)
    return combined.rank <= w.rank + other.rank and verify_witness(y, combined)


def _check_threshold_subset(rng, w, y):
    n_thr = w.thresholds.size
    size = int(rng.integers(1, n_thr + 1))
    keep = np.sort(rng.choice(n_thr, size=size, replace=False))
    # an entry at level v sits above thresholds 0..v-1, so it keeps those indices below v
    mapping = np.array([np.sum(keep < v) for v in range(n_thr + 1)])
    coarse = OrdinalMatrix(mapping[y.data], size)
    return verify_witness(coarse, GrrWitness(w.u, w.v, w.thresholds[keep]))


def check_lemma_suite(trials: int, seed: int = 0) -> LemmaReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = LemmaReport(trials, seed)
    for t in range(trials):
        n, m = (int(s) for s in rng.integers(2, 9, size=2))
        k = int(rng.integers(1, 4))
        n_levels = int(rng.integers(1, min(5, n * m)))
        w = _random_witness(rng, n, m, k, n_levels)
        y = _ordinal(w)
        results = {
            "decomposition": _check_decomposition(rng, w),
            "shift": _check_shift(rng, w, y),
            "scale": _check_scale(rng, w, y),
            "transpose": _check_transpose(w, y),
            "subadditivity": _check_subadditivity(rng, w),
            "threshold_sum": _check_threshold_sum(rng, w, y),
            "threshold_subset": _check_threshold_subset(rng, w, y),
        }
        for name, ok in results.items():
            if ok:
                report.passed[name] += 1
            else:
                report.violations.append({"trial": t, "check": name, "n": n, "m": m, "rank": k, "levels": n_levels})
    return report
