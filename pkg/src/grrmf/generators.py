"""Synthetic matrix families with explicit low-rank GRF witnesses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from grrmf.analysis.witness import GrrWitness as Witness
from grrmf.core import FactorModel, ObservationSet, OrdinalMatrix, default_boundary_pad
from grrmf.errors import ValidationError
from grrmf.link import grf

__all__ = [
    "Family",
    "SyntheticSpec",
    "Generated",
    "Witness",
    "generate",
    "identity",
    "upper_triangle",
    "band_diagonal",
    "random_low_grr",
    "identity_witness",
    "upper_triangle_witness",
    "band_diagonal_witness",
    "complement_witness",
    "figure_one_matrices",
    "CompletionInstance",
    "planted_uniqueness_violation",
    "well_margined_instance",
]


class Family(str, Enum):
    IDENTITY = "identity"
    UPPER_TRIANGLE = "upper_triangle"
    BAND_DIAGONAL = "band_diagonal"
    RANDOM_LOW_GRR = "random_low_grr"


@dataclass(frozen=True)
class SyntheticSpec:
    family: Family
    n: int
    seed: int = 0
    bandwidth: int = 3
    rank: int = 2
    n_levels: int = 5
    random_thresholds: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.n < 1:
            raise ValidationError("size n must be >= 1")
        if self.family is Family.BAND_DIAGONAL and not (1 <= self.bandwidth < self.n):
            raise ValidationError(f"bandwidth must satisfy 1 <= w < n, got w={self.bandwidth}, n={self.n}")
        if self.rank < 1 or self.n_levels < 1:
            raise ValidationError("rank and n_levels must be >= 1")


@dataclass(frozen=True)
class Generated:
    matrix: OrdinalMatrix
    witness: Witness | None
    name: str


def identity(n: int) -> OrdinalMatrix:
    return OrdinalMatrix(np.eye(n, dtype=np.int64), 1)


def upper_triangle(n: int) -> OrdinalMatrix:
    return OrdinalMatrix(np.triu(np.ones((n, n), dtype=np.int64)), 1)


def band_diagonal(n: int, bandwidth: int) -> OrdinalMatrix:
    idx = np.arange(n)
    return OrdinalMatrix((np.abs(idx[:, None] - idx[None, :]) < bandwidth).astype(np.int64), 1)


def upper_triangle_witness(n: int, tau: float = 0.5) -> Witness:
    """Rank-1: ``X_ij = 2 tau (j + 1) / (2 i + 1)`` exceeds ``tau`` iff ``j >= i``."""
    i = np.arange(n, dtype=float)
    u = (2.0 * tau / (2.0 * i + 1.0))[:, None]
    v = (i + 1.0)[:, None]
    return Witness(u, v, np.array([tau]))


def _circle_witness(n: int, width: int, tau: float) -> Witness:
    # points on an arc; X_ij = r^2 cos((i - j) * step) is largest near the diagonal
    step = min(2.0 * math.pi / (n + width), math.pi / (2 * width + 1))
    angles = np.arange(n) * step
    inner = math.cos((width - 1) * step)
    outer = math.cos(width * step)
    r2 = tau / (0.5 * (inner + outer))
    pts = math.sqrt(r2) * np.column_stack([np.cos(angles), np.sin(angles)])
    return Witness(pts, pts.copy(), np.array([tau]))


def identity_witness(n: int, tau: float = 0.5) -> Witness:
    """Rank-2 witness for ``I_n`` from points on a circle."""
    return _circle_witness(n, 1, tau)


def band_diagonal_witness(n: int, bandwidth: int, tau: float = 0.5) -> Witness:
    """Rank-2 witness for ``|i - j| < bandwidth``."""
    return _circle_witness(n, bandwidth, tau)


def complement_witness(w: Witness) -> Witness:
    """Witness for ``1 - Y`` (binary): negate the scores and the threshold."""
    return Witness(-w.u, w.v.copy(), -w.thresholds[::-1])


def _quantile_thresholds(x: np.ndarray, n_levels: int) -> np.ndarray:
    # midpoints between neighbouring sorted scores, so no entry sits on a threshold
    flat = np.sort(x.ravel())
    size = flat.size
    tau = []
    for d in range(1, n_levels + 1):
        pos = int(round(d * size / (n_levels + 1)))
        pos = min(max(pos, 1), size - 1)
        tau.append(0.5 * (flat[pos - 1] + flat[pos]))
    tau = np.array(tau)
    if np.any(np.diff(tau) <= 0):
        raise ValidationError("too few distinct scores to place thresholds")
    return tau


def random_low_grr(n: int, rank: int, n_levels: int, seed: int, m: int | None = None,
                   random_thresholds: bool = False) -> Generated:
    """``GRF_tau(U V^T)`` with standard normal factors.

    Thresholds are score quantiles by default so that every level occurs;
    ``random_thresholds`` instead draws them uniformly over the score range.
    """
    m = n if m is None else m
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, rank))
    v = rng.standard_normal((m, rank))
    x = u @ v.T
    if random_thresholds:
        lo, hi = float(x.min()), float(x.max())
        while True:
            tau = np.sort(rng.uniform(lo, hi, size=n_levels))
            gaps = np.min(np.abs(x[..., None] - tau))
            if np.all(np.diff(tau) > 0) and gaps > 1e-9:
                break
    else:
        tau = _quantile_thresholds(x, n_levels)
    y = OrdinalMatrix(grf(x, tau), n_levels)
    return Generated(y, Witness(u, v, tau), f"random_grr_n{n}_k{rank}_N{n_levels}_s{seed}")


def generate(spec: SyntheticSpec) -> Generated:
    n = spec.n
    if spec.family is Family.IDENTITY:
        return Generated(identity(n), identity_witness(n), f"identity_{n}")
    if spec.family is Family.UPPER_TRIANGLE:
        return Generated(upper_triangle(n), upper_triangle_witness(n), f"upper_triangle_{n}")
    if spec.family is Family.BAND_DIAGONAL:
        return Generated(
            band_diagonal(n, spec.bandwidth), band_diagonal_witness(n, spec.bandwidth), f"band_{n}_w{spec.bandwidth}"
        )
    return random_low_grr(n, spec.rank, spec.n_levels, spec.seed, random_thresholds=spec.random_thresholds)


def figure_one_matrices(n: int) -> list[Generated]:
    """Binary families with rank <= 2 witnesses: three structures and their complements."""
    if n < 4:
        raise ValidationError("figure-one family needs n >= 4")
    base = [
        Generated(identity(n), identity_witness(n), "identity"),
        Generated(upper_triangle(n), upper_triangle_witness(n), "upper_triangle"),
        Generated(band_diagonal(n, 3), band_diagonal_witness(n, 3), "band_diagonal_w3"),
    ]
    out = list(base)
    for g in base:
        comp = OrdinalMatrix(1 - g.matrix.data, 1)
        out.append(Generated(comp, complement_witness(g.witness), f"{g.name}_complement"))
    return out


@dataclass(frozen=True)
class CompletionInstance:
    """A reference factor model, its observed entries and the padding used for its intervals."""

    model: FactorModel
    observations: ObservationSet
    boundary_pad: float
    planted: tuple[int, int] | None = None


def planted_uniqueness_violation(seed: int = 0, n: int = 8) -> CompletionInstance:
    """Binary rank-2 instance where unobserved row ``n-1`` is twice observed row 0 in column 0.

    Column 0 is observed only at rows 0 and 1, so the combination
    coefficients for ``(n-1, 0)`` are exactly ``(2, 0)``.
    """
    rng = np.random.default_rng(seed)
    tau = np.array([0.5])
    while True:
        u = rng.standard_normal((n, 2))
        u[n - 1] = 2.0 * u[0]
        v = rng.standard_normal((n, 2))
        # X_00 = 0.375 (level 0), so X_{n-1,0} = 0.75 (level 1)
        v[0] = np.linalg.solve(u[:2], np.array([0.375, -0.8]))
        x = u @ v.T
        if np.min(np.abs(x - tau[0])) > 1e-2 and np.abs(x).max() < 5:
            break
    y = grf(x, tau)
    mask = np.ones((n, n), dtype=bool)
    mask[2:, 0] = False
    rows, cols = np.nonzero(mask)
    obs = ObservationSet((n, n), rows, cols, y[rows, cols], n_levels=1)
    return CompletionInstance(FactorModel(u, v, tau), obs, default_boundary_pad(tau), (n - 1, 0))


def well_margined_instance(seed: int = 0, n: int = 8, small_rows: int = 2, hidden_cols: int = 4,
                           margin: float = 0.1) -> CompletionInstance:
    """Densely observed three-level rank-2 instance built to meet the sufficient condition.

    Every interval has length 1 (thresholds -0.5, 0.5 and padding 1). The
    last ``small_rows`` rows have small factors, so their scores sit near 0,
    deep inside the middle level; those rows are hidden in the first
    ``hidden_cols`` columns.
    """
    rng = np.random.default_rng(seed)
    tau = np.array([-0.5, 0.5])
    pad = 1.0
    while True:
        u = 0.6 * rng.standard_normal((n, 2))
        u[n - small_rows:] *= 0.15
        v = 0.6 * rng.standard_normal((n, 2))
        x = u @ v.T
        edges = np.array([tau[0] - pad, tau[0], tau[1], tau[1] + pad])
        if np.min(np.abs(x[..., None] - edges)) > margin and np.abs(x).max() < tau[1] + pad:
            break
    y = grf(x, tau)
    mask = np.ones((n, n), dtype=bool)
    mask[n - small_rows:, :hidden_cols] = False
    rows, cols = np.nonzero(mask)
    obs = ObservationSet((n, n), rows, cols, y[rows, cols], n_levels=2)
    return CompletionInstance(FactorModel(u, v, tau), obs, pad)
