from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from grrmf.core import OrdinalMatrix, as_real_matrix, check_thresholds
from grrmf.errors import StructuralError
from grrmf.link import grf

MIN_MARGIN = 1e-9


@dataclass(frozen=True)
class GrrWitness:
    """Explicit ``(U, V, tau)`` claimed to satisfy ``GRF_tau(U V^T) == Y``."""

    u: np.ndarray
    v: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        u, v = as_real_matrix(self.u), as_real_matrix(self.v)
        if u.shape[1] != v.shape[1]:
            raise StructuralError("witness factors have different ranks")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "thresholds", check_thresholds(self.thresholds))

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def real(self) -> np.ndarray:
        return self.u @ self.v.T

    @property
    def min_margin(self) -> float:
        """Smallest distance of any score to any threshold."""
        return float(np.min(np.abs(self.real()[..., None] - self.thresholds)))

    def transpose(self) -> "GrrWitness":
        return GrrWitness(self.v, self.u, self.thresholds)


def verify_witness(y: OrdinalMatrix, w: GrrWitness, min_margin: float = MIN_MARGIN) -> bool:
    """True iff ``w`` reproduces ``y`` exactly with every score off the thresholds."""
    if w.u.shape[0] != y.n_rows or w.v.shape[0] != y.n_cols:
        return False
    if w.thresholds.size != y.n_levels:
        return False
    x = w.real()
    return bool(np.array_equal(grf(x, w.thresholds), y.data) and w.min_margin > min_margin)
