"""Link functions mapping real scores to ordinal levels.

Every step function uses the same tie rule: a value exactly on a threshold
goes to the lower level.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from grrmf.core import check_thresholds
from grrmf.errors import ValidationError

__all__ = [
    "LinkKind",
    "Link",
    "grf",
    "round_binary",
    "sign",
    "multi_sigmoid",
    "multi_sigmoid_grad",
]


class LinkKind(str, Enum):
    IDENTITY = "identity"
    SIGN = "sign"
    ROUND = "round"
    GRF = "grf"
    MULTI_SIGMOID = "multi_sigmoid"


@dataclass(frozen=True)
class Link:
    """A link function together with its parameters."""

    kind: LinkKind
    thresholds: tuple[float, ...] = ()
    sharpness: float = 1.0

    def __post_init__(self):
        kind = LinkKind(self.kind)
        object.__setattr__(self, "kind", kind)
        tau = tuple(float(t) for t in np.atleast_1d(self.thresholds)) if len(np.atleast_1d(self.thresholds)) else ()
        object.__setattr__(self, "thresholds", tau)
        if kind is LinkKind.ROUND and len(tau) != 1:
            raise ValidationError("round link takes exactly one threshold")
        if kind in (LinkKind.GRF, LinkKind.MULTI_SIGMOID):
            check_thresholds(tau)
        if not self.sharpness > 0:
            raise ValidationError("sharpness must be positive")

    def __call__(self, x):
        if self.kind is LinkKind.IDENTITY:
            return np.asarray(x, dtype=float)
        if self.kind is LinkKind.SIGN:
            return sign(x)
        if self.kind is LinkKind.ROUND:
            return round_binary(x, self.thresholds[0])
        if self.kind is LinkKind.GRF:
            return grf(x, self.thresholds)
        return multi_sigmoid(x, self.thresholds, self.sharpness)


def grf(x, thresholds):
    """Generalized round function: number of thresholds strictly below ``x``.

    Works element-wise on arrays; scalars come back as Python ints.
    """
    tau = check_thresholds(thresholds)
    levels = np.searchsorted(tau, x, side="left")
    return int(levels) if np.ndim(levels) == 0 else levels.astype(np.int64)


def round_binary(x, tau: float):
    """0 where ``x <= tau``, 1 elsewhere."""
    out = (np.asarray(x) > tau).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def sign(x):
    """0/1 sign: 0 where ``x < 0``, 1 otherwise."""
    out = (np.asarray(x) >= 0).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def _sigmoids(x, tau, sharpness):
    x = np.asarray(x, dtype=float)
    return expit(sharpness * (x[..., None] - tau))


def multi_sigmoid(x, thresholds, sharpness: float = 1.0):
    """Smooth surrogate ``sum_d sigmoid(s * (x - tau_d))`` of the GRF."""
    if not sharpness > 0:
        raise ValidationError("sharpness must be positive")
    tau = check_thresholds(thresholds)
    out = _sigmoids(x, tau, sharpness).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def multi_sigmoid_grad(x, thresholds, sharpness: float = 1.0):
    """Derivatives of :func:`multi_sigmoid` w.r.t. ``x`` and each threshold.

    Returns ``(d_dx, d_dtau)`` where ``d_dtau`` has a trailing axis of length N.
    """
    if not sharpness > 0:
        raise ValidationError("sharpness must be positive")
    tau = check_thresholds(thresholds)
    s = _sigmoids(x, tau, sharpness)
    terms = sharpness * s * (1.0 - s)
    d_dx = terms.sum(axis=-1)
    d_dx = float(d_dx) if d_dx.ndim == 0 else d_dx
    return d_dx, -terms
