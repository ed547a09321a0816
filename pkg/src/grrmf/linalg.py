"""Singular value decomposition and best rank-k linear approximation.

The SVD is a one-sided (Hestenes) Jacobi iteration. Column pairs are
visited in round-robin order so that each round rotates ``n/2`` disjoint
pairs at once, which keeps the result deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from grrmf.core import OrdinalMatrix, as_real_matrix
from grrmf.errors import ValidationError

__all__ = ["SvdResult", "svd", "best_rank_k_error", "best_rank_k", "approx_rank_curve", "epsilon_rank",
           "write_curve_csv"]


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``X = U diag(s) V^T`` with ``s`` descending."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        k = self.singular_values.size if k is None else k
        return (self.left_vectors[:, :k] * self.singular_values[:k]) @ self.right_vectors[:, :k].T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            p, q = (np.array(z) for z in zip(*pairs))
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns not in ``keep`` by an orthonormal completion."""
    m, p = u.shape
    basis = [u[:, j] for j in range(p) if keep[j]]
    out = u.copy()
    candidates = iter(np.eye(m))
    for j in range(p):
        if keep[j]:
            continue
        for e in candidates:
            w = e.copy()
            for _ in range(2):
                for b in basis:
                    w -= (b @ w) * b
            norm = np.linalg.norm(w)
            if norm > 1e-8:
                w /= norm
                basis.append(w)
                out[:, j] = w
                break
    return out


def svd(x, tol: float = 1e-15, max_sweeps: int = 100) -> SvdResult:
    """Thin SVD by one-sided Jacobi rotations."""
    a = as_real_matrix(x)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    a = a.copy()
    m, n = a.shape
    v = np.eye(n)
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            with np.errstate(over="ignore"):
                # a vanishing gamma sends zeta to inf, which yields t = 0 (no rotation)
                zeta = np.where(active, (beta - alpha) / np.where(active, 2.0 * gamma, 1.0), 0.0)
                t = np.where(active, np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta)), 0.0)
            t = np.where(active & (zeta == 0), 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    cutoff = max(sigma[0], 1.0) * 1e-13 * max(m, n) if sigma.size else 0.0
    keep = sigma > cutoff
    u = np.zeros_like(a)
    u[:, keep] = a[:, keep] / sigma[keep]
    if not keep.all():
        u = _complete_orthonormal(u, keep)
    if transposed:
        u, v = v, u
    return SvdResult(sigma, u, v)


def _tail_sums(sigma: np.ndarray) -> np.ndarray:
    """``out[k] = sum_{i >= k} sigma_i^2`` for ``k = 0..len``."""
    sq = sigma[::-1] ** 2
    return np.concatenate([np.cumsum(sq)[::-1], [0.0]])


def best_rank_k_error(x, k: int) -> float:
    """Squared Frobenius residual of the optimal rank-``k`` approximation."""
    a = as_real_matrix(x)
    if not (0 <= k <= min(a.shape)):
        raise ValidationError(f"k must lie in 0..{min(a.shape)}, got {k}")
    return float(_tail_sums(svd(a).singular_values)[k])


def best_rank_k(x, k: int) -> np.ndarray:
    a = as_real_matrix(x)
    if not (0 <= k <= min(a.shape)):
        raise ValidationError(f"k must lie in 0..{min(a.shape)}, got {k}")
    return svd(a).reconstruct(k)


def approx_rank_curve(y, k_max: int | None = None) -> list[tuple[int, float]]:
    """``(k, residual)`` for ``k = 0..k_max`` where residual is the rank-k error."""
    data = y.data if isinstance(y, OrdinalMatrix) else y
    a = as_real_matrix(data)
    limit = min(a.shape)
    k_max = limit if k_max is None else k_max
    if not (0 <= k_max <= limit):
        raise ValidationError(f"k_max must lie in 0..{limit}")
    tails = _tail_sums(svd(a).singular_values)
    return [(k, float(tails[k])) for k in range(k_max + 1)]


def epsilon_rank(y, eps: float) -> int:
    """Smallest ``k`` whose best rank-k squared error is at most ``eps``."""
    for k, res in approx_rank_curve(y):
        if res <= eps:
            return k
    raise AssertionError("full rank always reaches zero residual")


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "residual"])
        for k, r in curve:
            w.writerow([k, repr(r)])
