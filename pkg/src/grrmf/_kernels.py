"""Compiled SGD inner loops. Loss ids: 0 linear, 1 round, 2 multi-sigmoid."""

import math

import numpy as np
from numba import njit

LINEAR, ROUND, MULTI_SIGMOID = 0, 1, 2


@njit(cache=True, nogil=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@njit(cache=True, nogil=True)
def _hinge(z, smoothing):
    if smoothing > 0.0:
        t = z / smoothing
        if t > 30.0:
            return z
        return smoothing * math.log1p(math.exp(t))
    return z if z > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _hinge_grad(z, smoothing):
    if smoothing > 0.0:
        return _sigmoid(z / smoothing)
    return 1.0 if z > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _bounds(y, tau, pad):
    n_thr = tau.shape[0]
    lo = tau[0] - pad if y == 0 else tau[y - 1]
    hi = tau[n_thr - 1] + pad if y == n_thr else tau[y]
    return lo, hi


@njit(cache=True, nogil=True)
def entry_loss_grad(x, y, tau, loss_id, pad, sharpness, smoothing, gtau):
    """Per-entry loss and d/dx; threshold gradient accumulated into ``gtau``."""
    n_thr = tau.shape[0]
    if loss_id == LINEAR:
        r = y - x
        return r * r, -2.0 * r
    if loss_id == ROUND:
        lo, hi = _bounds(y, tau, pad)
        zl = lo - x
        zh = x - hi
        gl = _hinge_grad(zl, smoothing)
        gh = _hinge_grad(zh, smoothing)
        # d lo / d tau and d hi / d tau: the padded ends follow the outer threshold
        if y == 0:
            gtau[0] += gl
        else:
            gtau[y - 1] += gl
        if y == n_thr:
            gtau[n_thr - 1] -= gh
        else:
            gtau[y] -= gh
        return _hinge(zl, smoothing) + _hinge(zh, smoothing), gh - gl
    p = 0.0
    slope = 0.0
    for d in range(n_thr):
        s = _sigmoid(sharpness * (x - tau[d]))
        p += s
    r = y - p
    for d in range(n_thr):
        s = _sigmoid(sharpness * (x - tau[d]))
        t = sharpness * s * (1.0 - s)
        slope += t
        gtau[d] += 2.0 * r * t
    return r * r, -2.0 * r * slope


@njit(cache=True, nogil=True)
def sgd_epoch(u, v, tau, rows, cols, vals, order, loss_id, lr, l2, learn_tau, freeze_u,
              pad, sharpness, smoothing, min_gap):
    """One pass of per-entry SGD in the given order; updates in place."""
    k = u.shape[1]
    n_thr = tau.shape[0]
    gtau = np.zeros(n_thr)
    for e in order:
        i = rows[e]
        j = cols[e]
        x = 0.0
        for c in range(k):
            x += u[i, c] * v[j, c]
        for d in range(n_thr):
            gtau[d] = 0.0
        _, g = entry_loss_grad(x, vals[e], tau, loss_id, pad, sharpness, smoothing, gtau)
        for c in range(k):
            ui = u[i, c]
            vj = v[j, c]
            if not freeze_u:
                u[i, c] = ui - lr * (g * vj + 2.0 * l2 * ui)
            v[j, c] = vj - lr * (g * ui + 2.0 * l2 * vj)
        if learn_tau:
            for d in range(n_thr):
                tau[d] -= lr * gtau[d]
            for d in range(1, n_thr):
                if tau[d] < tau[d - 1] + min_gap:
                    tau[d] = tau[d - 1] + min_gap


@njit(cache=True, nogil=True)
def data_loss(u, v, tau, rows, cols, vals, loss_id, pad, sharpness, smoothing):
    k = u.shape[1]
    gtau = np.zeros(tau.shape[0])
    total = 0.0
    for e in range(rows.shape[0]):
        i = rows[e]
        j = cols[e]
        x = 0.0
        for c in range(k):
            x += u[i, c] * v[j, c]
        f, _ = entry_loss_grad(x, vals[e], tau, loss_id, pad, sharpness, smoothing, gtau)
        total += f
    return total


@njit(cache=True, nogil=True)
def predictions(u, v, tau, rows, cols, link_id, sharpness):
    """Link-mapped predictions: 0 raw, 1 GRF level, 2 multi-sigmoid."""
    k = u.shape[1]
    out = np.empty(rows.shape[0])
    for e in range(rows.shape[0]):
        i = rows[e]
        j = cols[e]
        x = 0.0
        for c in range(k):
            x += u[i, c] * v[j, c]
        if link_id == 0:
            out[e] = x
        elif link_id == 1:
            level = 0
            for d in range(tau.shape[0]):
                if x > tau[d]:
                    level += 1
            out[e] = level
        else:
            p = 0.0
            for d in range(tau.shape[0]):
                p += _sigmoid(sharpness * (x - tau[d]))
            out[e] = p
    return out
