"""NumPy implementations of the hot loops.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are tested against.
"""
from __future__ import annotations

import numpy as np

_PAIR_CHUNK = 512


def euler_closed_form(x0, dB, h, f_code, kappa, const_term, famp, ffreq, fphase,
                      gweight, gcenter, gvar):
    P, n, d = dB.shape
    X = np.empty((P, n + 1, d))
    K = np.zeros((P, n + 1, d))
    X[:, 0] = x0
    gnorm = (4.0 * np.pi * gvar) ** (-0.5 * d)
    bad = -1
    for i in range(n):
        xi = X[:, i]
        b = np.broadcast_to(const_term, (P, d)).copy()
        if len(famp):
            s = np.sin(xi @ ffreq.T + fphase)  # (P, Jf)
            b += s @ famp
        if len(gweight):
            r2 = ((xi[:, None, :] - gcenter[None, :, :]) ** 2).sum(-1)  # (P, Jg)
            b += (gnorm * np.exp(-r2 / (4.0 * gvar))) @ gweight
        fx = -kappa * xi if f_code == 1 else 0.0
        X[:, i + 1] = xi + h * fx + h * b + dB[:, i]
        K[:, i + 1] = K[:, i] + h * b
        if bad < 0 and not np.isfinite(X[:, i + 1]).all():
            bad = i + 1
    return X, K, bad


def hh_pair_sup(w, t, expo):
    N = w.shape[0]
    best = 0.0
    for start in range(0, N, _PAIR_CHUNK):
        stop = min(start + _PAIR_CHUNK, N)
        num = np.sqrt(((w[start:stop, None, :] - w[None, :, :]) ** 2).sum(-1))
        lag = np.abs(t[start:stop, None] - t[None, :])
        den = lag ** expo * np.sqrt(1.0 + np.abs(t[start:stop, None]) + np.abs(t[None, :]))
        mask = num > 0
        if mask.any():
            best = max(best, float((num[mask] / den[mask]).max()))
    return best


def holder_pair_sup(y, x, gamma):
    N = y.shape[0]
    best = 0.0
    for start in range(0, N, _PAIR_CHUNK):
        stop = min(start + _PAIR_CHUNK, N)
        den = ((x[start:stop, None, :] - x[None, :, :]) ** 2).sum(-1)
        mask = den > 0
        if not mask.any():
            continue
        num = np.sqrt(((y[start:stop, None, :] - y[None, :, :]) ** 2).sum(-1))
        best = max(best, float((num[mask] / den[mask] ** (0.5 * gamma)).max()))
    return best
