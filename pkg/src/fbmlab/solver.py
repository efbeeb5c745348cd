"""Explicit Euler for ``dX = F(X) dt + b^k(X) dt + dB`` and path statistics.

The accumulated singular drift ``K_i = sum_{j<i} h b^k(X_j)`` is tracked in
the same loop, so ``X_i = x0 + sum_{j<i} h F(X_j) + K_i + B_i`` holds to
rounding for every path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import kernels, rng
from .drift import DissipativeDrift, MollifiedDrift, Representation, SingularDrift, linear_drift, mollify
from .errors import DivergenceError, InputError
from .noise import FbmPath, Grid, NoiseSplit, innovation_weights, mvn_constant, mvn_split, sample_wiener_record

__all__ = [
    "SolverConfig", "Trajectory", "resolve_drift", "integrate", "ou_reference", "CauchyTable", "drift_cauchy",
    "MomentCurve", "bound_shape", "moment_curve", "SeminormEstimate", "holder_seminorm",
    "NestedProblem", "conditional_seminorm",
]


@dataclass(frozen=True)
class SolverConfig:
    """Step ``h``, end time ``T``, mollification level ``k`` (``eps = 1/k``)."""

    h: float
    T: float
    k: int = 1
    m: float = 2.0
    ensemble: int = 1
    seed: int = 0
    t0: float = 0.0
    burn_in: float = 0.2

    def __post_init__(self):
        if not (0 < self.h <= 1):
            raise InputError(f"step must lie in (0, 1], got {self.h}")
        if self.T <= self.t0:
            raise InputError("horizon T must exceed t0")
        if self.ensemble < 1:
            raise InputError("ensemble must be >= 1")
        if self.m < 2:
            raise InputError("moment order m must be >= 2")
        if self.k < 1:
            raise InputError("mollification level k must be >= 1")

    @property
    def n(self):
        return int(round((self.T - self.t0) / self.h))

    @property
    def grid(self):
        return Grid(self.t0, self.h, self.n)

    @property
    def epsilon(self):
        return 1.0 / self.k

    @staticmethod
    def resolved_step(k, h_max=2.0 ** -6):
        """Largest dyadic step ``<= min(h_max, (1/k)^2)``."""
        target = min(h_max, 1.0 / k ** 2)
        return 2.0 ** math.floor(math.log2(target))


@dataclass(frozen=True)
class Trajectory:
    """Solver output on ``times``; ``X, K, B`` have shape ``(..., n+1, d)``."""

    times: np.ndarray
    X: np.ndarray
    K: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    noise: object = None

    @property
    def h(self):
        return float(self.times[1] - self.times[0])

    @property
    def n_paths(self):
        return self.X.shape[0] if self.X.ndim == 3 else 1

    def identity_residual(self, F):
        """Max deviation from ``X_i = x0 + sum h F(X_j) + K_i + B_i``."""
        fx = F(self.X[..., :-1, :])
        drift = np.zeros_like(self.X)
        np.cumsum(self.h * fx, axis=-2, out=drift[..., 1:, :])
        rebuilt = self.x0[..., None, :] + drift + self.K + self.B
        return float(np.abs(rebuilt - self.X).max())

    def select(self, selector):
        if callable(selector):
            return np.asarray(selector(self))
        parts = {"X": self.X, "B": self.B, "K": self.K, "X-B": self.X - self.B}
        try:
            return parts[selector]
        except KeyError:
            raise InputError(f"unknown process selector {selector!r}") from None


def _noise_values(noise, cfg):
    if isinstance(noise, NoiseSplit):
        grid, values = noise.grid, noise.history + noise.innovation
    elif isinstance(noise, FbmPath):
        grid, values = noise.grid, noise.values
    else:
        values = np.asarray(noise, dtype=float)
        grid = Grid(cfg.t0, cfg.h, values.shape[-2] - 1)
    ratio = cfg.h / grid.h
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * ratio:
        raise InputError("noise grid must refine the solver grid by an integer factor")
    if abs(grid.t0 - cfg.t0) > 1e-12:
        raise InputError("noise grid and solver grid start at different times")
    if grid.n < cfg.n * r:
        raise InputError("noise does not cover the solver horizon")
    values = values[..., : cfg.n * r + 1 : r, :]
    return values - values[..., :1, :]


def resolve_drift(b, k):
    """Drift actually integrated at mollification level ``k``.

    A :class:`SingularDrift` with ``gamma < 0`` (or without pointwise values)
    is replaced by ``P_{1/k} b``; a bounded function (``gamma >= 0``) is used
    as is.  Anything else passes through unchanged.
    """
    if isinstance(b, SingularDrift):
        if b.gamma < 0 or not b.representation.is_function:
            return mollify(b, k)
        return b.representation
    return b


def _drift_terms(bk, d):
    if bk is None:
        return {"const": np.zeros(d)}, None
    if isinstance(bk, MollifiedDrift):
        rep = bk.as_representation()
    elif isinstance(bk, SingularDrift):
        rep = bk.representation
    else:
        rep = bk
    if isinstance(rep, Representation):
        if not rep.is_function:
            raise InputError("singular drift must be mollified before integration")
        return rep.kernel_terms(), rep
    return None, rep


def integrate(x0, F, bk, noise, cfg, backend=None):
    """Explicit Euler ensemble driven by ``noise``.

    ``X_{i+1} = X_i + h F(X_i) + h b^k(X_i) + dB_i`` and
    ``K_{i+1} = K_i + h b^k(X_i)``.  ``noise`` may be an :class:`FbmPath`, a
    :class:`NoiseSplit` or an array of fBm values on a grid refining
    ``cfg.grid``.  Raises :class:`DivergenceError` on a non-finite state.
    """
    B = _noise_values(noise, cfg)
    single = B.ndim == 2
    Bp = B[None] if single else B
    P, _, d = Bp.shape
    x0 = np.asarray(x0, dtype=float)
    x0p = np.broadcast_to(x0.reshape(-1, d) if x0.ndim <= 1 else x0, (P, d))
    dB = np.diff(Bp, axis=1)
    terms, rep = _drift_terms(bk, d)
    if F is None:
        F = linear_drift(0.0, d)
    h = cfg.h
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        if terms is not None and F.kappa is not None:
            X, K, bad = kernels.euler_closed_form(x0p, dB, h, 1, F.kappa, terms, backend)
        else:
            X, K, bad = _euler_generic(x0p, dB, h, F, rep)
    if bad >= 0:
        raise DivergenceError(bad)
    if single:
        X, K = X[0], K[0]
    times = cfg.grid.times
    return Trajectory(times, X, K, B, x0.copy(), noise)


def _euler_generic(x0, dB, h, F, rep):
    P, n, d = dB.shape
    X = np.empty((P, n + 1, d))
    K = np.zeros((P, n + 1, d))
    X[:, 0] = x0
    for i in range(n):
        xi = X[:, i]
        b = rep(xi) if rep is not None else 0.0
        X[:, i + 1] = xi + h * F(xi) + h * b + dB[:, i]
        K[:, i + 1] = K[:, i] + h * b
        if not np.isfinite(X[:, i + 1]).all():
            return X, K, i + 1
    return X, K, -1


def ou_reference(x0, noise, cfg, backend=None):
    """Ornstein--Uhlenbeck comparison process ``dU = -U dt + dB``."""
    d = _noise_values(noise, cfg).shape[-1]
    return integrate(x0, linear_drift(1.0, d), None, noise, cfg, backend)


# --------------------------------------------------------------------------
# Cauchy property of the drift process


@dataclass(frozen=True)
class CauchyTable:
    ks: tuple
    pairs: tuple
    median: np.ndarray
    quantiles: np.ndarray  # rows: pairs, cols: 0.25, 0.5, 0.75
    median_stderr: np.ndarray
    sup_distances: np.ndarray  # (pairs, paths)

    def is_decreasing(self):
        return bool(np.all(np.diff(self.median) < 0))


def drift_cauchy(x0, F, b, ks, noise, cfg, n_boot=200, seed=0, backend=None):
    """Sup-distances ``sup_t |K^k_t - K^k'_t|`` for consecutive levels in ``ks``.

    All levels share the same noise ensemble.
    """
    ks = tuple(int(k) for k in ks)
    if any(k2 <= k1 for k1, k2 in zip(ks, ks[1:])):
        raise InputError("ks must be strictly increasing")
    Ks = []
    for k in ks:
        traj = integrate(x0, F, mollify(b, k), noise, cfg, backend)
        Ks.append(traj.K if traj.K.ndim == 3 else traj.K[None])
    sups = np.array([np.linalg.norm(K2 - K1, axis=-1).max(axis=-1) for K1, K2 in zip(Ks, Ks[1:])])
    q = np.quantile(sups, [0.25, 0.5, 0.75], axis=1).T
    g = rng.stream(seed, 0, rng.BOOTSTRAP)
    N = sups.shape[1]
    boot = np.array([np.median(sups[:, g.integers(0, N, N)], axis=1) for _ in range(n_boot)])
    return CauchyTable(ks, tuple(zip(ks, ks[1:])), q[:, 1].copy(), q, boot.std(axis=0, ddof=1), sups)


# --------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentCurve:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    m: float
    sup: float
    bound_shape: np.ndarray
    replicates: np.ndarray = field(repr=False, default=None)

    def trend(self, window, level=0.95):
        """OLS slope of the curve on ``window`` with a path-bootstrap CI."""
        lo, hi = window
        sel = (self.times >= lo) & (self.times <= hi)
        t = self.times[sel]
        slope = np.polyfit(t, self.values[sel], 1)[0]
        reps = np.polyfit(t, self.replicates[:, sel].T, 1)[0]
        a = (1 - level) / 2
        return float(slope), (float(np.quantile(reps, a)), float(np.quantile(reps, 1 - a)))


def bound_shape(times, t0, kappa1):
    """``(t - t0) ^ (1 - exp(-kappa1 (t - t0))) / kappa1`` (minimum)."""
    dt = np.asarray(times, dtype=float) - t0
    if kappa1 == 0:
        return dt
    return np.minimum(dt, -np.expm1(-kappa1 * dt) / kappa1)


def moment_curve(ensemble, m=2.0, kappa1=0.0, n_boot=200, seed=0):
    """``||X_t||_{L_m}`` along the grid with path-bootstrap standard errors."""
    if isinstance(ensemble, Trajectory):
        X, times = ensemble.X, ensemble.times
    else:
        X, times = ensemble
    if X.ndim != 3 or X.shape[0] < 30:
        raise InputError("moment_curve needs an ensemble of at least 30 paths")
    N = X.shape[0]
    powm = np.linalg.norm(X, axis=-1) ** m  # (N, n+1)
    values = powm.mean(0) ** (1 / m)
    g = rng.stream(seed, 0, rng.BOOTSTRAP)
    counts = np.stack([np.bincount(g.integers(0, N, N), minlength=N) for _ in range(n_boot)])
    reps = (counts @ powm / N) ** (1 / m)
    return MomentCurve(times, values, reps.std(axis=0, ddof=1), m, float(values.max()),
                       bound_shape(times, times[0], kappa1), reps)


# --------------------------------------------------------------------------
# Hoelder-type seminorms


@dataclass(frozen=True)
class SeminormEstimate:
    alpha: float
    m: float
    q: float
    value: float
    std_error: float
    window: tuple
    argmax: tuple
    conditional: bool = False
    label: str = ""


def _window_indices(times, window):
    s, t = window
    if t - s > 1 + 1e-12:
        raise InputError("window length must not exceed 1")
    idx = np.nonzero((times >= s - 1e-12) & (times <= t + 1e-12))[0]
    if len(idx) < 3:
        raise InputError("window must span at least 2 grid steps")
    return idx


def holder_seminorm(ensemble, selector, alpha, m=2.0, window=(0.0, 1.0)):
    """``max_{s<r} ||phi_r - phi_s||_{L_m} / (r - s)^alpha`` over grid pairs in ``window``."""
    phi = ensemble.select(selector)
    if phi.ndim == 2:
        phi = phi[None]
    idx = _window_indices(ensemble.times, window)
    phi = phi[:, idx]
    t = ensemble.times[idx]
    N, nw = phi.shape[0], len(idx)
    best, best_se, arg = -1.0, 0.0, (0, 0)
    for lag in range(1, nw):
        dist = np.linalg.norm(phi[:, lag:] - phi[:, :-lag], axis=-1) ** m  # (N, nw-lag)
        mean = dist.mean(0)
        quot = mean ** (1 / m) / (t[lag:] - t[:-lag]) ** alpha
        j = int(np.argmax(quot))
        if quot[j] > best:
            best = float(quot[j])
            se_mean = dist[:, j].std(ddof=1) / math.sqrt(N) if N > 1 else 0.0
            base = mean[j] ** (1 / m - 1) / m if mean[j] > 0 else 0.0
            best_se = float(base * se_mean / (t[j + lag] - t[j]) ** alpha)
            arg = (float(t[j]), float(t[j + lag]))
    return SeminormEstimate(alpha, m, m, best, best_se, tuple(window), arg, False, str(selector))


@dataclass(frozen=True)
class NestedProblem:
    """Inputs for conditional (nested Monte Carlo) seminorm estimates.

    Noise is built from Wiener records so the past up to ``s`` can be held
    fixed while forward increments are resampled.
    """

    x0: np.ndarray
    F: DissipativeDrift
    bk: object
    H: float
    cfg: SolverConfig
    T_hist: float | None = None


def _lq(values, q):
    """``L_q`` norm over the leading (outer) axis; ``q = inf`` uses the 0.999 quantile."""
    if math.isinf(q):
        return np.quantile(values, 0.999, axis=0)
    return (values ** q).mean(0) ** (1 / q)


def conditional_seminorm(problem, selector, alpha, m=2.0, q=None, window=(0.0, 1.0),
                         n_outer=200, n_inner=64, n_s=4, n_boot=200, seed=0, backend=None):
    """Nested Monte Carlo estimates of both conditional seminorms on ``window``.

    Returns ``(conditional, unconditional)`` where the conditional one uses
    ``phi_r - E^s phi_r`` and the unconditional one ``phi_r - phi_s``, each
    measured in ``L_{m,q}``: inner samples estimate ``E^s``, the outer ``L_q``
    norm runs over the fixed pasts (``q = inf`` reported as the 0.999 quantile
    proxy).
    """
    q = m if q is None else q
    cfg = problem.cfg
    grid = cfg.grid
    idx = _window_indices(grid.times, window)
    s_idx = np.unique(np.linspace(idx[0], idx[-2], n_s).round().astype(int))
    rec = sample_wiener_record(grid, len(np.atleast_1d(problem.x0)), seed, n_paths=n_outer, T_hist=problem.T_hist)
    split = mvn_split(rec, problem.H)
    alpha_H = mvn_constant(problem.H)
    c = innovation_weights(grid.n, grid.h, problem.H)
    d = rec.forward_increments.shape[-1]
    inner_idx = np.arange(n_outer * n_inner)

    best = {"cond": (-1.0, None, None), "plain": (-1.0, None, None)}
    for si in s_idx:
        fresh = rng.normals(seed + 1 + int(si), inner_idx, (grid.n - si, d), purpose=rng.INNER)
        fresh = fresh.reshape(n_outer, n_inner, grid.n - si, d) * math.sqrt(grid.h)
        fwd = np.broadcast_to(rec.forward_increments[:, None], (n_outer, n_inner, grid.n, d)).copy()
        fwd[:, :, si:] = fresh
        conv = np.zeros((n_outer, n_inner, grid.n + 1, d))
        for o in range(n_outer):
            conv[o, :, 1:] = signal.fftconvolve(fwd[o], c[None, :, None], axes=1)[:, : grid.n]
        B = split.history[:, None] + alpha_H * conv
        traj = integrate(np.broadcast_to(problem.x0, (n_outer * n_inner, d)), problem.F, problem.bk,
                         B.reshape(n_outer * n_inner, grid.n + 1, d), cfg, backend)
        phi = traj.select(selector).reshape(n_outer, n_inner, grid.n + 1, -1)
        r_idx = idx[idx > si]
        lags = grid.times[r_idx] - grid.times[si]
        phi_r = phi[:, :, r_idx]
        cmean = phi_r.mean(1, keepdims=True)
        cond_inner = (np.linalg.norm(phi_r - cmean, axis=-1) ** m).mean(1) ** (1 / m)  # (outer, r)
        plain_inner = (np.linalg.norm(phi_r - phi[:, :, si:si + 1], axis=-1) ** m).mean(1) ** (1 / m)
        for key, inner in (("cond", cond_inner), ("plain", plain_inner)):
            quot = _lq(inner, q) / lags ** alpha
            j = int(np.argmax(quot))
            if quot[j] > best[key][0]:
                best[key] = (float(quot[j]), inner[:, j] / lags[j] ** alpha,
                             (float(grid.times[si]), float(grid.times[r_idx[j]])))

    g = rng.stream(seed, 0, rng.BOOTSTRAP)
    out = []
    for key in ("cond", "plain"):
        value, samples, arg = best[key]
        boot = [float(_lq(samples[g.integers(0, n_outer, n_outer)], q)) for _ in range(n_boot)]
        out.append(SeminormEstimate(alpha, m, q, value, float(np.std(boot, ddof=1)), tuple(window), arg,
                                    key == "cond", str(selector)))
    return tuple(out)
