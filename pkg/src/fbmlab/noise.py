"""Fractional Brownian motion on uniform grids.

Two generators are provided:

* :func:`sample_fbm_circulant` -- exact-in-law increments by circulant
  embedding of the fractional Gaussian noise covariance.
* :func:`sample_wiener_record` + :func:`mvn_split` -- the Mandelbrot--Van Ness
  moving-average representation driven by stored Wiener increments, which
  exposes the split of ``B_t - B_{t0}`` into a *history* part (measurable
  w.r.t. the Wiener increments before ``t0``) and an *innovation* part
  (measurable w.r.t. the increments after ``t0``).

Arrays follow the convention ``(..., time, d)``: any number of leading
ensemble axes, then grid time, then space.  fBm values are always stored
relative to the initial grid time, ``B(t_i) - B(t0)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, signal

from . import kernels, rng
from .errors import CirculantError, DomainError, InputError, WindowError

__all__ = [
    "Grid", "FbmPath", "CirculantSeed", "WienerRecord", "HistoryPath", "NoiseSplit",
    "check_hurst", "fbm_covariance", "fgn_autocovariance", "mvn_constant",
    "sample_fbm_circulant", "sample_wiener_record", "innovation_weights", "history_kernel",
    "truncation_bound", "mvn_split", "history_operator", "conditional_mean", "hh_norm",
]

#: history window length as a multiple of the forward horizon
DEFAULT_HISTORY_FACTOR = 64.0
#: eigenvalues above ``-CLIP_RTOL * max`` are clipped to zero
CLIP_RTOL = 1e-12
_PATH_CHUNK = 1024


def check_hurst(H):
    if not (0.0 < H < 1.0) or not math.isfinite(H):
        raise DomainError(f"Hurst index must lie in (0, 1), got {H!r}")
    return float(H)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = t0 + i h`` for ``i = 0..n``."""

    t0: float
    h: float
    n: int

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InputError(f"grid step must be positive, got {self.h!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"grid needs n >= 1 steps, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def times(self):
        return self.t0 + self.h * np.arange(self.n + 1)

    @property
    def T(self):
        return self.t0 + self.h * self.n

    def index(self, t):
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        x = (t - self.t0) / self.h
        i = int(round(x))
        if abs(x - i) > 1e-9 * max(1.0, abs(x)) or not (0 <= i <= self.n):
            raise InputError(f"time {t!r} is not a point of {self}")
        return i


# --------------------------------------------------------------------------
# covariance and normalisation


def fbm_covariance(s, t, H):
    """Covariance ``E[B_s B_t]`` of a standard fBm (scalar or broadcast arrays)."""
    check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    two_h = 2.0 * H
    out = 0.5 * (np.abs(s) ** two_h + np.abs(t) ** two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, H):
    """Autocovariance of unit-step fractional Gaussian noise at integer lag ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * H
    return 0.5 * ((k + 1) ** two_h - 2 * k ** two_h + np.abs(k - 1) ** two_h)


@lru_cache(maxsize=64)
def mvn_constant(H):
    """Normalisation ``alpha_H`` of the moving-average representation.

    Chosen so that ``Var(B_1) = 1``::

        alpha_H = (1/(2H) + int_0^inf ((1+s)^(H-1/2) - s^(H-1/2))^2 ds)^(-1/2)

    The integral is evaluated by adaptive quadrature (split at 1 for the
    integrable singularity at 0 when ``H < 1/2``).
    """
    check_hurst(H)
    a = H - 0.5
    if a == 0.0:
        return 1.0

    def f(s):
        return ((1.0 + s) ** a - s ** a) ** 2

    near, _ = integrate.quad(f, 0.0, 1.0, limit=200)
    far, _ = integrate.quad(f, 1.0, np.inf, limit=200)
    return (1.0 / (2.0 * H) + near + far) ** -0.5


# --------------------------------------------------------------------------
# circulant embedding


@dataclass(frozen=True)
class CirculantSeed:
    """Provenance of a circulant-embedding sample."""

    seed: int
    path_indices: tuple
    embedding_size: int


@dataclass(frozen=True)
class FbmPath:
    """fBm sampled on ``grid``; ``values[..., i, :] = B(t_i) - B(t0)``."""

    grid: Grid
    values: np.ndarray
    hurst: float
    source: object = None

    @property
    def increments(self):
        return np.diff(self.values, axis=-2)

    @property
    def d(self):
        return self.values.shape[-1]


def _embedding_sizes(n):
    yield n
    m = 1 << (n - 1).bit_length()
    if m == n:
        m *= 2
    while m <= 4 * n:
        yield m
        m *= 2


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(n, H):
    for m in _embedding_sizes(n):
        g = fgn_autocovariance(np.arange(m + 1), H)
        row = np.concatenate([g, g[m - 1:0:-1]])
        lam = np.fft.fft(row).real
        top = lam.max()
        if lam.min() < -CLIP_RTOL * top:
            continue
        lam = np.clip(lam, 0.0, None)
        return np.sqrt(lam / (2 * m)), m
    raise CirculantError(f"circulant embedding not nonnegative for n={n}, H={H} up to 4x padding")


def _circulant_chunk(indices, n, d, H, seed, sqrt_lam, m):
    z = rng.normals(seed, indices, (d, 2, 2 * m), purpose=rng.FBM)
    y = np.fft.fft(sqrt_lam * (z[:, :, 0] + 1j * z[:, :, 1]), axis=-1)
    return np.swapaxes(y.real[..., :n], -1, -2)  # (P, n, d)


def sample_fbm_circulant(grid, H, d=1, seed=0, n_paths=None, path_indices=None, workers=1):
    """Sample fBm on ``grid`` by circulant embedding (Davies--Harte).

    With ``n_paths=None`` a single path of shape ``(n+1, d)`` is returned;
    otherwise an ensemble ``(n_paths, n+1, d)``.  Path ``i`` depends only on
    ``(seed, path_indices[i])``, never on the ensemble size or on
    ``workers``.
    """
    H = check_hurst(H)
    single = n_paths is None and path_indices is None
    if path_indices is None:
        path_indices = np.arange(1 if n_paths is None else int(n_paths))
    path_indices = np.asarray(path_indices, dtype=np.int64)
    sqrt_lam, m = _circulant_sqrt_eigs(grid.n, H)
    chunks = [path_indices[i:i + _PATH_CHUNK] for i in range(0, len(path_indices), _PATH_CHUNK)]

    def work(ix):
        return _circulant_chunk(ix, grid.n, d, H, seed, sqrt_lam, m)

    if workers and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(ix) for ix in chunks]
    incr = np.concatenate(parts, axis=0) * grid.h ** H
    values = np.zeros((len(path_indices), grid.n + 1, d))
    np.cumsum(incr, axis=1, out=values[:, 1:])
    if single:
        values = values[0]
    src = CirculantSeed(int(seed), tuple(int(i) for i in path_indices), 2 * m)
    return FbmPath(grid, values, H, src)


# --------------------------------------------------------------------------
# Mandelbrot--Van Ness representation


@dataclass(frozen=True)
class WienerRecord:
    """Wiener increments covering ``[t0 - T_hist, T]``.

    ``history_increments[..., k, :]`` is the increment over
    ``[t0 - T_hist + k h_hist, t0 - T_hist + (k+1) h_hist]`` (chronological);
    ``forward_increments[..., j, :]`` the one over ``[t0 + j h_fwd, t0 + (j+1) h_fwd]``.
    ``tail_normals`` drives the analytic correction for the Wiener path
    before ``t0 - T_hist``.
    """

    seed: int
    t0: float
    history_increments: np.ndarray
    forward_increments: np.ndarray
    h_hist: float
    h_fwd: float
    tail_normals: np.ndarray

    @property
    def T_hist(self):
        return self.history_increments.shape[-2] * self.h_hist

    @property
    def grid(self):
        return Grid(self.t0, self.h_fwd, self.forward_increments.shape[-2])

    def history_path(self):
        return HistoryPath.from_increments(self.history_increments, self.h_hist)


def sample_wiener_record(grid, d=1, seed=0, n_paths=None, T_hist=None, h_hist=None, path_indices=None):
    """Draw the Wiener increments needed by :func:`mvn_split` on ``grid``.

    History increments are drawn from the most recent cell backwards, so a
    longer window extends (rather than changes) a shorter one; forward and
    history increments use separate streams.
    """
    span = grid.n * grid.h
    T_hist = DEFAULT_HISTORY_FACTOR * span if T_hist is None else float(T_hist)
    h_hist = grid.h if h_hist is None else float(h_hist)
    M = int(round(T_hist / h_hist))
    if M < 1:
        raise InputError("history window must contain at least one cell")
    single = n_paths is None and path_indices is None
    if path_indices is None:
        path_indices = np.arange(1 if n_paths is None else int(n_paths))
    hist = rng.normals(seed, path_indices, (M, d), purpose=rng.HISTORY)[:, ::-1] * math.sqrt(h_hist)
    fwd = rng.normals(seed, path_indices, (grid.n, d), purpose=rng.FORWARD) * math.sqrt(grid.h)
    tail = rng.normals(seed, path_indices, (d,), purpose=rng.TAIL)
    if single:
        hist, fwd, tail = hist[0], fwd[0], tail[0]
    return WienerRecord(int(seed), float(grid.t0), np.ascontiguousarray(hist), fwd, h_hist, grid.h, tail)


@dataclass(frozen=True)
class HistoryPath:
    """Recentred noise history ``w`` sampled on ``[-M h, 0]``; ``w(0) = 0``."""

    values: np.ndarray
    h: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2 or v.shape[-2] < 2:
            raise InputError("history path needs at least 2 samples of shape (..., M+1, d)")
        if not np.isfinite(v).all():
            raise InputError("history path has non-finite samples")
        if np.any(v[..., -1, :] != 0.0):
            raise InputError("history path must satisfy w(0) = 0")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_increments(cls, increments, h):
        incr = np.asarray(increments, dtype=float)
        tail_sums = np.cumsum(incr[..., ::-1, :], axis=-2)[..., ::-1, :]
        zero = np.zeros(incr.shape[:-2] + (1, incr.shape[-1]))
        return cls(np.concatenate([-tail_sums, zero], axis=-2), float(h))

    @classmethod
    def zeros(cls, window, h, d=1):
        M = int(round(window / h))
        return cls(np.zeros((M + 1, d)), float(h))

    @property
    def M(self):
        return self.values.shape[-2] - 1

    @property
    def window(self):
        return self.M * self.h

    @property
    def times(self):
        return -self.window + self.h * np.arange(self.M + 1)

    @property
    def increments(self):
        return np.diff(self.values, axis=-2)


@dataclass(frozen=True)
class NoiseSplit:
    """History/innovation split of ``B_t - B_{t0}`` on ``grid``."""

    grid: Grid
    hurst: float
    history: np.ndarray
    innovation: np.ndarray
    metadata: dict = field(default_factory=dict)
    record: WienerRecord | None = None

    @property
    def fbm(self):
        return FbmPath(self.grid, self.history + self.innovation, self.hurst, self.record)


def _pow_diff(x, y, b):
    """``x**b - y**b`` for ``x >= y >= 0`` without cancellation when ``x ~ y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    safe = np.where(y > 0, y, 1.0)
    close = y ** b * np.expm1(b * np.log1p((x - y) / safe))
    return np.where(y > 0, close, x ** b)


def innovation_weights(n, h, H):
    """Cell-averaged moving-average kernel ``c_k``, ``k = 1..n``.

    ``c_k`` is the mean of ``(t - u)^(H-1/2)`` over the Wiener cell ending
    ``k - 1`` steps before ``t``; exact cell integration keeps the weight
    finite at ``u -> t`` when ``H < 1/2``.
    """
    b = H + 0.5
    k = np.arange(1, n + 1, dtype=float)
    return h ** (H - 0.5) * _pow_diff(k, k - 1, b) / b


def _cell_average(tau, p, h, H):
    """Mean of ``(tau - r)^(H-1/2)`` over the history cell ``r in [-p h, -(p-1) h]``."""
    b = H + 0.5
    lo = tau + (p - 1) * h
    return _pow_diff(lo + h, lo, b) / (b * h)


@lru_cache(maxsize=64)
def _history_kernel_cached(taus, M, h, H):
    taus = np.asarray(taus)
    if H == 0.5:
        return np.zeros((len(taus), M))
    p = np.arange(M, 0, -1, dtype=float)  # chronological: oldest cell first
    G = _cell_average(taus[:, None], p[None, :], h, H) - _cell_average(0.0, p, h, H)[None, :]
    G.setflags(write=False)
    return G


def history_kernel(taus, M, h, H):
    """Matrix ``G[i, k]`` mapping history increments to ``Bbar(t0 + taus[i])``/alpha_H.

    Columns follow the chronological increment order of :class:`WienerRecord`.
    """
    taus = tuple(float(t) for t in np.atleast_1d(taus))
    return _history_kernel_cached(taus, int(M), float(h), float(H))


def _tail_variance(H, T_hist, tau, corrected):
    a = H - 0.5

    def f(s):
        v = (tau + s) ** a - s ** a
        if corrected:
            v -= a * tau * s ** (a - 1.0)
        return v * v

    val, _ = integrate.quad(f, T_hist, np.inf, limit=200)
    return max(val, 0.0)


def truncation_bound(H, T_hist, tau, corrected=True):
    """Standard deviation of the history contribution neglected by the window.

    With ``corrected=True`` the bound is for the residual after the
    first-order (linear in ``tau``) tail correction applied by
    :func:`mvn_split`.
    """
    if H == 0.5 or tau <= 0:
        return 0.0
    return mvn_constant(H) * math.sqrt(_tail_variance(H, T_hist, tau, corrected))


def _tail_scale(H, T_hist):
    # std of int_{T_hist}^inf s^(H-3/2) dW
    return math.sqrt(T_hist ** (2 * H - 2) / (2 - 2 * H))


def mvn_split(rec, H, grid=None, tail_tol=1e-3):
    """Split the fBm generated by ``rec`` into history and innovation.

    ``history(t_i)`` integrates the kernel difference against the history
    increments (cell-averaged, exact for piecewise-linear Wiener paths) plus
    a first-order correction for the Wiener path before the window;
    ``innovation(t_i)`` is the causal convolution of the forward increments
    with :func:`innovation_weights`.  Truncation diagnostics are placed in
    ``metadata``; an insufficient window is recorded, not raised.
    """
    H = check_hurst(H)
    if grid is None:
        grid = rec.grid
    n = rec.forward_increments.shape[-2]
    if grid.n != n or not math.isclose(grid.h, rec.h_fwd):
        raise InputError("grid does not match the forward increments of the record")
    alpha = mvn_constant(H)
    taus = grid.h * np.arange(n + 1)
    fwd = rec.forward_increments
    hist_incr = rec.history_increments
    M = hist_incr.shape[-2]

    innovation = np.zeros(fwd.shape[:-2] + (n + 1, fwd.shape[-1]))
    c = innovation_weights(n, grid.h, H)
    shape = [1] * fwd.ndim
    shape[-2] = n
    conv = signal.fftconvolve(fwd, c.reshape(shape), axes=-2)[..., :n, :]
    innovation[..., 1:, :] = alpha * conv

    G = history_kernel(taus, M, rec.h_hist, H)
    history = alpha * np.matmul(G, hist_incr)
    T_hist = rec.T_hist
    if H != 0.5:
        scale = alpha * (H - 0.5) * _tail_scale(H, T_hist)
        history = history + scale * taus[:, None] * rec.tail_normals[..., None, :]

    span = taus[-1]
    raw = truncation_bound(H, T_hist, span, corrected=False)
    residual = truncation_bound(H, T_hist, span, corrected=True)
    meta = {
        "hurst": H,
        "alpha_H": alpha,
        "T_hist": T_hist,
        "h_hist": rec.h_hist,
        "seed": rec.seed,
        "tail_std_uncorrected": raw,
        "truncation_bound": residual,
        "tail_tol": tail_tol,
        "truncation_ok": bool(residual <= tail_tol),
    }
    return NoiseSplit(grid, H, history, innovation, meta, rec)


def history_operator(w, H, t0, t):
    """Evaluate the history operator ``A^{t0}(w)`` at time(s) ``t >= t0``.

    Uses the same cell-averaged quadrature as :func:`mvn_split`, i.e. the
    exact kernel integral against the piecewise-linear interpolant of ``w``.
    Scalar ``t`` gives shape ``(..., d)``; an array gives ``(..., len(t), d)``.
    """
    H = check_hurst(H)
    if not isinstance(w, HistoryPath):
        raise InputError("history_operator expects a HistoryPath")
    scalar = np.ndim(t) == 0
    taus = np.atleast_1d(np.asarray(t, dtype=float)) - t0
    if np.any(taus < -1e-12):
        raise InputError("history operator is defined for t >= t0 only")
    taus = np.clip(taus, 0.0, None)
    incr = w.increments
    lead, d = incr.shape[:-2], incr.shape[-1]
    if H == 0.5:
        out = np.zeros(lead + (len(taus), d))
    else:
        G = history_kernel(taus, w.M, w.h, H)
        flat = np.moveaxis(incr.reshape((-1, w.M, d)), 1, 0).reshape(w.M, -1)  # one GEMM for the batch
        out = (G @ flat).reshape(len(taus), -1, d)
        out = mvn_constant(H) * np.moveaxis(out, 0, 1).reshape(lead + (len(taus), d))
    return out[..., 0, :] if scalar else out


def conditional_mean(rec, H, s, t, split=None):
    """``E[B_t | F_s]`` (relative to ``B_{t0}``) for grid times ``t0 <= s <= t``."""
    H = check_hurst(H)
    grid = rec.grid
    if s < rec.t0 - rec.T_hist:
        raise WindowError(f"s={s} precedes the recorded window starting at {rec.t0 - rec.T_hist}")
    if s < rec.t0 or t < s:
        raise InputError("conditional_mean requires t0 <= s <= t")
    i_s, i_t = grid.index(s), grid.index(t)
    if split is None:
        split = mvn_split(rec, H)
    B_s = split.history[..., i_s, :] + split.innovation[..., i_s, :]
    if i_t == i_s or H == 0.5:
        return B_s.copy()
    alpha = mvn_constant(H)
    h = grid.h
    tau_s, tau_t = i_s * h, i_t * h
    G = history_kernel([tau_s, tau_t], rec.history_increments.shape[-2], rec.h_hist, H)
    past = np.matmul(G[1] - G[0], rec.history_increments)
    if i_s > 0:
        c = innovation_weights(i_t, h, H)
        j = np.arange(i_s)
        weights = c[i_t - j - 1] - c[i_s - j - 1]
        past = past + np.einsum("j,...jd->...d", weights, rec.forward_increments[..., :i_s, :])
    tail = (H - 0.5) * _tail_scale(H, rec.T_hist) * (tau_t - tau_s) * rec.tail_normals
    return B_s + alpha * past + alpha * tail


def hh_norm(w, H, backend=None):
    """Discrete weighted Hoelder norm of a history path over all sample pairs.

    Returns a float for a single path, or an array over leading ensemble axes.
    """
    H = check_hurst(H)
    if not isinstance(w, HistoryPath):
        w = HistoryPath(np.asarray(w, dtype=float), 1.0)
    expo = (1.0 - H) / 2.0
    t = w.times
    lead = w.values.shape[:-2]
    if not lead:
        return kernels.hh_pair_sup(w.values, t, expo, backend)
    flat = w.values.reshape((-1,) + w.values.shape[-2:])
    out = np.array([kernels.hh_pair_sup(v, t, expo, backend) for v in flat])
    return out.reshape(lead)
