"""Long-time behaviour: enhanced Markov evolution, invariant measures, coupling.

The solution of an fBm-driven equation is not Markov on its own, but the
pair ``(x, w)`` of position and recentred Wiener history is.  Over a step of
length ``delta`` the driving fBm increment splits into the history operator
applied to ``w`` plus an independent innovation built from fresh Wiener
increments; those increments are then appended to ``w``, which is shifted and
recentred so that ``w(0) = 0`` again.

Histories live on a finite window ``[-T_hist, 0]``.  As in
:func:`fbmlab.noise.mvn_split`, the Wiener path before the window enters
through a first-order term ``alpha_H (H - 1/2) tau S`` with
``S = int_{-inf}^{-T_hist} (-r)^(H-3/2) dW_r``.  ``S`` is carried in the state
and updated when cells leave the window: the leaving cells are added
exactly and the reweighting of the older tail is drawn from its Gaussian
conditional law given ``S``.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as quadrature
from scipy import optimize, signal

from . import rng
from .errors import CapError, InputError
from .noise import (
    HistoryPath,
    check_hurst,
    fgn_autocovariance,
    history_operator,
    innovation_weights,
    mvn_constant,
    sample_fbm_circulant,
    Grid,
)
from .solver import SolverConfig, integrate, resolve_drift

__all__ = [
    "EnhancedState", "EmpiricalMeasure", "CouplingResult", "StationarityReport", "wiener_history",
    "wiener_state",
    "evolve_enhanced", "semigroup_estimate", "chapman_kolmogorov", "krylov_bogoliubov",
    "stationarity_test", "fou_stationary_variance", "couple", "wasserstein", "ASSIGNMENT_CAP",
]

#: largest cloud handled by the exact assignment solver in d >= 2
ASSIGNMENT_CAP = 2048
#: distances below this are treated as underflow and excluded from rate fits
UNDERFLOW = 1e-14


@dataclass(frozen=True)
class EnhancedState:
    """Position ``x`` with recentred history ``w``.

    ``x`` has shape ``(d,)`` or ``(P, d)`` for a batch of ``P`` replicas;
    ``w.values`` then has shape ``(M+1, d)`` or ``(P, M+1, d)``.  ``tail``
    (same shape as ``x``) summarises the Wiener path before the window; with
    ``tail=None`` that path is ignored.
    """

    x: np.ndarray
    w: HistoryPath
    tail: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.w.values.shape[-1]:
            raise InputError("position and history have different dimensions")
        if not np.isfinite(x).all():
            raise InputError("state position is not finite")
        object.__setattr__(self, "x", x)
        if self.tail is not None:
            tail = np.asarray(self.tail, dtype=float).reshape(x.shape)
            object.__setattr__(self, "tail", tail)

    @property
    def d(self):
        return self.x.shape[-1]

    @property
    def batch(self):
        return self.x.shape[0] if self.x.ndim == 2 else None

    def replicate(self, n):
        """``n`` copies of a single state as a batch."""
        if self.batch is not None:
            raise InputError("state is already a batch")
        vals = np.broadcast_to(self.w.values, (n,) + self.w.values.shape)
        tail = None if self.tail is None else np.broadcast_to(self.tail, (n, self.d)).copy()
        return EnhancedState(np.broadcast_to(self.x, (n, self.d)).copy(), HistoryPath(vals, self.w.h), tail)


def wiener_history(window, h, d=1, seed=0, n_paths=None):
    """History drawn from the Wiener measure on ``[-window, 0]``."""
    M = int(round(window / h))
    if M < 1:
        raise InputError("history window must contain at least one step")
    single = n_paths is None
    idx = np.arange(1 if single else int(n_paths))
    incr = rng.normals(seed, idx, (M, d), purpose=rng.HISTORY) * math.sqrt(h)
    return HistoryPath.from_increments(incr[0] if single else incr, h)


def _tail_var(H, W):
    # Var of int_W^inf s^(H-3/2) dW_s
    return W ** (2 * H - 2) / (2 - 2 * H)


def wiener_state(x0, H, window, h, seed=0, n_paths=None):
    """Generalised initial condition ``delta_x0 x W``: Wiener history plus tail."""
    H = check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.shape[0]
    w = wiener_history(window, h, d, seed, n_paths)
    single = n_paths is None
    idx = np.arange(1 if single else int(n_paths))
    tail = rng.normals(seed, idx, (d,), purpose=rng.TAIL) * math.sqrt(_tail_var(H, w.window))
    if single:
        return EnhancedState(x0.copy(), w, tail[0])
    return EnhancedState(np.broadcast_to(x0, (len(idx), d)).copy(), w, tail)


def _tail_update(H, W, delta):
    """Coefficients ``(lam, sd)`` of ``S' = lam S + sd xi + (leaving cells)``."""
    e = H - 1.5
    v0 = _tail_var(H, W)
    v1 = (W + delta) ** (2 * H - 2) / (2 - 2 * H)
    cov, _ = quadrature.quad(lambda s: s ** e * (s + delta) ** e, W, np.inf, limit=200)
    lam = cov / v0
    return lam, math.sqrt(max(v1 - lam * cov, 0.0))


def _leaving_weights(H, W, n, h):
    """Cell means of ``s^(H-3/2)`` over ``s in [W + (n-1-j) h, W + (n-j) h]``, oldest cell first."""
    a = H - 0.5
    j = np.arange(n)
    lo = W + (n - 1 - j) * h
    return ((lo + h) ** a - lo ** a) / (a * h)


def _sub_seed(seed, *path):
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), *path]).generate_state(1, np.uint64)[0])


def evolve_enhanced(state, F, b, delta, cfg, seed, H):
    """Advance the enhanced state by ``delta`` (rounded to whole steps of ``cfg.h``).

    Steps longer than the history window are taken in window-sized pieces.
    The history step of ``state.w`` must equal ``cfg.h``.  ``b`` is resolved
    at mollification level ``cfg.k`` (see :func:`fbmlab.solver.resolve_drift`).
    A step count of zero returns the state unchanged.  Solver divergence
    propagates as :class:`~fbmlab.errors.DivergenceError`.
    """
    H = check_hurst(H)
    if delta < 0:
        raise InputError("delta must be nonnegative")
    w = state.w
    if not math.isclose(w.h, cfg.h, rel_tol=1e-12):
        raise InputError("history step must equal the solver step")
    n = int(round(delta / cfg.h))
    if n == 0:
        return state
    if n > w.M:
        # the window must hold each step's fresh increments; split long steps
        for j, start in enumerate(range(0, n, w.M)):
            steps = min(w.M, n - start)
            state = evolve_enhanced(state, F, b, steps * cfg.h, cfg, _sub_seed(seed, j), H)
        return state
    single = state.batch is None
    P = 1 if single else state.batch
    d = state.d
    h = cfg.h
    taus = h * np.arange(n + 1)
    alpha = mvn_constant(H)
    eta = history_operator(w, H, 0.0, taus)
    eta = eta[None] if single else eta
    use_tail = state.tail is not None and H != 0.5
    if use_tail:
        tail = state.tail.reshape(P, d)
        eta = eta + alpha * (H - 0.5) * taus[None, :, None] * tail[:, None, :]
    fresh = rng.normals(seed, np.arange(P), (n, d), purpose=rng.FORWARD) * math.sqrt(h)
    c = innovation_weights(n, h, H)
    innov = np.zeros((P, n + 1, d))
    innov[:, 1:] = alpha * signal.fftconvolve(fresh, c[None, :, None], axes=1)[:, :n]
    drive = eta + innov

    step_cfg = dataclasses.replace(cfg, t0=0.0, T=n * h)
    x0 = state.x.reshape(P, d)
    traj = integrate(x0, F, resolve_drift(b, cfg.k), drive, step_cfg)
    x_new = traj.X[:, -1]

    old = w.increments.reshape(P, w.M, d)
    w_new = HistoryPath.from_increments(np.concatenate([old[:, n:], fresh], axis=1), h)
    tail_new = None
    if state.tail is not None:
        if H == 0.5:
            tail_new = state.tail.reshape(P, d)
        else:
            lam, sd = _tail_update(H, w.window, n * h)
            xi = rng.normals(seed, np.arange(P), (d,), purpose=rng.TAIL)
            leaving = np.einsum("j,pjd->pd", _leaving_weights(H, w.window, n, h), old[:, :n])
            tail_new = lam * tail + sd * xi + leaving
    if single:
        tail_new = None if tail_new is None else tail_new[0]
        return EnhancedState(x_new[0], HistoryPath(w_new.values[0], h), tail_new)
    return EnhancedState(x_new, w_new, tail_new)


def semigroup_estimate(f, state, t, n, seed, *, F, b, cfg, H):
    """Monte Carlo ``(P_{0,t} f)(x, w)`` from ``n`` independent evolutions.

    ``f`` maps a batched :class:`EnhancedState` to one value per replica.
    Returns ``(mean, stderr)``.
    """
    if n < 30:
        raise InputError("semigroup_estimate needs n >= 30 replicas")
    batch = state.replicate(n) if state.batch is None else state
    out = evolve_enhanced(batch, F, b, t, cfg, seed, H)
    vals = np.asarray(f(out), dtype=float)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def chapman_kolmogorov(f, state, t1, t, n, seed, *, F, b, cfg, H):
    """Direct ``P_{0,t} f`` against the composition ``P_{0,t1}(P_{t1,t} f)``.

    Returns ``((direct, se), (composed, se))``; the two use independent noise.
    """
    direct = semigroup_estimate(f, state, t, n, _sub_seed(seed, 0), F=F, b=b, cfg=cfg, H=H)
    batch = state.replicate(n) if state.batch is None else state
    mid = evolve_enhanced(batch, F, b, t1, cfg, _sub_seed(seed, 1), H)
    composed = semigroup_estimate(f, mid, t - t1, n, _sub_seed(seed, 2), F=F, b=b, cfg=cfg, H=H)
    return direct, composed


# --------------------------------------------------------------------------
# invariant measures


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted sample cloud, ``samples`` of shape ``(N, d)``."""

    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or len(s) == 0:
            raise InputError("an empirical measure needs a nonempty (N, d) sample array")
        if not np.isfinite(s).all():
            raise InputError("empirical measure has non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def d(self):
        return self.samples.shape[1]

    def moment(self, m=2.0):
        return float((np.linalg.norm(self.samples, axis=1) ** m).mean())

    def variance(self):
        return np.var(self.samples, axis=0, ddof=1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sample_index"] + [f"x_{k + 1}" for k in range(self.d)])
            for i, row in enumerate(self.samples):
                wr.writerow([i] + [repr(float(v)) for v in row])


def krylov_bogoliubov(x0, F, b, burn_in, spacing, n_samples, cfg, seed, H,
                      n_chains=1, window=None, return_chains=False):
    """Sample the ``x``-marginal of enhanced trajectories started from ``delta_x0 x W``.

    Each of ``n_chains`` independent chains is run through ``burn_in`` and then
    recorded every ``spacing`` time units, ``n_samples`` times.  The pooled
    record is returned as an :class:`EmpiricalMeasure` (chain-major order).
    ``window`` is the history length (default ``max(64 spacing, 16)``).
    """
    if not (F.kappa1 > 0):
        warnings.warn("kappa1 <= 0: an invariant measure need not exist", RuntimeWarning, stacklevel=2)
    if n_samples < 1 or n_chains < 1:
        raise InputError("n_samples and n_chains must be positive")
    if spacing <= 0 or burn_in < 0:
        raise InputError("spacing must be positive and burn_in nonnegative")
    window = max(64.0 * spacing, 16.0) if window is None else float(window)
    state = wiener_state(x0, H, window, cfg.h, seed, n_paths=n_chains)
    segment = 0
    if burn_in > 0:
        state = evolve_enhanced(state, F, b, burn_in, cfg, _sub_seed(seed, segment), H)
        segment += 1
    d = state.d
    rec = np.empty((n_chains, n_samples, d))
    rec[:, 0] = state.x
    for i in range(1, n_samples):
        state = evolve_enhanced(state, F, b, spacing, cfg, _sub_seed(seed, segment), H)
        segment += 1
        rec[:, i] = state.x
    meta = {"time": burn_in + (n_samples - 1) * spacing, "burn_in": burn_in, "spacing": spacing,
            "n_chains": n_chains, "window": window, "hurst": H, "h": cfg.h, "seed": seed}
    mu = EmpiricalMeasure(rec.reshape(-1, d), meta)
    return (mu, rec) if return_chains else mu


@dataclass(frozen=True)
class StationarityReport:
    distance: float
    noise_floor: float
    passed: bool
    shift: float
    early: EmpiricalMeasure
    late: EmpiricalMeasure


def stationarity_test(x0, F, b, burn_in, spacing, n_samples, cfg, seed, H, n_chains,
                      shift=10.0, m=2.0, n_boot=50, window=None):
    """Compare the sampled law at ``burn_in`` and at ``burn_in + shift``.

    Both clouds are pooled over the same chains and ``n_samples`` record
    times.  The test passes when their ``W_m`` distance is below twice the
    noise floor, the median ``W_m`` distance between two bootstrap resamples
    of the early cloud.
    """
    k = int(round(shift / spacing))
    if k * spacing <= 0:
        raise InputError("shift must be at least one spacing")
    _, rec = krylov_bogoliubov(x0, F, b, burn_in, spacing, n_samples + k, cfg, seed, H,
                               n_chains=n_chains, window=window, return_chains=True)
    d = rec.shape[-1]
    early = EmpiricalMeasure(rec[:, :n_samples].reshape(-1, d), {"time": burn_in})
    late = EmpiricalMeasure(rec[:, k:k + n_samples].reshape(-1, d), {"time": burn_in + k * spacing})
    dist = wasserstein(early, late, m)
    g = rng.stream(seed, 0, rng.BOOTSTRAP)
    N = early.n
    floor = []
    for _ in range(n_boot):
        a = early.samples[g.integers(0, N, N)]
        c = early.samples[g.integers(0, N, N)]
        floor.append(wasserstein(EmpiricalMeasure(a), EmpiricalMeasure(c), m))
    floor = float(np.median(floor))
    return StationarityReport(dist, floor, bool(dist < 2 * floor), k * spacing, early, late)


def fou_stationary_variance(kappa, H, h=None, tol=1e-15):
    """Stationary variance of ``dX = -kappa X dt + dB`` (``d = 1``).

    With ``h=None`` the continuous-time value ``Gamma(2H+1) / (2 kappa^(2H))``;
    otherwise that of the explicit Euler recursion
    ``X_{i+1} = (1 - kappa h) X_i + dB_i`` driven by exact fractional Gaussian
    noise, ``h^(2H) (g(0) + 2 sum_k q^k g(k)) / (1 - q^2)`` with ``q = 1 - kappa h``.
    """
    H = check_hurst(H)
    if kappa <= 0:
        raise InputError("a stationary variance needs kappa > 0")
    if h is None:
        return math.gamma(2 * H + 1) / (2 * kappa ** (2 * H))
    q = 1.0 - kappa * h
    if not abs(q) < 1:
        raise InputError("Euler recursion is unstable for this step")
    K = int(math.ceil(math.log(tol) / math.log(abs(q)))) + 1 if q != 0 else 1
    k = np.arange(1, K + 1)
    series = fgn_autocovariance(0, H) + 2.0 * np.sum(q ** k * fgn_autocovariance(k, H))
    return float(h ** (2 * H) * series / (1 - q * q))


# --------------------------------------------------------------------------
# coupling


@dataclass(frozen=True)
class CouplingResult:
    """Shared-noise distance curve ``||X_t - Y_t||_{L_m}`` and fitted rate.

    ``beta_hat`` is the rate of the fitted per-step contraction factor
    ``rho = exp(h * slope)``, i.e. ``(rho - 1) / h``, which for the explicit
    Euler scheme with ``F = -kappa x`` reproduces ``-kappa`` exactly;
    ``log_slope`` is the raw least-squares slope of ``log dist``.
    """

    times: np.ndarray
    dist: np.ndarray
    stderr: np.ndarray
    beta_hat: float
    ci: tuple
    log_slope: float
    fit_window: tuple
    x: np.ndarray
    y: np.ndarray
    kappa1: float
    b_norm: float | None
    m: float

    def summary(self):
        return {"beta_hat": self.beta_hat, "ci_low": self.ci[0], "ci_high": self.ci[1],
                "kappa1": self.kappa1, "b_norm_estimate": self.b_norm, "log_slope": self.log_slope,
                "fit_window": list(self.fit_window), "m": self.m}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "dist", "stderr"])
            for row in zip(self.times, self.dist, self.stderr):
                wr.writerow([repr(float(v)) for v in row])


def _fit_rate(times, dist, lo, h):
    sel = (times >= lo - 1e-12) & (dist > UNDERFLOW)
    if sel.sum() < 2:
        return math.nan
    slope = np.polyfit(times[sel], np.log(dist[sel]), 1)[0]
    return float(slope)


def couple(x, y, F, b, T, cfg, seed, H, m=None, n_boot=200, b_norm=None, workers=1):
    """Solve from ``x`` and ``y`` with the same fBm ensemble and fit the decay rate.

    The ensemble size is ``cfg.ensemble``; both solutions use ``b`` at the
    same mollification level ``cfg.k``.  The rate is fitted on ``[0.2 T, T]``
    after dropping distances below ``1e-14``; its confidence interval comes
    from a path bootstrap.
    """
    H = check_hurst(H)
    m = cfg.m if m is None else float(m)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise InputError("x and y must have the same shape")
    d = x.shape[0]
    run_cfg = dataclasses.replace(cfg, T=cfg.t0 + T)
    grid = run_cfg.grid
    noise = sample_fbm_circulant(Grid(grid.t0, grid.h, grid.n), H, d, seed, n_paths=cfg.ensemble, workers=workers)
    bk = resolve_drift(b, cfg.k)
    X = integrate(x, F, bk, noise, run_cfg).X
    Y = integrate(y, F, bk, noise, run_cfg).X
    gap = np.linalg.norm(X - Y, axis=-1) ** m  # (P, n+1)
    N = gap.shape[0]
    mean = gap.mean(0)
    dist = mean ** (1 / m)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_mean = gap.std(0, ddof=1) / math.sqrt(N) if N > 1 else np.zeros_like(mean)
        stderr = np.where(mean > 0, mean ** (1 / m - 1) / m * se_mean, 0.0)
    times = grid.times
    lo = cfg.t0 + 0.2 * T
    h = cfg.h
    slope = _fit_rate(times, dist, lo, h)
    to_beta = lambda s: math.expm1(s * h) / h  # noqa: E731
    beta = to_beta(slope) if math.isfinite(slope) else math.nan
    g = rng.stream(seed, 0, rng.BOOTSTRAP)
    reps = []
    if N > 1 and math.isfinite(slope):
        for _ in range(n_boot):
            cnt = np.bincount(g.integers(0, N, N), minlength=N)
            reps.append(to_beta(_fit_rate(times, (cnt @ gap / N) ** (1 / m), lo, h)))
        ci = (float(np.nanquantile(reps, 0.025)), float(np.nanquantile(reps, 0.975)))
    else:
        ci = (beta, beta)
    return CouplingResult(times, dist, stderr, beta, ci, slope, (lo, cfg.t0 + T), x, y,
                          float(F.kappa1), b_norm, m)


# --------------------------------------------------------------------------
# Wasserstein distance


def _cloud(mu):
    if isinstance(mu, EmpiricalMeasure):
        return mu.samples
    return EmpiricalMeasure(mu).samples


def wasserstein(mu, nu, m=2.0):
    """Empirical ``W_m`` between two uniformly weighted clouds.

    In ``d = 1`` the sorted (quantile) coupling is optimal and exact; sizes must
    match.  In ``d >= 2`` the optimal assignment is solved exactly for up to
    ``ASSIGNMENT_CAP`` points per cloud.
    """
    if m < 1:
        raise InputError("Wasserstein order must be >= 1")
    a, c = _cloud(mu), _cloud(nu)
    if a.shape[1] != c.shape[1]:
        raise InputError("clouds live in different dimensions")
    if a.shape[0] != c.shape[0]:
        raise InputError("clouds must have the same number of samples")
    if a.shape[1] == 1:
        diff = np.abs(np.sort(a[:, 0]) - np.sort(c[:, 0]))
        return float(np.mean(diff ** m) ** (1 / m))
    if a.shape[0] > ASSIGNMENT_CAP:
        raise CapError(f"assignment limited to {ASSIGNMENT_CAP} points, got {a.shape[0]}")
    cost = np.linalg.norm(a[:, None, :] - c[None, :, :], axis=-1) ** m
    r, col = optimize.linear_sum_assignment(cost)
    return float(cost[r, col].mean() ** (1 / m))
