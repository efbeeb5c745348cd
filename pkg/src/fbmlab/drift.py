"""Drifts: dissipative part ``F`` and singular part ``b`` through its heat smoothing.

A singular drift is only ever consumed through ``P_eps b``, the Gaussian
semigroup with kernel ``p_eps(x) = (4 pi eps)^(-d/2) exp(-|x|^2 / (4 eps))``.
Representations are therefore chosen so that ``P_eps`` acts in closed form
(constants, affine maps, Gaussian bumps including the point mass, finite
Fourier sums) or by quadrature on sampled values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels, rng
from .errors import ExtrapolationError, InputError, UnsupportedRegularityError

__all__ = [
    "Representation", "Constant", "Zero", "Linear", "GaussianBump", "point_mass", "FourierSeries",
    "sine", "weierstrass", "Sum", "Sampled", "SingularDrift", "MollifiedDrift", "heat_apply",
    "mollify", "audit_grid", "besov_norm", "DissipativeDrift", "linear_drift", "zero_drift",
    "AuditReport", "audit_F", "load_drift", "DEFAULT_EPS_SET",
]

#: dyadic smoothing levels 2^0 .. 2^-20
DEFAULT_EPS_SET = tuple(2.0 ** -j for j in range(21))
DEFAULT_BOX = (-5.0, 5.0)
VIOLATION_RTOL = 1e-9


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != d:
        if d == 1:
            x = x[..., None]
        else:
            raise InputError(f"expected points with last axis {d}, got shape {x.shape}")
    return x


class Representation:
    """Base class for drift representations ``R^d -> R^d``."""

    dim: int
    is_function = True

    def __call__(self, x):
        raise NotImplementedError

    def heat(self, eps):
        """Representation of ``P_eps`` applied to this drift."""
        raise NotImplementedError

    def scaled(self, lam):
        raise NotImplementedError

    def kernel_terms(self):
        """Closed-form term arrays for the compiled Euler kernel, or ``None``."""
        return None

    def __add__(self, other):
        return Sum((self, other))


class Constant(Representation):
    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.dim = self.value.shape[0]

    def __call__(self, x):
        x = _points(x, self.dim)
        return np.broadcast_to(self.value, x.shape).copy()

    def heat(self, eps):
        return self

    def scaled(self, lam):
        return Constant(lam * self.value)

    def kernel_terms(self):
        return {"const": self.value}


def Zero(d=1):
    return Constant(np.zeros(d))


class Linear(Representation):
    """``x -> A x + c``; invariant under the heat semigroup."""

    def __init__(self, matrix, offset=None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dim = self.matrix.shape[0]
        self.offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)

    def __call__(self, x):
        x = _points(x, self.dim)
        return x @ self.matrix.T + self.offset

    def heat(self, eps):
        return self

    def scaled(self, lam):
        return Linear(lam * self.matrix, lam * self.offset)


class GaussianBump(Representation):
    """``weight * p_delta(x - center)``; ``delta = 0`` is the point mass."""

    def __init__(self, weight, center=None, delta=0.0):
        self.weight = np.atleast_1d(np.asarray(weight, dtype=float))
        self.dim = self.weight.shape[0]
        self.center = np.zeros(self.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
        if delta < 0:
            raise InputError("bump variance parameter must be nonnegative")
        self.delta = float(delta)
        self.is_function = self.delta > 0

    def __call__(self, x):
        if self.delta == 0:
            raise InputError("the point mass has no pointwise values; mollify it first")
        x = _points(x, self.dim)
        r2 = ((x - self.center) ** 2).sum(-1, keepdims=True)
        dens = (4 * math.pi * self.delta) ** (-self.dim / 2) * np.exp(-r2 / (4 * self.delta))
        return dens * self.weight

    def heat(self, eps):
        return GaussianBump(self.weight, self.center, self.delta + eps)

    def scaled(self, lam):
        return GaussianBump(lam * self.weight, self.center, self.delta)

    def kernel_terms(self):
        if self.delta == 0:
            return None
        return {"gweight": self.weight[None], "gcenter": self.center[None], "gvar": np.array([self.delta])}


def point_mass(weight=1.0, center=None, d=1):
    w = np.full(d, weight, dtype=float) if np.ndim(weight) == 0 else weight
    return GaussianBump(w, center, 0.0)


class FourierSeries(Representation):
    """``x -> sum_j amps[j] * sin(<freqs[j], x> + phases[j])``.

    ``P_eps`` damps term ``j`` by ``exp(-eps |freqs[j]|^2)``.
    """

    def __init__(self, amps, freqs, phases=None):
        self.amps = np.atleast_2d(np.asarray(amps, dtype=float))
        self.freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
        if self.amps.shape != self.freqs.shape:
            raise InputError("amplitudes and frequencies must have the same shape (J, d)")
        self.dim = self.amps.shape[1]
        self.phases = np.zeros(len(self.amps)) if phases is None else np.asarray(phases, dtype=float)

    def __call__(self, x):
        x = _points(x, self.dim)
        return np.sin(x @ self.freqs.T + self.phases) @ self.amps

    def heat(self, eps):
        damp = np.exp(-eps * (self.freqs ** 2).sum(1))
        return FourierSeries(self.amps * damp[:, None], self.freqs, self.phases)

    def scaled(self, lam):
        return FourierSeries(lam * self.amps, self.freqs, self.phases)

    def kernel_terms(self):
        return {"famp": self.amps, "ffreq": self.freqs, "fphase": self.phases}


def sine(lam=1.0, d=1):
    """``b(x)_k = lam * sin(x_k)``."""
    eye = np.eye(d)
    return FourierSeries(lam * eye, eye)


def weierstrass(gamma, n_terms=12, d=1, amplitude=1.0, j_min=0):
    """Componentwise lacunary sum ``amplitude * sum_j 2^(-j gamma) sin(2^j x_k)``.

    ``j`` runs over ``j_min .. j_min + n_terms - 1``.  Bounded and
    ``gamma``-Hoelder uniformly in ``n_terms`` for ``gamma in (0, 1)``;
    negative ``j_min`` adds low octaves, which extends the range of scales
    over which the sum looks self-similar.
    """
    amps, freqs = [], []
    for k in range(d):
        for j in range(j_min, j_min + n_terms):
            e = np.zeros(d)
            e[k] = 1.0
            amps.append(amplitude * 2.0 ** (-j * gamma) * e)
            freqs.append(2.0 ** j * e)
    return FourierSeries(np.array(amps), np.array(freqs))


class Sum(Representation):
    def __init__(self, parts):
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, Sum) else [p])
        self.parts = tuple(flat)
        self.dim = self.parts[0].dim
        self.is_function = all(p.is_function for p in self.parts)

    def __call__(self, x):
        return sum(p(x) for p in self.parts)

    def heat(self, eps):
        return Sum(p.heat(eps) for p in self.parts)

    def scaled(self, lam):
        return Sum(p.scaled(lam) for p in self.parts)

    def kernel_terms(self):
        out = {}
        for p in self.parts:
            t = p.kernel_terms()
            if t is None:
                return None
            for key, val in t.items():
                if key == "const":
                    out[key] = out.get(key, 0.0) + val
                else:
                    out[key] = np.concatenate([out[key], val]) if key in out else val
        return out


class Sampled(Representation):
    """Drift given by values on a tensor grid (``axes[k]`` uniform, ascending).

    Pointwise evaluation is multilinear interpolation; ``heat`` is trapezoidal
    convolution with the Gaussian kernel truncated at ``8 sqrt(2 eps)``.
    """

    def __init__(self, axes, values):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=float)
        self.dim = len(self.axes)
        if self.values.shape[:-1] != tuple(len(a) for a in self.axes):
            raise InputError("sample values must have shape (n_1, ..., n_d, d)")
        if not np.isfinite(self.values).all():
            raise InputError("sampled drift has non-finite values")

    def __call__(self, x):
        from scipy.interpolate import RegularGridInterpolator

        x = _points(x, self.dim)
        interp = RegularGridInterpolator(self.axes, self.values, bounds_error=True)
        try:
            return interp(x.reshape(-1, self.dim)).reshape(x.shape[:-1] + (self.values.shape[-1],))
        except ValueError as exc:
            raise ExtrapolationError(str(exc)) from exc

    def heat(self, eps):
        return _SampledHeat(self, eps)

    def scaled(self, lam):
        return Sampled(self.axes, lam * self.values)

    def box(self):
        return [(a[0], a[-1]) for a in self.axes]

    @classmethod
    def from_csv(cls, path):
        """Read rows ``x_1..x_d,value_1..value_d`` lying on a tensor grid."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in r] for r in reader if r])
        d = len(header) // 2
        if len(header) != 2 * d or d == 0:
            raise InputError("sampled drift CSV needs columns x_1..x_d,value_1..value_d")
        axes = [np.unique(rows[:, k]) for k in range(d)]
        shape = tuple(len(a) for a in axes)
        if rows.shape[0] != math.prod(shape):
            raise InputError("sample points do not form a complete tensor grid")
        idx = tuple(np.searchsorted(axes[k], rows[:, k]) for k in range(d))
        values = np.empty(shape + (d,))
        values[idx] = rows[:, d:]
        return cls(axes, values)


class _SampledHeat(Representation):
    def __init__(self, parent, eps):
        self.parent = parent
        self.eps = float(eps)
        self.dim = parent.dim

    def __call__(self, x):
        x = _points(x, self.dim)
        flat = x.reshape(-1, self.dim)
        margin = 8.0 * math.sqrt(2.0 * self.eps)
        out = self.parent.values
        for k, axis in enumerate(self.parent.axes):
            lo, hi = axis[0] + margin, axis[-1] - margin
            if np.any(flat[:, k] < lo) or np.any(flat[:, k] > hi):
                raise ExtrapolationError(
                    f"evaluation point outside sample box minus margin {margin:.3g} on axis {k}")
            step = axis[1] - axis[0]
            trap = np.full(len(axis), step)
            trap[[0, -1]] *= 0.5
            diff = flat[:, k, None] - axis[None, :]
            w = np.exp(-diff ** 2 / (4 * self.eps)) / math.sqrt(4 * math.pi * self.eps) * trap
            w[np.abs(diff) > margin] = 0.0
            if k == 0:
                out = np.tensordot(w, out, axes=(1, 0))  # (N, n_2, ..., p)
            else:
                out = np.einsum("nj,nj...->n...", w, out)
        return out.reshape(x.shape[:-1] + (self.parent.values.shape[-1],))

    def heat(self, eps):
        return _SampledHeat(self.parent, self.eps + eps)

    def scaled(self, lam):
        return _SampledHeat(self.parent.scaled(lam), self.eps)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SingularDrift:
    """A drift of regularity ``gamma`` with declared norm bound ``xi_bound``."""

    gamma: float
    representation: Representation
    xi_bound: float | None = None

    def __post_init__(self):
        if self.gamma > 1:
            raise UnsupportedRegularityError(f"gamma={self.gamma} > 1 is not supported")
        if self.gamma >= 0 and not self.representation.is_function:
            raise InputError("gamma >= 0 requires a bona fide function")

    @property
    def dim(self):
        return self.representation.dim

    def scaled(self, lam):
        xi = None if self.xi_bound is None else abs(lam) * self.xi_bound
        return SingularDrift(self.gamma, self.representation.scaled(lam), xi)


@dataclass(frozen=True)
class MollifiedDrift:
    """``P_eps b`` for a parent singular drift."""

    parent: SingularDrift
    epsilon: float

    def __post_init__(self):
        if not (0 < self.epsilon <= 1):
            raise InputError("mollification level must lie in (0, 1]")

    def __call__(self, x):
        return heat_apply(self.parent, self.epsilon, x)

    @property
    def dim(self):
        return self.parent.dim

    def as_representation(self):
        return self.parent.representation.heat(self.epsilon)

    def kernel_terms(self):
        return self.as_representation().kernel_terms()


def _rep(f):
    if isinstance(f, SingularDrift):
        return f.representation
    if isinstance(f, MollifiedDrift):
        return f.as_representation()
    return f


def heat_apply(f, eps, x):
    """``(P_eps f)(x)`` for points ``x`` of shape ``(..., d)``."""
    if not eps > 0:
        raise InputError("heat semigroup needs eps > 0")
    return _rep(f).heat(eps)(x)


def mollify(b, k):
    """The ``k``-th element ``P_{1/k} b`` of the standard approximating sequence."""
    if int(k) != k or k < 1:
        raise InputError("mollification index must be a positive integer")
    if not isinstance(b, SingularDrift):
        raise InputError("mollify expects a SingularDrift")
    return MollifiedDrift(b, 1.0 / k)


def audit_grid(d=1, box=DEFAULT_BOX, n_per_axis=None):
    """Tensor grid of points covering ``box`` (shape ``(N, d)``)."""
    if n_per_axis is None:
        n_per_axis = {1: 2001, 2: 81, 3: 21}.get(d, 9)
    lo, hi = box
    axis = np.linspace(lo, hi, n_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def besov_norm(b, gamma, eps_set=DEFAULT_EPS_SET, x_grid=None, backend=None):
    """Discrete estimate of the ``C^gamma`` norm of ``b`` on ``x_grid``.

    * ``gamma < 0``: ``max_{eps, x} eps^(-gamma/2) |P_eps b(x)|``;
    * ``gamma = 0``: ``max_x |b(x)|``;
    * ``0 < gamma <= 1``: ``max_x |b(x)| + max_{x != y} |b(x) - b(y)| / |x - y|^gamma``.

    Every maximum runs over finite sets, so the result is a lower bound of the
    true norm.
    """
    if gamma > 1:
        raise UnsupportedRegularityError(f"gamma={gamma} > 1 is not supported")
    rep = _rep(b)
    if x_grid is None:
        x_grid = audit_grid(rep.dim)
    x = _points(x_grid, rep.dim).reshape(-1, rep.dim)
    if gamma < 0:
        eps_set = list(eps_set)
        if not eps_set:
            raise InputError("eps_set must be nonempty")
        best = 0.0
        for eps in eps_set:
            vals = np.linalg.norm(rep.heat(eps)(x), axis=-1)
            best = max(best, eps ** (-gamma / 2) * float(vals.max()))
        return best
    vals = rep(x)
    sup = float(np.linalg.norm(vals, axis=-1).max())
    if gamma == 0:
        return sup
    return sup + kernels.holder_pair_sup(vals, x, gamma, backend)


# --------------------------------------------------------------------------
# dissipative part


@dataclass(frozen=True)
class DissipativeDrift:
    """``F`` with its declared dissipativity, growth and Lipschitz constants.

    ``kappa`` is set for ``F(x) = -kappa x`` so the compiled kernel can be used.
    """

    F: Callable
    kappa1: float
    kappa2: float
    kappa3: float
    lipschitz: float | None = None
    dim: int = 1
    kappa: float | None = None

    def __call__(self, x):
        return self.F(_points(x, self.dim))


def linear_drift(kappa, d=1):
    """``F(x) = -kappa x``."""
    kappa = float(kappa)
    return DissipativeDrift(lambda x: -kappa * x, kappa, 0.0, max(abs(kappa), 1e-300), abs(kappa), d, kappa)


def zero_drift(d=1):
    return DissipativeDrift(np.zeros_like, 0.0, 0.0, 1e-300, 0.0, d, 0.0)


@dataclass(frozen=True)
class AuditReport:
    kappa1_hat: float
    kappa2_hat: float
    kappa3_hat: float
    L_hat: float
    violations: dict
    n_pairs: int


def audit_F(F, box=DEFAULT_BOX, n_pairs=100_000, seed=0):
    """Estimate the tightest constants of ``F`` over sampled pairs in ``box``.

    Half of the pairs are independent uniform points; the other half are
    nearby pairs (offset ~1e-4 of the box width) to resolve local Lipschitz
    behaviour.  ``kappa2_hat`` is the smallest ``kappa2`` compatible with the
    declared ``kappa1``.  Declared constants are checked with relative
    tolerance ``VIOLATION_RTOL``.
    """
    if n_pairs < 1:
        raise InputError("n_pairs must be >= 1")
    d = F.dim
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (d,))
    g = rng.stream(seed, 0, rng.AUDIT)
    n_far = (n_pairs + 1) // 2
    x = lo + (hi - lo) * g.random((n_pairs, d))
    y = np.empty_like(x)
    y[:n_far] = lo + (hi - lo) * g.random((n_far, d))
    step = 1e-4 * (hi - lo)
    y[n_far:] = np.clip(x[n_far:] + step * g.standard_normal((n_pairs - n_far, d)), lo, hi)
    fx, fy = F(x), F(y)
    dx, dF = x - y, fx - fy
    dist2 = (dx ** 2).sum(-1)
    inner = (dF * dx).sum(-1)
    ok = dist2 > 0
    kappa1_hat = float((-inner[ok] / dist2[ok]).min()) if ok.any() else math.inf
    slack = inner + F.kappa1 * dist2
    kappa2_hat = max(0.0, float(slack.max()))
    pts = np.concatenate([x, y])
    fpts = np.concatenate([fx, fy])
    growth = np.linalg.norm(fpts, axis=-1) / (1 + np.linalg.norm(pts, axis=-1))
    kappa3_hat = float(growth.max())
    lip = np.linalg.norm(dF, axis=-1)[ok] / np.sqrt(dist2[ok])
    L_hat = float(lip.max()) if ok.any() else 0.0

    scale = np.maximum(1.0, np.maximum(np.abs(inner), abs(F.kappa1) * dist2))
    viol = {
        "dissipativity": int((slack - F.kappa2 > VIOLATION_RTOL * scale).sum()),
        "growth": int((growth > F.kappa3 * (1 + VIOLATION_RTOL)).sum()),
    }
    if F.lipschitz is not None:
        viol["lipschitz"] = int((lip > F.lipschitz * (1 + VIOLATION_RTOL) + 1e-300).sum())
    return AuditReport(kappa1_hat, kappa2_hat, kappa3_hat, L_hat, viol, int(n_pairs))


# --------------------------------------------------------------------------
# configuration


def load_drift(cfg, d=1):
    """Build a :class:`SingularDrift` from a flat key-value mapping.

    Keys: ``kind`` (``none``, ``sin``, ``weierstrass``, ``constant``,
    ``point_mass``, ``samples``), ``gamma``, ``xi_bound``, ``amplitude``,
    ``n_terms``, ``center``, ``path``.
    """
    kind = str(cfg.get("kind", "none")).lower()
    amp = float(cfg.get("amplitude", 1.0))
    xi = cfg.get("xi_bound")
    xi = None if xi in (None, "") else float(xi)
    if kind in ("none", "zero"):
        return SingularDrift(float(cfg.get("gamma", 1.0)), Zero(d), xi)
    if kind == "sin":
        return SingularDrift(float(cfg.get("gamma", 1.0)), sine(amp, d), xi)
    if kind == "constant":
        return SingularDrift(float(cfg.get("gamma", 1.0)), Constant(np.full(d, amp)), xi)
    if kind == "weierstrass":
        gamma = float(cfg.get("gamma", 0.5))
        return SingularDrift(gamma, weierstrass(gamma, int(cfg.get("n_terms", 12)), d, amp), xi)
    if kind == "point_mass":
        center = float(cfg.get("center", 0.0))
        return SingularDrift(float(cfg.get("gamma", -d)), point_mass(amp, np.full(d, center), d), xi)
    if kind == "samples":
        rep = Sampled.from_csv(cfg["path"])
        return SingularDrift(float(cfg.get("gamma", 0.0)), rep.scaled(amp) if amp != 1.0 else rep, xi)
    raise InputError(f"unknown drift kind {kind!r}")
