"""Kernel backend selection.

The compiled extension is preferred; set ``FBMLAB_PURE=1`` to force the
NumPy implementation. ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("FBMLAB_PURE") == "1":
        raise ImportError("pure mode requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "numpy"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def euler_closed_form(x0, dB, h, f_code, kappa, terms, backend=None):
    """Explicit Euler over an ensemble for drifts with a closed-form term list.

    ``terms`` is the dict produced by ``Representation.kernel_terms``.
    Returns ``(X, K, first_bad_index)`` with ``-1`` when all states are finite.
    """
    impl = _select(backend)
    d = dB.shape[2]
    return impl.euler_closed_form(
        _c(x0), _c(dB), float(h), int(f_code), float(kappa),
        _c(terms.get("const", np.zeros(d))),
        _c(terms.get("famp", np.zeros((0, d)))),
        _c(terms.get("ffreq", np.zeros((0, d)))),
        _c(terms.get("fphase", np.zeros(0))),
        _c(terms.get("gweight", np.zeros((0, d)))),
        _c(terms.get("gcenter", np.zeros((0, d)))),
        _c(terms.get("gvar", np.zeros(0))),
    )


def hh_pair_sup(w, t, expo, backend=None):
    return _select(backend).hh_pair_sup(_c(w), _c(t), float(expo))


def holder_pair_sup(y, x, gamma, backend=None):
    return _select(backend).holder_pair_sup(_c(y), _c(x), float(gamma))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "numpy":
        return _pykernels
    if backend == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
