"""Compare the compiled and NumPy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel is run on identical inputs with both backends; the table lists
the best wall time of ``--repeat`` runs, the speed-up and the largest
absolute difference between the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fbmlab import drift, kernels


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    g = np.random.default_rng(0)
    P, n, d = 256, 4096, 1
    dB = 0.05 * g.standard_normal((P, n, d))
    x0 = np.zeros((P, d))
    terms = drift.weierstrass(0.6, 12).kernel_terms()
    yield ("euler, Fourier drift 256x4096", lambda be: kernels.euler_closed_form(
        x0, dB, 2.0 ** -12, 1, 1.0, terms, backend=be)[0])
    bump = drift.GaussianBump(np.ones(1), None, 1e-3).kernel_terms()
    yield ("euler, Gaussian bump 256x4096", lambda be: kernels.euler_closed_form(
        x0, dB, 2.0 ** -12, 1, 1.0, bump, backend=be)[0])
    t = np.linspace(-8.0, 0.0, 2049)
    w = np.cumsum(g.standard_normal((2049, 1)), axis=0)
    w -= w[-1]
    yield ("history-norm pair sup N=2049", lambda be: kernels.hh_pair_sup(w, t, 0.25, backend=be))
    x = np.linspace(-5, 5, 2001)[:, None]
    y = np.sin(x)
    yield ("Hoelder pair sup N=2001", lambda be: kernels.holder_pair_sup(y, x, 0.5, backend=be))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        kernels._select("cython")
    except ImportError:
        print("compiled backend not built; only the NumPy backend is available")
        return 1
    print(f"{'kernel':34s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speed-up':>9s} {'max |diff|':>11s}")
    for name, fn in cases():
        tc, oc = _best(lambda: fn("cython"), args.repeat)
        tn, on = _best(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(oc) - np.asarray(on))))
        print(f"{name:34s} {tc:11.4f} {tn:11.4f} {tn / tc:9.1f} {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
