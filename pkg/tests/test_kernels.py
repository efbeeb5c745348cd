"""The compiled and NumPy backends must agree."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbmlab import drift, kernels

try:
    kernels._select("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled backend not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "numpy")
    with pytest.raises(ValueError):
        kernels._select("fortran")


@needs_ext
@pytest.mark.parametrize("rep", [
    drift.weierstrass(0.6, 6),
    drift.GaussianBump(np.ones(1), None, 0.01),
    drift.sine(0.5) + drift.Constant(0.3) + drift.GaussianBump(np.array([2.0]), np.array([0.5]), 0.1),
])
def test_euler_backends_agree(rep):
    g = np.random.default_rng(1)
    dB = 0.1 * g.standard_normal((7, 300, 1))
    x0 = g.standard_normal((7, 1))
    a = kernels.euler_closed_form(x0, dB, 0.01, 1, 0.7, rep.kernel_terms(), backend="cython")
    b = kernels.euler_closed_form(x0, dB, 0.01, 1, 0.7, rep.kernel_terms(), backend="numpy")
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)
    assert a[2] == b[2] == -1


@needs_ext
def test_euler_backends_agree_in_2d():
    g = np.random.default_rng(2)
    rep = drift.weierstrass(0.5, 4, d=2) + drift.point_mass(1.0, None, 2).heat(0.05)
    dB = 0.1 * g.standard_normal((3, 100, 2))
    x0 = np.zeros((3, 2))
    a = kernels.euler_closed_form(x0, dB, 0.01, 1, 1.0, rep.kernel_terms(), backend="cython")
    b = kernels.euler_closed_form(x0, dB, 0.01, 1, 1.0, rep.kernel_terms(), backend="numpy")
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)


@needs_ext
def test_divergence_index_agrees():
    dB = np.zeros((2, 50, 1))
    x0 = np.ones((2, 1))
    terms = {"const": np.zeros(1)}
    with np.errstate(over="ignore", invalid="ignore"):
        a = kernels.euler_closed_form(x0, dB, 1.0, 1, -1e300, terms, backend="cython")
        b = kernels.euler_closed_form(x0, dB, 1.0, 1, -1e300, terms, backend="numpy")
    assert a[2] == b[2] > 0


@needs_ext
@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 60), expo=st.floats(0.01, 0.5), seed=st.integers(0, 1000))
def test_pair_sups_agree(n, expo, seed):
    g = np.random.default_rng(seed)
    w = g.standard_normal((n, 2))
    t = np.sort(g.uniform(-5, 0, n))
    assert kernels.hh_pair_sup(w, t, expo, "cython") == pytest.approx(kernels.hh_pair_sup(w, t, expo, "numpy"))
    x = g.standard_normal((n, 1))
    assert kernels.holder_pair_sup(w, x, 2 * expo, "cython") == pytest.approx(
        kernels.holder_pair_sup(w, x, 2 * expo, "numpy"))
