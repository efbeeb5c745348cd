import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from fbmlab import drift
from fbmlab.errors import ExtrapolationError, InputError, UnsupportedRegularityError


def sin_hoelder_half():
    # sup|sin| + sup_u |sin(x+u) - sin(x)| / u^(1/2) = 1 + 2 sin(u*) / sqrt(2 u*), tan u* = 2 u*
    u = optimize.brentq(lambda v: math.tan(v) - 2 * v, 0.5, 1.5)
    return 1 + 2 * math.sin(u) / math.sqrt(2 * u)


def test_point_mass_besov_norm():
    b = drift.SingularDrift(-1.0, drift.point_mass())
    assert drift.besov_norm(b, -1.0) == pytest.approx((4 * math.pi) ** -0.5, abs=1e-12)


def test_point_mass_in_2d_scales_with_dimension():
    b = drift.point_mass(1.0, None, 2)
    # |(1,1)| * (4 pi eps)^(-1) eps^(1) is constant in eps
    val = drift.besov_norm(b, -2.0, x_grid=np.zeros((1, 2)))
    assert val == pytest.approx(math.sqrt(2) / (4 * math.pi))


def test_sin_hoelder_norm_against_analytic_value():
    val = drift.besov_norm(drift.sine(1.0), 0.5, x_grid=np.linspace(-5, 5, 2001))
    assert val == pytest.approx(sin_hoelder_half(), rel=0.05)
    assert val <= sin_hoelder_half() + 1e-12


def test_constant_norms():
    c = drift.Constant(3.0)
    assert drift.besov_norm(c, 0.0) == pytest.approx(3.0)
    assert drift.besov_norm(c, 1.0) == pytest.approx(3.0)
    # P_eps c = c, so the negative norm is max over eps of eps^(1/2) * 3
    assert drift.besov_norm(c, -1.0) == pytest.approx(3.0)


def test_gamma_above_one_rejected():
    with pytest.raises(UnsupportedRegularityError):
        drift.SingularDrift(1.5, drift.sine())
    with pytest.raises(UnsupportedRegularityError):
        drift.besov_norm(drift.sine(), 1.2)


def test_point_mass_needs_negative_gamma():
    with pytest.raises(InputError):
        drift.SingularDrift(0.5, drift.point_mass())
    with pytest.raises(InputError):
        drift.point_mass()(np.zeros(1))


def test_heat_of_fourier_series_matches_quadrature():
    f = drift.FourierSeries([[1.0], [0.5]], [[1.0], [3.0]], [0.2, 0.0])
    eps, x = 0.1, 0.7
    ref, _ = integrate.quad(
        lambda y: f(np.array([y]))[0] * math.exp(-((x - y) ** 2) / (4 * eps)) / math.sqrt(4 * math.pi * eps),
        -20, 20, limit=200)
    assert drift.heat_apply(f, eps, np.array([x]))[0] == pytest.approx(ref, rel=1e-9)


def test_semigroup_property_for_bumps():
    b = drift.point_mass(2.0)
    x = np.linspace(-1, 1, 5)[:, None]
    np.testing.assert_allclose(b.heat(0.1).heat(0.2)(x), b.heat(0.3)(x), rtol=1e-14)


def test_mollify_sequence():
    b = drift.SingularDrift(-1.0, drift.point_mass())
    bk = drift.mollify(b, 4)
    assert bk.epsilon == 0.25
    assert bk(np.zeros(1))[0] == pytest.approx((4 * math.pi * 0.25) ** -0.5)
    with pytest.raises(InputError):
        drift.mollify(b, 0)


def test_sampled_drift_reproduces_linear_heat():
    # heat semigroup leaves affine functions unchanged away from the box edge
    axis = np.linspace(-10, 10, 2001)
    s = drift.Sampled([axis], (2 * axis + 1)[:, None])
    val = s.heat(0.05)(np.array([[0.3]]))
    assert val[0, 0] == pytest.approx(1.6, abs=1e-6)
    with pytest.raises(ExtrapolationError):
        s.heat(0.05)(np.array([[9.9]]))


def test_sampled_from_csv(tmp_path):
    p = tmp_path / "b.csv"
    rows = ["x_1,value_1"] + [f"{x},{math.sin(x)}" for x in np.linspace(-6, 6, 601)]
    p.write_text("\n".join(rows) + "\n")
    s = drift.Sampled.from_csv(p)
    assert s(np.array([[0.5]]))[0, 0] == pytest.approx(math.sin(0.5), abs=1e-3)


def test_audit_linear_drift():
    F = drift.linear_drift(2.0)
    rep = drift.audit_F(F, n_pairs=2000, seed=1)
    assert rep.kappa1_hat == pytest.approx(2.0)
    assert rep.kappa2_hat == pytest.approx(0.0, abs=1e-9)
    assert rep.L_hat == pytest.approx(2.0)
    assert all(v == 0 for v in rep.violations.values())


def test_audit_flags_false_declaration():
    F = drift.DissipativeDrift(lambda x: -x ** 3 + x, kappa1=1.0, kappa2=0.0, kappa3=30.0, dim=1)
    rep = drift.audit_F(F, n_pairs=5000, seed=0)
    assert rep.violations["dissipativity"] > 0
    assert rep.kappa2_hat > 0


def test_weierstrass_octaves():
    w = drift.weierstrass(0.5, n_terms=3, j_min=-1)
    np.testing.assert_allclose(w.freqs[:, 0], [0.5, 1.0, 2.0])
    np.testing.assert_allclose(w.amps[:, 0], [2 ** 0.5, 1.0, 2 ** -0.5])


def test_sum_kernel_terms_concatenate():
    b = drift.sine(1.0) + drift.GaussianBump(np.ones(1), None, 0.1) + drift.Constant(2.0)
    t = b.kernel_terms()
    assert t["famp"].shape == (1, 1) and t["gweight"].shape == (1, 1)
    assert t["const"][0] == 2.0


def test_load_drift_kinds():
    assert drift.load_drift({"kind": "none"}).representation(np.ones(1))[0] == 0.0
    pm = drift.load_drift({"kind": "point_mass"})
    assert pm.gamma == -1.0
    with pytest.raises(InputError):
        drift.load_drift({"kind": "banana"})


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(-3, 3), eps=st.floats(1e-3, 1.0))
def test_heat_is_linear(lam, eps):
    f = drift.weierstrass(0.4, 5)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(f.scaled(lam).heat(eps)(x), lam * f.heat(eps)(x), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(1e-4, 1.0))
def test_heat_contracts_sup_norm(eps):
    f = drift.sine(1.0) + drift.FourierSeries([[0.5]], [[4.0]])
    x = drift.audit_grid(1, n_per_axis=401)
    assert np.abs(f.heat(eps)(x)).max() <= np.abs(f(x)).max() + 1e-12
