import math

import numpy as np
import pytest
from scipy import integrate

from fbmlab import drift, verify
from fbmlab.errors import DomainError, InputError

SMALL = dict(n=200, seed=0, n_sub=256)


def test_fit_exponent_exact_power_laws():
    lags = 2.0 ** -np.arange(8, 0, -1)
    fit = verify.fit_exponent(lags, lags)
    assert fit.slope == pytest.approx(1.0) and fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert verify.fit_exponent(lags, np.full(8, 3.0)).slope == pytest.approx(0.0, abs=1e-12)


def test_fit_exponent_with_noise():
    g = np.random.default_rng(3)
    lags = np.logspace(-3, 0, 10)
    norms = lags ** 0.75 * (1 + 0.01 * g.standard_normal(10))
    fit = verify.fit_exponent(lags, norms)
    assert fit.slope == pytest.approx(0.75, abs=0.02)
    assert fit.ci[0] < fit.slope < fit.ci[1]


def test_fit_exponent_preconditions():
    with pytest.raises(InputError):
        verify.fit_exponent([0.1, 0.2, 0.4], [1, 2, 3])
    with pytest.raises(InputError):
        verify.fit_exponent([0.1, 0.2, 0.3, 0.4], [1, 2, 3, 4])
    with pytest.raises(InputError):
        verify.fit_exponent(np.logspace(-3, 0, 5), [1, 2, 0, 4, 5])


def test_exp_weights_exact_for_linear_functions():
    u = np.linspace(0, 1, 51)
    for x in (0.0, 1e-6, 0.3, 7.0):
        w = verify._exp_weights(50, x)
        exact, _ = integrate.quad(lambda v: math.exp(-x * (1 - v)) * (2 + 3 * v), 0, 1, epsabs=1e-14)
        assert w @ (2 + 3 * u) == pytest.approx(exact, rel=1e-9)


def test_reg1_constant_function_is_lag():
    e = verify.run_reg1(drift.Constant(1.0), 0.0, 0.0, 0.25, **SMALL)
    np.testing.assert_allclose(e.lhs_norms, e.lags, rtol=1e-12)
    assert e.fitted_exponent == pytest.approx(1.0)
    assert e.predicted == 1.0


def test_reg1_is_linear_in_f():
    f = verify.mollified_point_mass(0.25, 2.0 ** -8)
    a = verify.run_reg1(f, 0.0, -1.0, 0.25, **SMALL)
    g = drift.MollifiedDrift(drift.SingularDrift(-1.0, drift.point_mass(2.0)), f.epsilon)
    b = verify.run_reg1(g, 0.0, -1.0, 0.25, **SMALL)
    np.testing.assert_allclose(b.lhs_norms, 2 * a.lhs_norms, rtol=1e-12)
    assert b.fitted_exponent == pytest.approx(a.fitted_exponent)


def test_reg1_mean_matches_gaussian_oracle():
    H = 0.25
    f = verify.mollified_point_mass(H, 2.0 ** -6)
    e = verify.run_reg1(f, 0.0, -1.0, H, m=1.0, lags=[2.0 ** -6, 2.0 ** -3, 1.0], n=3000, seed=2, n_sub=512)
    for lag, val, se in zip(e.lags, e.lhs_norms, e.stderr):
        oracle = verify.point_mass_mean(f.epsilon, H, lag)
        assert abs(val - oracle) < 4 * se + 0.01 * oracle


def test_crossover_lag_of_mollified_point_mass():
    f = verify.mollified_point_mass(0.3, 2.0 ** -8, factor=64)
    assert verify.crossover_lag(f, 0.3) == pytest.approx(2.0 ** -14, rel=1e-9)
    assert verify.crossover_lag(drift.Constant(1.0), 0.3) == 0.0


def test_reg2_zero_shift_and_lipschitz_oracle():
    e0 = verify.run_reg2(drift.sine(), 0.0, 0.0, 1.0, 0.5, **SMALL)
    assert np.all(e0.lhs_norms == 0)
    ratios = []
    for z in (1e-3, 1e-2):
        e = verify.run_reg2(drift.sine(), z, 0.0, 1.0, 0.5, **SMALL)
        assert np.all(e.lhs_norms <= e.lags * z * (1 + 1e-9))
        ratios.append(e.lhs_norms / z)
    np.testing.assert_allclose(ratios[0], ratios[1], rtol=0.02)
    assert e.fitted_exponent == pytest.approx(1.0, abs=0.05)


def test_reg2_needs_constant_difference():
    with pytest.raises(InputError):
        verify.run_reg2(drift.sine(), lambda r: r[:, None], 0.0, 1.0, 0.5, **SMALL)


def test_reg3_quadratic_and_damped():
    z = 1e-2
    e = verify.run_reg3(drift.sine(), z, 0.0, 0.0, 1.0, 0.5, **SMALL)
    assert np.all(e.lhs_norms <= e.lags * z * z * (1 + 1e-9))
    e2 = verify.run_reg3(drift.sine(), 2 * z, 0.0, 0.0, 1.0, 0.5, **SMALL)
    np.testing.assert_allclose(e2.lhs_norms / e.lhs_norms, 4.0, rtol=0.05)
    damped = [verify.run_reg3(drift.sine(), z, 0.0, c, 1.0, 0.5, lags=[0.5], **SMALL).lhs_norms[0]
              for c in (0.0, 1.0, 10.0, 100.0)]
    assert all(a > b for a, b in zip(damped, damped[1:]))
    assert np.all(verify.run_reg3(drift.sine(), 0.0, 0.0, 1.0, 1.0, 0.5, **SMALL).lhs_norms == 0)


def test_reg4_deterministic_integral():
    v, c = 1.5, 2.0
    e = verify.run_reg4(drift.Constant(1.0), 0.0, v, c, 0.0, 0.4, **SMALL)
    np.testing.assert_allclose(e.lhs_norms, v * -np.expm1(-c * e.lags) / c, rtol=1e-12)
    e0 = verify.run_reg4(drift.sine(), 0.0, 0.0, c, 1.0, 0.4, **SMALL)
    assert np.all(e0.lhs_norms == 0)


def test_admissible_ranges():
    with pytest.raises(DomainError):
        verify.run_reg1(drift.Constant(1.0), 0.0, -3.0, 0.25, **SMALL)
    with pytest.raises(DomainError):
        verify.run_reg2(drift.sine(), 1e-3, 0.0, 0.2, 0.8, **SMALL)
    with pytest.raises(InputError):
        verify.run_reg1(drift.Constant(1.0), 0.0, 0.0, 0.25, n=50)


def test_experiment_outputs(tmp_path):
    e = verify.run_reg1(drift.Constant(1.0), 0.0, 0.0, 0.25, **SMALL)
    e.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "lag,lhs_norm,stderr"
    s = e.summary()
    assert s["predicted_exponent"] == 1.0 and "crossover_lag" in s
