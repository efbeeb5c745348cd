import math

import numpy as np
import pytest

from fbmlab import drift, noise, solver
from fbmlab.errors import DivergenceError, InputError


def fbm(H, h, n, paths, seed=0, d=1):
    return noise.sample_fbm_circulant(noise.Grid(0.0, h, n), H, d, seed, n_paths=paths)


def test_deterministic_linear_decay():
    cfg = solver.SolverConfig(h=2.0 ** -10, T=1.0)
    tr = solver.integrate([1.0], drift.linear_drift(1.0), None, np.zeros((cfg.n + 1, 1)), cfg)
    assert tr.X[-1, 0] == pytest.approx((1 - cfg.h) ** cfg.n, rel=1e-13)
    assert tr.X[-1, 0] == pytest.approx(math.exp(-1), rel=1e-3)


def test_zero_drift_reproduces_noise():
    cfg = solver.SolverConfig(h=0.01, T=1.0)
    B = fbm(0.3, 0.01, 100, 3)
    tr = solver.integrate([0.5], drift.zero_drift(), None, B, cfg)
    np.testing.assert_allclose(tr.X, 0.5 + B.values, atol=1e-14)


def test_identity_residual_holds_for_generic_and_compiled_paths():
    cfg = solver.SolverConfig(h=2.0 ** -8, T=2.0)
    B = fbm(0.7, cfg.h, cfg.n, 20, seed=3)
    b = solver.resolve_drift(drift.SingularDrift(-1.0, drift.point_mass()), 8)
    F = drift.linear_drift(0.5)
    fast = solver.integrate([0.0], F, b, B, cfg)
    cubic = drift.DissipativeDrift(lambda x: -x ** 3, 0.0, 1.0, 10.0, dim=1)
    slow = solver.integrate([0.0], cubic, b, B, cfg)
    assert fast.identity_residual(F) < 1e-12
    assert slow.identity_residual(cubic) < 1e-12


def test_noise_on_finer_grid_is_subsampled():
    cfg = solver.SolverConfig(h=0.02, T=1.0)
    fine = fbm(0.5, 0.01, 100, 2)
    tr = solver.integrate([0.0], drift.zero_drift(), None, fine, cfg)
    np.testing.assert_allclose(tr.B, fine.values[:, ::2])
    with pytest.raises(InputError):
        solver.integrate([0.0], drift.zero_drift(), None, fbm(0.5, 0.03, 40, 1), cfg)


def test_divergence_is_reported():
    cfg = solver.SolverConfig(h=0.5, T=200.0)
    F = drift.DissipativeDrift(lambda x: 10 * x, -10.0, 0.0, 10.0, dim=1)
    with pytest.raises(DivergenceError) as exc:
        solver.integrate([1.0], F, None, np.zeros((cfg.n + 1, 1)), cfg)
    assert exc.value.index > 0


def test_unmollified_point_mass_is_rejected():
    cfg = solver.SolverConfig(h=0.1, T=1.0)
    with pytest.raises(InputError):
        solver.integrate([0.0], drift.zero_drift(), drift.SingularDrift(-1.0, drift.point_mass()),
                         np.zeros((11, 1)), cfg)


def test_resolve_drift():
    pm = drift.SingularDrift(-1.0, drift.point_mass())
    assert isinstance(solver.resolve_drift(pm, 4), drift.MollifiedDrift)
    s = drift.SingularDrift(1.0, drift.sine())
    assert solver.resolve_drift(s, 4) is s.representation


def test_resolved_step_is_dyadic():
    assert solver.SolverConfig.resolved_step(4) == 2.0 ** -6
    assert solver.SolverConfig.resolved_step(64) == 2.0 ** -12


def test_moment_curve_of_ou_is_bounded():
    cfg = solver.SolverConfig(h=0.01, T=10.0)
    B = fbm(0.5, cfg.h, cfg.n, 400, seed=1)
    tr = solver.integrate([0.0], drift.linear_drift(1.0), None, B, cfg)
    curve = solver.moment_curve(tr, 2.0, 1.0, n_boot=100)
    # stationary second moment of the Euler recursion
    q = 1 - cfg.h
    assert curve.values[-1] == pytest.approx(math.sqrt(cfg.h / (1 - q * q)), rel=0.15)
    assert np.all(curve.bound_shape <= tr.times + 1e-15)
    with pytest.raises(InputError):
        solver.moment_curve((tr.X[:10], tr.times))


def test_bound_shape_limits():
    t = np.array([0.0, 0.1, 100.0])
    np.testing.assert_allclose(solver.bound_shape(t, 0.0, 0.0), t)
    assert solver.bound_shape(t, 0.0, 2.0)[-1] == pytest.approx(0.5)


def test_holder_seminorm_of_brownian_motion():
    cfg = solver.SolverConfig(h=2.0 ** -6, T=1.0)
    B = fbm(0.5, cfg.h, cfg.n, 2000, seed=2)
    tr = solver.integrate([0.0], drift.zero_drift(), None, B, cfg)
    est = solver.holder_seminorm(tr, "B", 0.5, 2.0)
    # ||B_t - B_s||_{L_2} = (t - s)^(1/2) for every pair
    assert est.value == pytest.approx(1.0, abs=5 * est.std_error + 0.02)
    with pytest.raises(InputError):
        solver.holder_seminorm(tr, "B", 0.5, 2.0, window=(0.0, 1.5))
    with pytest.raises(InputError):
        tr.select("Y")


def test_drift_cauchy_shares_noise():
    cfg = solver.SolverConfig(h=2.0 ** -10, T=0.25)
    B = fbm(0.3, cfg.h, cfg.n, 40, seed=5)
    b = drift.SingularDrift(-1.0, drift.point_mass())
    table = solver.drift_cauchy([0.0], drift.linear_drift(1.0), b, [1, 4, 16], B, cfg, n_boot=50)
    assert table.sup_distances.shape == (2, 40)
    assert np.all(table.sup_distances >= 0)
    with pytest.raises(InputError):
        solver.drift_cauchy([0.0], drift.linear_drift(1.0), b, [4, 4], B, cfg)


def test_conditional_seminorm_runs_and_orders():
    cfg = solver.SolverConfig(h=2.0 ** -5, T=1.0)
    prob = solver.NestedProblem(np.zeros(1), drift.linear_drift(1.0), None, 0.7, cfg, T_hist=8.0)
    cond, plain = solver.conditional_seminorm(prob, "X", 0.5, n_outer=40, n_inner=16, n_s=2, n_boot=20)
    assert cond.conditional and not plain.conditional
    assert 0 < cond.value
    assert np.isfinite(plain.std_error)
