import itertools
import math

import numpy as np
import pytest
from scipy import stats

from fbmlab import drift, longtime, noise, solver
from fbmlab.errors import CapError, InputError

CFG = solver.SolverConfig(h=0.01, T=1.0)


def test_zero_step_returns_state_unchanged():
    s = longtime.wiener_state([0.3], 0.7, 2.0, 0.01, seed=1)
    assert longtime.evolve_enhanced(s, drift.linear_drift(1.0), None, 0.001, CFG, 0, 0.7) is s


def test_recentring_and_window_length():
    s = longtime.wiener_state([0.0], 0.3, 2.0, 0.01, seed=1, n_paths=5)
    out = longtime.evolve_enhanced(s, drift.linear_drift(1.0), None, 0.5, CFG, 3, 0.3)
    assert np.all(out.w.values[:, -1] == 0.0)
    assert out.w.M == s.w.M
    # the surviving increments are shifted, not changed
    np.testing.assert_allclose(out.w.increments[:, :-50], s.w.increments[:, 50:], atol=1e-14)


def test_history_step_must_match_solver():
    s = longtime.wiener_state([0.0], 0.3, 2.0, 0.02, seed=1)
    with pytest.raises(InputError):
        longtime.evolve_enhanced(s, drift.linear_drift(1.0), None, 0.5, CFG, 3, 0.3)


def test_brownian_transition_matches_direct_solver():
    n = 10_000
    F = drift.linear_drift(1.0)
    s = longtime.wiener_state([1.0], 0.5, 2.0, CFG.h, seed=0).replicate(n)
    x_enh = longtime.evolve_enhanced(s, F, None, 1.0, CFG, 7, 0.5).x[:, 0]
    B = noise.sample_fbm_circulant(CFG.grid, 0.5, 1, seed=8, n_paths=n)
    x_dir = solver.integrate([1.0], F, None, B, CFG).X[:, -1, 0]
    assert stats.ks_2samp(x_enh, x_dir).statistic < 0.05


def test_evolved_history_keeps_wiener_law():
    P = 4000
    s = longtime.wiener_state([0.0], 0.75, 4.0, CFG.h, seed=2, n_paths=P)
    out = longtime.evolve_enhanced(s, drift.linear_drift(1.0), None, 1.0, CFG, 5, 0.75)
    v = out.w.values[..., 0]
    for lag in (1, 10, 100):
        incr = v[:, -1] - v[:, -1 - lag]
        ratio = incr.var() / (lag * CFG.h)
        assert ratio == pytest.approx(1.0, abs=4 * math.sqrt(2 / P))


def test_enhanced_noise_has_fbm_increments():
    # zero drift: the position is the driving noise itself
    H, P = 0.75, 2000
    s = longtime.wiener_state([0.0], H, 8.0, CFG.h, seed=4, n_paths=P)
    xs = [s.x[:, 0]]
    for j in range(4):
        s = longtime.evolve_enhanced(s, drift.zero_drift(), None, 1.0, CFG, 100 + j, H)
        xs.append(s.x[:, 0])
    for lag in (1, 4):
        ratio = np.var(xs[lag] - xs[0]) / lag ** (2 * H)
        assert ratio == pytest.approx(1.0, abs=4 * math.sqrt(2 / P))


def test_semigroup_of_constant_and_linear_mean():
    F = drift.linear_drift(1.0)
    state = longtime.EnhancedState(np.array([2.0]), noise.HistoryPath.zeros(2.0, CFG.h))
    one, se1 = longtime.semigroup_estimate(lambda s: np.ones(len(s.x)), state, 1.0, 50, 0,
                                           F=F, b=None, cfg=CFG, H=0.5)
    assert one == 1.0 and se1 == 0.0
    mean, se = longtime.semigroup_estimate(lambda s: s.x[:, 0], state, 1.0, 2000, 1, F=F, b=None, cfg=CFG, H=0.5)
    assert abs(mean - 2 * math.exp(-1)) < 3 * se + 2 * abs((1 - CFG.h) ** 100 - math.exp(-1))
    with pytest.raises(InputError):
        longtime.semigroup_estimate(lambda s: s.x[:, 0], state, 1.0, 10, 1, F=F, b=None, cfg=CFG, H=0.5)


def test_chapman_kolmogorov():
    state = longtime.wiener_state([1.0], 0.75, 4.0, CFG.h, seed=3)
    b = drift.SingularDrift(1.0, drift.sine(0.5))
    (d, sd), (c, sc) = longtime.chapman_kolmogorov(lambda s: (s.x ** 2).sum(-1), state, 0.5, 1.0, 3000, 9,
                                                   F=drift.linear_drift(1.0), b=b, cfg=CFG, H=0.75)
    assert abs(d - c) < 3 * math.hypot(sd, sc)


def test_krylov_bogoliubov_warns_without_dissipation():
    with pytest.warns(RuntimeWarning):
        mu = longtime.krylov_bogoliubov([0.0], drift.zero_drift(), None, 0.0, 0.5, 3, CFG, 0, 0.5,
                                        n_chains=4, window=2.0)
    assert mu.n == 12


def test_krylov_bogoliubov_ou_variance():
    mu = longtime.krylov_bogoliubov([0.0], drift.linear_drift(1.0), None, 10.0, 1.0, 10, CFG, 1, 0.5,
                                    n_chains=500, window=4.0)
    se = math.sqrt(2 / mu.n) * 0.5 * 1.5  # mild inflation for within-chain correlation
    assert mu.variance()[0] == pytest.approx(longtime.fou_stationary_variance(1.0, 0.5, CFG.h), abs=4 * se)


def test_fou_variance_limits():
    assert longtime.fou_stationary_variance(2.0, 0.5) == pytest.approx(0.25)
    assert longtime.fou_stationary_variance(1.0, 0.5, 0.01) == pytest.approx(0.01 / (1 - 0.99 ** 2))
    assert longtime.fou_stationary_variance(1.0, 0.75, 1e-4) == pytest.approx(
        longtime.fou_stationary_variance(1.0, 0.75), rel=1e-3)
    with pytest.raises(InputError):
        longtime.fou_stationary_variance(-1.0, 0.5)


def test_couple_identical_start_is_zero():
    cfg = solver.SolverConfig(h=0.01, T=1.0, ensemble=5)
    res = longtime.couple([0.5], [0.5], drift.linear_drift(1.0), drift.SingularDrift(1.0, drift.sine()), 2.0,
                          cfg, 0, 0.4)
    assert np.all(res.dist == 0)
    assert math.isnan(res.beta_hat)


def test_couple_linear_contraction_is_exact():
    cfg = solver.SolverConfig(h=0.01, T=1.0, ensemble=10)
    res = longtime.couple([1.0], [-1.0], drift.linear_drift(2.0), None, 5.0, cfg, 3, 0.3)
    i = np.arange(len(res.dist))
    # rounding accumulates over 500 steps of two noisy paths
    np.testing.assert_allclose(res.dist, 2 * (1 - 2 * cfg.h) ** i, rtol=1e-10)
    assert res.beta_hat == pytest.approx(-2.0, abs=1e-10)
    assert res.dist[0] == 2.0


def test_coupling_csv(tmp_path):
    cfg = solver.SolverConfig(h=0.1, T=1.0, ensemble=3)
    res = longtime.couple([1.0], [0.0], drift.linear_drift(1.0), None, 1.0, cfg, 0, 0.5)
    res.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,dist,stderr" and len(lines) == 12
    assert set(res.summary()) >= {"beta_hat", "ci_low", "ci_high", "kappa1", "b_norm_estimate"}


def test_wasserstein_basic_identities():
    g = np.random.default_rng(0)
    a = g.standard_normal(500)
    assert longtime.wasserstein(a, a) == 0.0
    assert longtime.wasserstein(a, a + 0.75, 2) == pytest.approx(0.75, abs=1e-14)
    b = g.standard_normal(500) * 2
    assert longtime.wasserstein(a, b) == longtime.wasserstein(b, a)
    c = g.standard_normal(500) + 1
    assert longtime.wasserstein(a, c) <= longtime.wasserstein(a, b) + longtime.wasserstein(b, c) + 1e-12
    with pytest.raises(InputError):
        longtime.wasserstein(a, a[:-1])


def test_wasserstein_assignment_matches_brute_force():
    g = np.random.default_rng(1)
    a, b = g.standard_normal((6, 2)), g.standard_normal((6, 2))
    best = min(np.mean(np.linalg.norm(a - b[list(p)], axis=1) ** 2) for p in itertools.permutations(range(6)))
    assert longtime.wasserstein(a, b, 2) == pytest.approx(math.sqrt(best))
    big = np.zeros((longtime.ASSIGNMENT_CAP + 1, 2))
    with pytest.raises(CapError):
        longtime.wasserstein(big, big)


def test_empirical_measure_csv(tmp_path):
    mu = longtime.EmpiricalMeasure(np.arange(6.0).reshape(3, 2))
    mu.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "sample_index,x_1,x_2"
    with pytest.raises(InputError):
        longtime.EmpiricalMeasure(np.zeros((0, 1)))
