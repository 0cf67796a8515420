import json
import math

import numpy as np
import pytest

from levytime.errors import RangeError
from levytime.ivp import TimeProfile, integrate_reciprocal, residual
from levytime.simulate import SamplePath, SimConfig, simulate_ensemble, simulate_path
from levytime.symbol import triplet_preset
from levytime.tce import (GFunction, check_equation, check_growth_at_zeros, check_holder_after_tau,
                          check_regular_at_zero, divergence_at_tau0, first_zero_time, path_residual, solve_tce,
                          time_changed_paths)

POS = np.linspace(0.0, 10.0, 1001)


def gfun(f, zeros=(), lam=None, probe=None, **kw):
    return GFunction(f, declared_zeros=zeros, growth_exponent=lam, probe=probe, **kw)


def drift_ensemble(x0, dt=1e-3, horizon=1.0, rate=1.0):
    return simulate_ensemble(triplet_preset(f"drift({rate})"), x0, SimConfig(dt, horizon, 1), master_seed=0)


# --- GFunction ---------------------------------------------------------------------------------


def test_gfunction_validation():
    with pytest.raises(ValueError):
        gfun(lambda x: x[:, 0])  # negative on the default probe
    with pytest.raises(ValueError):
        gfun(lambda x: np.ones(x.shape[0]), bound=0.5)
    with pytest.raises(ValueError):
        gfun(lambda x: np.abs(x[:, 0]) + 1, zeros=[0.0])
    g = gfun(lambda x: np.minimum(x[:, 0], 2.0), probe=POS)
    assert g.bound == 2.0
    assert g(1.5) == 1.5


# --- regularity at zero ---------------------------------------------------------------------------


def test_regularity_examples():
    assert check_regular_at_zero(GFunction.constant(1.0)).passed
    assert check_regular_at_zero(gfun(lambda x: np.minimum(np.abs(x[:, 0]), 1.0), zeros=[0.0])).passed
    spike = gfun(lambda x: np.where(np.abs(x[:, 0] - 0.5) < 1e-12, 1.0, 0.0), probe=np.linspace(0, 1, 11))
    v = check_regular_at_zero(spike)
    assert not v.passed and v.witness == pytest.approx((0.5,))


def test_regularity_with_jump_discontinuity_that_stays_positive():
    # the discrete check uses eps = g(x) / 2, so a jump by less than a factor 2 passes
    g = gfun(lambda x: np.where(x[:, 0] < 0, 0.6, 1.0))
    assert check_regular_at_zero(g).passed


# --- growth ----------------------------------------------------------------------------------------


def test_growth_examples():
    g = gfun(lambda x: np.minimum(np.abs(x[:, 0]) ** 3, 1.0), zeros=[0.0], lam=3.0)
    v = check_growth_at_zeros(g, 2.0)
    assert v.passed and v.index_gap == pytest.approx(1.0)
    assert v.fitted_exponent == pytest.approx(3.0, abs=1e-9)
    assert v.growth_constant == pytest.approx(1.0, rel=1e-9)
    g = gfun(lambda x: np.minimum(np.sqrt(np.abs(x[:, 0])), 1.0), zeros=[0.0], lam=0.5)
    v = check_growth_at_zeros(g, 1.0)
    assert not v.passed and v.index_gap == pytest.approx(-0.5)
    v = check_growth_at_zeros(GFunction.constant(1.0), 2.0)
    assert v.passed and v.vacuous


def test_growth_declared_exponent_too_large_fails():
    g = gfun(lambda x: np.minimum(x[:, 0] ** 2, 1.0), zeros=[0.0], lam=3.0)
    assert not check_growth_at_zeros(g, 1.0).passed


def test_growth_degenerate_zero_region():
    g = gfun(lambda x: np.maximum(np.abs(x[:, 0]) - 1.0, 0.0), zeros=[0.0], lam=2.0)
    v = check_growth_at_zeros(g, 1.0)
    assert v.passed and v.degenerate


def test_growth_in_two_dimensions():
    g = GFunction(lambda x: np.minimum(np.sum(x**2, axis=1) ** 1.5, 1.0), declared_zeros=[[0.0, 0.0]],
                  growth_exponent=3.0, dim=2)
    v = check_growth_at_zeros(g, 2.0)
    assert v.passed and v.fitted_exponent == pytest.approx(3.0, abs=1e-9)


# --- Holder after tau0 -------------------------------------------------------------------------------


def g_abs():
    return gfun(lambda x: np.minimum(np.abs(x[:, 0]), 1.0), zeros=[0.0])


def test_holder_constant_path():
    p = SamplePath(np.linspace(0, 1, 101), np.zeros(101))
    v = check_holder_after_tau(p, g_abs(), 2.0)
    assert v.passed and v.C == 0.0


def test_holder_drift_path():
    p = simulate_path(triplet_preset("drift(1)"), 0.0, SimConfig(1e-3, 1.0), 0)
    assert check_holder_after_tau(p, g_abs(), 2.0).passed
    v = check_holder_after_tau(p, g_abs(), 0.5)
    assert not v.passed and v.slope == pytest.approx(-1.0, abs=1e-6)


def test_holder_vacuous_and_inconclusive():
    p = SamplePath(np.linspace(0, 1, 101), np.ones(101))
    assert check_holder_after_tau(p, g_abs(), 2.0).vacuous
    q = SamplePath(np.linspace(0, 1, 101), np.r_[np.ones(99), 0.0, 0.0])
    assert check_holder_after_tau(q, g_abs(), 2.0).inconclusive


def test_holder_brownian_pass_rates():
    e = simulate_ensemble(triplet_preset("brownian"), 0.0, SimConfig(1e-4, 1.0, 400), master_seed=12)
    g = g_abs()
    rate = lambda lam: np.mean([check_holder_after_tau(p, g, lam).passed for p in e.paths])  # noqa: E731
    assert rate(3.0) >= 0.95
    assert rate(1.5) <= 0.5


# --- divergence at tau0 -------------------------------------------------------------------------------


def test_divergence_examples():
    still = SamplePath(np.linspace(0, 1, 101), np.zeros(101))
    v = divergence_at_tau0(still, g_abs())
    assert v.certified and v.tau0 == 0.0
    lin = simulate_path(triplet_preset("drift(1)"), 0.0, SimConfig(1e-3, 1.0), 0)
    v = divergence_at_tau0(lin, gfun(lambda x: np.minimum(x[:, 0], 1.0), probe=POS))
    assert v.certified and v.exponent == pytest.approx(1.0, abs=1e-9)
    v = divergence_at_tau0(lin, gfun(lambda x: np.minimum(np.sqrt(x[:, 0]), 1.0), probe=POS))
    assert not v.certified and v.exponent == pytest.approx(0.5, abs=1e-9)


def test_divergence_needs_a_zero():
    p = SamplePath(np.linspace(0, 1, 11), np.ones(11))
    assert not divergence_at_tau0(p, g_abs()).conclusive
    assert first_zero_time(p, g_abs()) == math.inf


# --- solve_tce ---------------------------------------------------------------------------------------------


def test_identity_time_change():
    e = simulate_ensemble(triplet_preset("brownian"), 0.3, SimConfig(1e-3, 1.0, 5), master_seed=1)
    sols = solve_tce(e, GFunction.constant(1.0))
    for s, p in zip(sols, e.paths):
        np.testing.assert_allclose(s.alpha, p.times, atol=1e-12)
        assert np.array_equal(s.z_path.values, p.values)
        assert s.unique


def test_capped_exponential_closed_form():
    dt = 1e-3
    e = drift_ensemble(1.0, dt=dt, horizon=2.0)
    g = gfun(lambda x: np.minimum(x[:, 0], 2.0), probe=POS)
    s = solve_tce(e, g, z_horizon=1.0)[0]
    t = s.times
    t_cap = math.log(2.0)
    exact = np.where(t < t_cap, np.exp(t), 2.0 + 2.0 * (t - t_cap))
    assert np.max(np.abs(s.z_path.x - exact)) <= 5 * dt
    assert s.unique


def test_square_root_counterexample():
    dt = 1e-3
    e = drift_ensemble(0.0, dt=dt)
    g = gfun(lambda x: np.minimum(np.sqrt(np.abs(x[:, 0])), 1.0), zeros=[0.0], lam=0.5, probe=POS)
    s = solve_tce(e, g)[0]
    assert not s.unique
    assert np.all(s.alpha == 0) and np.all(s.z_path.x == 0)
    assert np.max(np.abs(s.alpha_max - s.times**2 / 4)) <= 1e-3
    assert s.report.index_gap < 0 and not s.report.theorem_applies


def test_budget_violation_is_range_error():
    e = drift_ensemble(1.0)
    g = gfun(lambda x: np.minimum(x[:, 0], 2.0), probe=POS)
    with pytest.raises(RangeError):
        solve_tce(e, g, z_horizon=1.0)


def test_default_horizon_respects_budget():
    e = drift_ensemble(1.0)
    g = gfun(lambda x: np.minimum(x[:, 0], 2.0), probe=POS)
    s = solve_tce(e, g)[0]
    assert s.times[-1] == pytest.approx(0.5)


@pytest.fixture(scope="module")
def cubic_brownian():
    e = simulate_ensemble(triplet_preset("brownian"), 0.0, SimConfig(1e-3, 1.0, 200), master_seed=77)
    g = gfun(lambda x: np.minimum(np.abs(x[:, 0]) ** 3, 1.0), zeros=[0.0], lam=3.0)
    return e, g, solve_tce(e, g)


def test_tce_invariants(cubic_brownian):
    e, g, sols = cubic_brownian
    dt = 1e-3
    C = 2 * (1 + g.bound**2)
    for s, p in zip(sols, e.paths):
        assert np.array_equal(s.z_path.values, p.at(s.alpha))
        assert np.all(s.alpha <= s.times * g.bound)
        assert np.all(np.diff(s.alpha) >= 0)
        assert path_residual(p, g, s) <= C * dt
    stack = time_changed_paths(sols)
    assert stack.values.shape == (200, sols[0].times.size, 1)


def test_theorem_consistency(cubic_brownian):
    e, g, sols = cubic_brownian
    report = sols[0].report
    assert report.theorem_applies
    assert report.index_gap == pytest.approx(1.0, abs=0.05)
    certified = [s for s, d in zip(sols, report.divergence) if d.certified]
    assert len(certified) >= 100
    assert all(s.unique for s in certified)
    json.dumps(report.to_dict())


def test_equation_direction_two():
    """int_0^t g(Z(s)) ds recomputed from Z reproduces alpha."""
    dt = 1e-3
    e = simulate_ensemble(triplet_preset("brownian"), 0.5, SimConfig(dt, 1.0, 50), master_seed=3)
    g = gfun(lambda x: 0.5 + 0.5 * np.minimum(np.abs(x[:, 0]), 1.0))
    for s in solve_tce(e, g):
        # left-point quadrature of a Lipschitz g along a path with O(sqrt(dt)) increments
        assert check_equation(s, g) <= 5 * math.sqrt(dt)


def test_profile_of_constant_path_is_linear_in_integral():
    # Y = g(X) for the drift path equals s itself: I diverges and the minimal solution stays at 0
    e = drift_ensemble(0.0)
    g = gfun(lambda x: np.minimum(x[:, 0], 1.0), zeros=[0.0], lam=1.0, probe=POS)
    s = solve_tce(e, g)[0]
    assert s.unique and np.all(s.alpha == 0) and np.all(s.alpha_max == 0)
    Y = TimeProfile(e.times, g.evaluate(e.values[0]))
    assert integrate_reciprocal(Y, 0.5) == math.inf
    assert residual(Y, s.alpha, s.times) == 0.0
