import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levytime.errors import DomainError, NumericError
from levytime.symbol import (CompoundPoisson, MarkovTriplet, Normal, PointMass, StableLike, StateSpace, Symbol,
                             chi, estimate_uniform_index, eval_symbol, h_global, h_local, symbol_preset,
                             triplet_preset)


def stable_closed_form(alpha):
    return Symbol.closed_form(lambda x, u: -np.abs(u[:, 0]) ** alpha, name=f"|u|^{alpha}")


PRESETS = ["zero", "brownian", "cauchy", "stable(0.5)", "stable(1.5)", "drift(0.7)", "cpp(1,1)", "cpp(2,-0.4)"]


# --- truncation function ----------------------------------------------------


@given(st.floats(-50, 50))
def test_chi_is_identity_near_zero_and_bounded(y):
    c = float(chi(np.array([y]))[0])
    assert abs(c) <= 1.0
    if abs(y) <= 1:
        assert c == y
    else:
        assert c == math.copysign(1.0, y)


def test_chi_in_two_dimensions_normalises():
    y = np.array([[3.0, 4.0], [0.3, 0.4]])
    np.testing.assert_allclose(chi(y), [[0.6, 0.8], [0.3, 0.4]])


# --- eval_symbol --------------------------------------------------------------


def test_brownian_symbol_value():
    assert eval_symbol(symbol_preset("brownian"), 0.0, 2.0) == complex(-2.0, 0.0)


def test_compound_poisson_example():
    # b = 1, c = 0, rate 1, jumps of size +1: e^{i pi} - 1 - i pi chi(1) + i pi
    tr = MarkovTriplet(drift=1.0, jumps=CompoundPoisson(1.0, PointMass(1.0)))
    oracle = np.exp(1j * np.pi) - 1 - 1j * np.pi * 1.0 + 1j * np.pi
    val = eval_symbol(Symbol.from_triplet(tr), 0.0, np.pi)
    assert abs(val - oracle) < 1e-12
    assert abs(val - (-2.0)) < 1e-12


def test_cpp_preset_matches_explicit_triplet():
    val = eval_symbol(symbol_preset("cpp(1,1)"), 0.0, np.pi)
    assert abs(val + 2.0) < 1e-12


@pytest.mark.parametrize("name", PRESETS)
def test_symbol_vanishes_at_zero_frequency(name):
    q = symbol_preset(name)
    assert eval_symbol(q, 0.37, 0.0) == 0


@pytest.mark.parametrize("name", PRESETS)
def test_conjugate_symmetry_and_negative_real_part(name, rng):
    q = symbol_preset(name)
    x = rng.uniform(-5, 5, 200)
    u = rng.uniform(-20, 20, 200)
    a, b = q(x, u), q(x, -u)
    assert np.max(np.abs(a - np.conj(b))) < 1e-12
    assert np.all(a.real <= 1e-12)


def test_normal_jumps_against_quadrature():
    """Jump integral of a N(m, s^2) kernel checked against direct quadrature."""
    from scipy import integrate, stats

    m, s, rate, u = 0.4, 0.8, 1.7, 1.3
    tr = MarkovTriplet(jumps=CompoundPoisson(rate, Normal(m, s)))
    val = eval_symbol(Symbol.from_triplet(tr), 0.0, u)

    def integrand(y, part):
        z = np.exp(1j * u * y) - 1 - 1j * u * float(chi(np.array([y]))[0])
        return (z.real if part == 0 else z.imag) * stats.norm.pdf(y, m, s)

    re = integrate.quad(integrand, -12, 12, args=(0,), points=[-1, 1], limit=200)[0]
    im = integrate.quad(integrand, -12, 12, args=(1,), points=[-1, 1], limit=200)[0]
    assert abs(val - rate * complex(re, im)) < 1e-9


def test_normal_jumps_two_dimensional_quadrature_matches_monte_carlo(rng):
    law = Normal(mean=[0.5, -0.2], std=0.6, dim=2)
    exact = law.mean_chi(np.zeros((1, 2)))[0]
    y = np.array([0.5, -0.2]) + 0.6 * rng.standard_normal((400_000, 2))
    mc = chi(y).mean(axis=0)
    np.testing.assert_allclose(exact, mc, atol=5e-3)


@pytest.mark.parametrize("m, s", [(0.4, 0.8), (-2.0, 0.3), (0.1, 3.0), (1.0, 1e-3)])
def test_radial_quadrature_agrees_with_one_dimensional_closed_form(m, s):
    from levytime.symbol import _normal_mean_chi_1d, _normal_mean_chi_radial

    assert abs(_normal_mean_chi_radial(np.array([m]), s)[0] - _normal_mean_chi_1d(np.array([m]), s)[0]) < 1e-9


def test_narrow_normal_jump_tends_to_point_mass():
    val = Normal(mean=[3.0, 4.0], std=1e-6, dim=2).mean_chi(np.zeros((1, 2)))[0]
    np.testing.assert_allclose(val, [0.6, 0.8], atol=1e-9)


def test_three_dimensional_normal_jump_matches_monte_carlo(rng):
    law = Normal(mean=[0.3, 0.1, 0.2], std=0.5, dim=3)
    y = np.array([0.3, 0.1, 0.2]) + 0.5 * rng.standard_normal((400_000, 3))
    np.testing.assert_allclose(law.mean_chi(np.zeros((1, 3)))[0], chi(y).mean(axis=0), atol=3e-3)


def test_eval_outside_state_space_is_domain_error():
    space = StateSpace(1, lower=0.0, upper=1.0)
    q = Symbol.from_triplet(MarkovTriplet(diffusion=1.0, state_space=space))
    assert eval_symbol(q, 0.5, 1.0) == -0.5
    with pytest.raises(DomainError):
        eval_symbol(q, 2.0, 1.0)


def test_triplet_validation_rejects_indefinite_diffusion():
    tr = MarkovTriplet(diffusion=np.array([[1.0, 0.0], [0.0, -1.0]]), state_space=StateSpace(2))
    with pytest.raises(NumericError):
        tr.validate()


def test_triplet_validation_rejects_unbounded_drift():
    tr = MarkovTriplet(drift=lambda x: np.exp(x[:, 0] ** 2))
    with pytest.raises(NumericError):
        tr.validate()


def test_state_dependent_stable_symbol():
    tr = MarkovTriplet(jumps=StableLike(index=lambda x: 1.0 + 0.5 * np.tanh(x[:, 0]), scale=2.0))
    q = Symbol.from_triplet(tr)
    a = 1.0 + 0.5 * np.tanh(0.3)
    assert abs(eval_symbol(q, 0.3, 1.5) - (-(2.0**a) * 1.5**a)) < 1e-12


@pytest.mark.parametrize("bad", ["wiener", "stable(2.5)", "drift()", "cpp(1)", "stable(x)"])
def test_bad_preset_names(bad):
    with pytest.raises(ValueError):
        triplet_preset(bad)


# --- H(x, R), H(R) -------------------------------------------------------------


def test_h_local_closed_forms():
    assert h_local(symbol_preset("brownian"), 0.0, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert h_local(symbol_preset("zero"), 3.0, 0.2) == 0.0
    assert h_local(symbol_preset("cauchy"), -1.0, 0.25) == pytest.approx(4.0, rel=1e-12)


def test_h_global_closed_forms():
    assert h_global(symbol_preset("brownian"), 1.0) == pytest.approx(0.5, rel=1e-12)
    assert h_global(symbol_preset("drift(1)"), 0.5) == pytest.approx(2.0, rel=1e-12)
    assert h_global(symbol_preset("zero"), 0.1) == 0.0


def test_h_local_ball_missing_box_is_domain_error():
    space = StateSpace(1, lower=0.0, upper=1.0)
    q = Symbol.from_triplet(MarkovTriplet(diffusion=1.0, state_space=space))
    with pytest.raises(DomainError):
        h_local(q, 5.0, 0.1)


def _varying_symbol():
    tr = MarkovTriplet(drift=lambda x: np.sin(x), diffusion=lambda x: 1.0 + 0.5 * np.cos(x[:, 0]),
                       jumps=StableLike(index=lambda x: 1.2 + 0.3 * np.tanh(x[:, 0])))
    return Symbol.from_triplet(tr)


@settings(max_examples=25, deadline=None)
@given(st.floats(-8, 8), st.floats(0.05, 3.0))
def test_h_local_below_h_global(x, R):
    q = _varying_symbol()
    # the probe is the local ball grid itself, so the comparison is exact on grids
    probe = x + np.linspace(-2 * R, 2 * R, 128)
    assert h_local(q, x, R) <= h_global(q, R, probe=probe) + 1e-9


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=8, unique=True))
def test_h_global_nonincreasing(radii):
    r = np.sort(np.array(radii))[::-1]
    h = h_global(_varying_symbol(), r)
    assert np.all(np.diff(h) >= -1e-9)


# --- uniform index --------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5, 2.0])
def test_index_of_closed_form_stable(alpha):
    est = estimate_uniform_index(stable_closed_form(alpha))
    assert abs(est.beta_infinity - alpha) <= 0.05
    assert est.fit_residual < 1e-6


def test_index_of_presets():
    assert abs(estimate_uniform_index(symbol_preset("brownian")).beta_infinity - 2.0) <= 0.05
    assert abs(estimate_uniform_index(symbol_preset("drift(1)")).beta_infinity - 1.0) <= 0.05
    assert abs(estimate_uniform_index(symbol_preset("stable(1.5)")).beta_infinity - 1.5) <= 0.05


def test_index_of_compound_poisson_is_zero():
    # the preset drift cancels the chi compensation, leaving the bounded symbol e^{iu} - 1
    est = estimate_uniform_index(symbol_preset("cpp(1,1)"))
    assert abs(est.beta_infinity) <= 0.05


def test_index_of_zero_symbol_is_degenerate():
    est = estimate_uniform_index(symbol_preset("zero"))
    assert est.beta_infinity == 0.0 and est.degenerate


def test_index_invariants():
    est = estimate_uniform_index(_varying_symbol())
    assert np.all(np.diff(est.r_grid) < 0)
    assert np.all(est.h_values >= 0)
    assert 0.0 <= est.beta_infinity <= 2.0
    # diffusion dominates at small R
    assert abs(est.beta_infinity - 2.0) <= 0.05


@pytest.mark.parametrize("grid", [[1.0, 0.1, 0.01], [1.0, 0.5, 0.2, 0.1], [0.01, 0.1, 1.0, 10.0]])
def test_index_rejects_bad_grids(grid):
    with pytest.raises(ValueError):
        estimate_uniform_index(symbol_preset("brownian"), r_grid=grid)
