import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ezbsde import (ParameterDomainError, Preferences, aggregator_f, bequest_utility, make_black_scholes,
                    make_heston, make_linear_diffusion, market_bounds, theta_of)
from ezbsde.constraints import Interval
from ezbsde.preferences import aggregator_f_ratio_form

from conftest import PREFS, bs_model, heston_model, linear_model


def test_theta_values():
    assert theta_of(2.0, 1.2) == pytest.approx(-6.0)
    assert theta_of(5.0, 2.0) == pytest.approx(-8.0)
    assert PREFS.theta == pytest.approx(-6.0)


@pytest.mark.parametrize("gamma,psi", [(1.0, 1.2), (0.5, 1.2), (2.0, 1.0), (2.0, 0.8)])
def test_theta_domain(gamma, psi):
    with pytest.raises(ParameterDomainError):
        theta_of(gamma, psi)


def test_preferences_reject_nonpositive_delta():
    with pytest.raises(ParameterDomainError):
        Preferences(0.0, 2.0, 1.2)


def test_aggregator_hand_value():
    # (1-gamma) v = 1, so f = delta c^q / q - delta theta v with q = 1/6
    f = aggregator_f(0.05, -1.0, PREFS)
    assert f == pytest.approx(0.48 * 0.05 ** (1 / 6) - 0.48, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 2.0), st.floats(-50.0, -1e-3), st.floats(1.1, 8.0), st.floats(1.05, 3.0))
def test_aggregator_two_forms_agree(c, v, gamma, psi):
    prefs = Preferences(0.08, gamma, psi)
    assert aggregator_f(c, v, prefs) == pytest.approx(aggregator_f_ratio_form(c, v, prefs), rel=1e-10, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(-5.0, -1e-2), st.floats(0.2, 5.0))
def test_aggregator_homogeneity(c, v, scale):
    """f(k c, k^(1-gamma) v) = k^(1-gamma) f(c, v): the reason utilities factor through wealth."""
    g = PREFS.gamma
    lhs = aggregator_f(scale * c, scale ** (1 - g) * v, PREFS)
    assert lhs == pytest.approx(scale ** (1 - g) * aggregator_f(c, v, PREFS), rel=1e-10)


def test_aggregator_domain():
    with pytest.raises(ParameterDomainError):
        aggregator_f(-0.1, -1.0, PREFS)
    with pytest.raises(ParameterDomainError):
        aggregator_f(0.1, 0.0, PREFS)


def test_bequest_utility():
    assert bequest_utility(2.0, 2.0) == -0.5
    np.testing.assert_allclose(bequest_utility(np.array([1.0, 4.0]), 3.0), [-0.5, -1 / 32])
    with pytest.raises(ParameterDomainError):
        bequest_utility(0.0, 2.0)


# -- markets ---------------------------------------------------------------

def test_black_scholes_coefficients():
    m = bs_model()
    c = m.coefficients(0.0, np.zeros((3, 1)))
    np.testing.assert_allclose(c.r, 0.03)
    np.testing.assert_allclose(c.price_of_risk_sq(), (0.05 / 0.17) ** 2)
    assert m.scheme == "constant" and m.constant_rate
    with pytest.raises(ParameterDomainError):
        make_black_scholes(0.03, 0.05, 0.0)


def test_heston_price_of_risk_is_constant(rng):
    m = heston_model()
    x = rng.uniform(1e-4, 2.0, size=(100, 1))
    c = m.coefficients(0.0, x)
    np.testing.assert_allclose(c.price_of_risk_sq(), 0.47**2, rtol=1e-12)
    np.testing.assert_allclose(c.a[:, 0, 0], 0.25 * np.sqrt(x[:, 0]))
    assert m.x0[0] == 0.0225


def test_heston_domain_and_feller():
    with pytest.raises(ParameterDomainError):
        make_heston(5, 0.0225, 0.25, 0.05, 0.0, 1.0, 0.47, -0.5, x0=0.0)
    with pytest.raises(ParameterDomainError):
        make_heston(5, 0.0225, 0.25, 0.05, 0.0, 1.0, 0.47, -1.5)
    with pytest.warns(UserWarning, match="Feller"):
        make_heston(1.0, 0.01, 1.0, 0.05, 0.0, 1.0, 0.47, -0.5)


def test_linear_truncation():
    m = linear_model()
    c = m.coefficients(0.0, np.array([[-200.0], [0.5], [300.0]]))
    np.testing.assert_allclose(c.r, [0.0014 - 100.0, 0.5014, 300.0014])
    np.testing.assert_allclose(c.mu[:, 0], 0.0436 * np.array([0.05 - 100, 0.55, 100.05]))
    assert m.constant_rate is False
    assert linear_model(r1=0.0).constant_rate


@pytest.mark.parametrize("make", [bs_model, heston_model, linear_model])
def test_correlation_loadings_complete(make):
    m = make()
    c = m.coefficients(0.0, m.sample_points[:50])
    gram = c.rho @ np.swapaxes(c.rho, 1, 2) + c.rho_p @ np.swapaxes(c.rho_p, 1, 2)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(m.n), gram.shape), atol=1e-15)


def test_market_bounds():
    b = market_bounds(bs_model())
    assert b.C0 == pytest.approx((0.05 / 0.17) ** 2) and b.r_min == 0.0 and b.C_p == 0.0
    b = market_bounds(bs_model(), constraint=Interval(0.1, 0.5))
    assert b.C_p == pytest.approx(0.017)
    lin = market_bounds(linear_model())
    assert lin.C0 == pytest.approx(100.05**2)
    assert lin.r_min == pytest.approx(0.0014 - 100.0)


def test_frozen_model_matches_at_x0():
    m = heston_model()
    f = m.frozen()
    assert f.scheme == "constant"
    a = m.coefficients(0.0, m.x0[None, :])
    b = f.coefficients(0.0, np.array([[5.0]]))
    np.testing.assert_allclose(b.mu, a.mu)
    np.testing.assert_allclose(b.sigma, a.sigma)
    np.testing.assert_allclose(b.r, a.r)
