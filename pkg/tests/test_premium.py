import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmrp import dist, presets
from cmrp.errors import DomainError
from cmrp.model import ExponentialKernel, RiskModel, theta_grid
from cmrp.premium import (
    check_two_routes,
    conditional_premium_density,
    mixed_premium_density,
    mixed_q_premium,
    ordering_report,
    q_premium,
    wang_premium,
)
from cmrp.tilt import identity_tilt


def test_example1_closed_forms():
    pr = presets.example1(zeta=1.5, c=3.0)
    grid = theta_grid(pr.model.mixing, 8)
    pp = conditional_premium_density(pr.model, grid)
    pq = q_premium(pr.model, pr.tilt, grid)
    assert np.allclose(pp, 4 / (1.5 * grid.sum(axis=1)), rtol=1e-12)
    assert np.allclose(pq, 2 * 3.0 / (1.5 * grid.sum(axis=1)), rtol=1e-8)


def test_example2_closed_forms():
    k, eta, c, d, b1, b2, a = 1.3, 1.0, 0.1, 1.25, 4.0, 3.5, 4.0
    pr = presets.example2(k, eta, c, d, b1, b2, a)
    th = np.array([0.3, 1.0, 2.7])
    assert np.allclose(conditional_premium_density(pr.model, th[:, None]), th / (k * eta), rtol=1e-12)
    assert np.allclose(q_premium(pr.model, pr.tilt, th[:, None]), th / (d * (eta - c)), rtol=1e-8)
    assert mixed_premium_density(pr.model)[0] == pytest.approx(a / (b1 * k * eta), rel=1e-8)
    assert mixed_q_premium(pr.model, pr.tilt)[0] == pytest.approx(a / (b2 * d * (eta - c)), rel=1e-8)


def test_example3_premium_is_theta_times_pi_c():
    pr = presets.example3(c=1.25)
    th = np.array([[0.5], [2.0]])
    assert np.allclose(q_premium(pr.model, pr.tilt, th), th[:, 0] * 1.25 / 2.25, rtol=1e-8)


@pytest.mark.parametrize("name", sorted(presets.REGISTRY))
def test_two_routes_agree(name):
    pr = presets.get(name)
    assert check_two_routes(pr.model, pr.tilt, theta_grid(pr.model.mixing, 16)) < 1e-8


def test_mixed_premium_against_monte_carlo():
    pr = presets.example2()
    th = pr.model.sample_theta(np.random.default_rng(1), 1_000_000)
    vals = conditional_premium_density(pr.model, th)
    val, err = mixed_premium_density(pr.model)
    assert abs(vals.mean() - val) < 3.29 * vals.std() / math.sqrt(vals.size)


def test_degenerate_mixing_premium_equals_conditional():
    m = RiskModel(dist.Degenerate(2.0), ExponentialKernel(1.0), dist.Degenerate(1.0))
    assert mixed_premium_density(m)[0] == pytest.approx(2.0)
    assert conditional_premium_density(m, 2.0) == pytest.approx(2.0)


def test_wang_premium_oracles():
    assert wang_premium(dist.Uniform(0.0, 1.0), 2.0)[0] == pytest.approx(2.0 / 3.0, abs=1e-10)
    for law in (dist.Exponential(2.0), dist.Gamma(1.0, 3.0), dist.Uniform(0.0, 4.0)):
        assert wang_premium(law, 1.0)[0] == pytest.approx(law.mean(), abs=1e-10)
    assert wang_premium(dist.Exponential(1.0), 3.0)[0] == pytest.approx(3.0, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(c1=st.floats(1.0, 5.0), dc=st.floats(0.01, 3.0))
def test_wang_premium_increasing_in_c(c1, dc):
    law = dist.Gamma(1.0, 2.0)
    assert wang_premium(law, c1 + dc)[0] > wang_premium(law, c1)[0]


def test_wang_premium_rejects_c_below_one():
    with pytest.raises(DomainError):
        wang_premium(dist.Exponential(1.0), 0.5)


def test_ordering_example2_strict():
    pr = presets.example2()
    rep = ordering_report(pr.model, pr.tilt)
    assert rep.pointwise == "strict" and rep.mixed == "strict" and not rep.counterexample
    assert rep.grid.shape[0] == 64


def test_ordering_counterexample_reversed():
    pr = presets.example2_cou()
    p = pr.params
    # closed form: reversal exactly when b2 d > b1 k
    assert p["b2"] * p["d"] > p["b1"] * p["k"]
    assert pr.closed_forms["p_Q"] < pr.closed_forms["p_P"]
    rep = ordering_report(pr.model, pr.tilt)
    assert rep.pointwise == "strict"
    assert rep.mixed == "reversed"
    assert rep.counterexample
    assert rep.p_P - rep.p_Q > 10 * (rep.p_P_err + rep.p_Q_err)


def test_ordering_identity_is_equal(mixed_poisson):
    rep = ordering_report(mixed_poisson, identity_tilt(mixed_poisson))
    assert rep.pointwise == "equal"
    assert rep.mixed == "equal"


def test_ordering_association_case_example3():
    pr = presets.example3()
    rep = ordering_report(pr.model, pr.tilt)
    assert rep.verification == "GRID+MONOTONE"
    assert rep.monotone_association is True
    assert rep.mixed == "strict"
    assert rep.p_Q == pytest.approx(pr.closed_forms["p_Q"], rel=1e-8)
