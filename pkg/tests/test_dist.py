import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from cmrp import dist
from cmrp.errors import ConstraintError, DomainError, UnsupportedOperationError

CONTINUOUS = [
    dist.Exponential(1.7),
    dist.Gamma(2.0, 0.6),
    dist.Gamma(0.5, 3.0),
    dist.HyperExponential((0.3, 0.7), (0.5, 4.0)),
    dist.Uniform(0.0, 1.0),
    dist.Uniform(2.0, 5.0),
    dist.Beta(2.0, 3.0),
    dist.Shifted(dist.Gamma(1.0, 2.0), 1.0),
    dist.PowerSurvival(dist.Exponential(1.0), 0.5),
]


@pytest.mark.parametrize("law", CONTINUOUS, ids=lambda l: repr(l)[:40])
def test_density_integrates_to_one(law):
    lo, hi = law.support()
    val, _ = integrate.quad(lambda x: float(law.pdf(x)), lo, hi, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("law", CONTINUOUS, ids=lambda l: repr(l)[:40])
def test_moments_match_quadrature(law):
    lo, hi = law.support()
    m1, _ = integrate.quad(lambda x: x * float(law.pdf(x)), lo, hi, limit=200)
    m2, _ = integrate.quad(lambda x: x * x * float(law.pdf(x)), lo, hi, limit=200)
    assert law.mean() == pytest.approx(m1, rel=1e-7)
    assert law.var() == pytest.approx(m2 - m1 * m1, rel=1e-6)


@pytest.mark.parametrize("law", CONTINUOUS, ids=lambda l: repr(l)[:40])
def test_survival_matches_integrated_density(law):
    lo, hi = law.support()
    for q in (0.1, 0.5, 0.9):
        x = float(law.ppf(q))
        tail, _ = integrate.quad(lambda y: float(law.pdf(y)), x, hi, limit=200)
        assert float(law.sf(x)) == pytest.approx(tail, abs=1e-9)
        assert float(law.sf(x)) == pytest.approx(1 - q, abs=1e-9)


@pytest.mark.parametrize("law", CONTINUOUS, ids=lambda l: repr(l)[:40])
def test_sampler_matches_cdf(law):
    x = law.sample(np.random.default_rng(5), 20_000)
    res = stats.kstest(x, lambda v: np.asarray(law.cdf(v)))
    assert res.pvalue > 1e-3


def test_gamma_log_survival_far_tail_matches_high_precision():
    g = dist.Gamma(1.0, 2.5)
    mpmath.mp.dps = 50
    for x in (50.0, 300.0, 900.0):
        ref = float(mpmath.log(mpmath.gammainc(2.5, x, mpmath.inf, regularized=True)))
        assert float(g.logsf(x)) == pytest.approx(ref, rel=1e-10)


def test_discrete_laws_have_no_density():
    with pytest.raises(UnsupportedOperationError):
        dist.Degenerate(1.0).pdf(1.0)
    with pytest.raises(UnsupportedOperationError):
        dist.FiniteDiscrete((1.0, 2.0), (0.5, 0.5)).pdf(1.0)


def test_constructor_validation():
    with pytest.raises(ConstraintError):
        dist.Exponential(0.0)
    with pytest.raises(ConstraintError):
        dist.Gamma(1.0, -1.0)
    with pytest.raises(ConstraintError):
        dist.HyperExponential((0.5, 0.6), (1.0, 2.0))
    with pytest.raises(ConstraintError):
        dist.PowerSurvival(dist.Exponential(1.0), 1.5)


def test_survival_integral_uniform_and_identity():
    val, err = dist.survival_integral(dist.Uniform(0.0, 1.0), 0.5)
    assert val == pytest.approx(2.0 / 3.0, abs=1e-10)
    for law in (dist.Exponential(0.7), dist.Gamma(2.0, 3.0), dist.Shifted(dist.Exponential(1.0), 1.0)):
        assert dist.survival_integral(law, 1.0)[0] == pytest.approx(law.mean(), rel=1e-10)


def test_rn_ratio_exponential_identity_is_one():
    w = np.array([0.1, 1.0, 7.5])
    assert np.allclose(dist.rn_exp_over_kernel(dist.Exponential(2.0), 2.0, w), 1.0)
    with pytest.raises(DomainError):
        dist.log_rn_exp_over_kernel(dist.Exponential(1.0), 1.0, np.array([0.0]))


def test_law_roundtrip():
    for law in (dist.Exponential(2.0), dist.Gamma(1.5, 2.0), dist.Uniform(0.0, 2.0), dist.Beta(1.0, 2.0),
                dist.HyperExponential((0.5, 0.5), (1.0, 3.0)), dist.Shifted(dist.Gamma(1.0, 2.0), 1.0),
                dist.Product((dist.Exponential(1.0), dist.Exponential(2.0)))):
        assert dist.law_from_dict(law.to_dict()) == law


@settings(max_examples=60, deadline=None)
@given(rate=st.floats(0.05, 20), shape=st.floats(0.2, 30), x=st.floats(0, 200))
def test_gamma_cdf_sf_complement(rate, shape, x):
    g = dist.Gamma(rate, shape)
    assert float(g.cdf(x)) + float(g.sf(x)) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= float(g.sf(x)) <= 1.0


@settings(max_examples=60, deadline=None)
@given(x=st.floats(0, 50), dx=st.floats(0, 10))
def test_hyperexp_sf_nonincreasing(x, dx):
    h = dist.HyperExponential((0.5, 0.5), (0.3, 2.0))
    assert float(h.sf(x + dx)) <= float(h.sf(x)) + 1e-15


def test_mgf_closed_form_and_divergence():
    assert dist.Gamma(4.0, 4.0).mgf(0.5) == pytest.approx((4.0 / 3.5) ** 4, rel=1e-12)
    assert math.isinf(dist.Exponential(1.0).mgf(1.0))
