import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmrp import diagnostics as dg
from cmrp import dist, presets
from cmrp.errors import InconclusiveError, UnsupportedOperationError
from cmrp.model import ExponentialKernel, RiskModel
from cmrp.tilt import identity_tilt, q_model
from cmrp.ruin import enforced_premium


def test_check_report_rules():
    assert dg.CheckReport.build("x", 1.0, dg.Estimate(1.1, 0.05, 100)).passed
    assert not dg.CheckReport.build("x", 1.0, dg.Estimate(1.1, 0.03, 100)).passed
    assert dg.CheckReport.build("x", 1.0, dg.Estimate(1.1, 0.031, 100)).passed
    assert dg.CheckReport.build("x", 1.0, dg.Estimate(1.0, 0.0, 100)).passed
    assert not dg.CheckReport.build("x", 1.0, dg.Estimate(1.0001, 0.0, 100)).passed
    with pytest.raises(InconclusiveError):
        dg.Estimate.from_samples(np.array([1.0]))


def test_identity_martingale_is_exactly_one(mixed_poisson):
    reps = dg.martingale_unit_mean(mixed_poisson, identity_tilt(mixed_poisson), (1.0, 5.0), n=3000, seed=1)
    for r in reps:
        assert r.estimate.value == 1.0 and r.estimate.stderr == 0.0 and r.passed


def test_martingale_small_budget_example2():
    pr = presets.example2()
    for r in dg.martingale_unit_mean(pr.model, pr.tilt, (1.0, 5.0), n=20_000, seed=2, threads=4):
        assert r.passed, r


def test_martingale_reproducible_across_threads():
    pr = presets.example3()
    a = dg.martingale_unit_mean(pr.model, pr.tilt, (2.0,), n=10_000, seed=5, threads=1)
    b = dg.martingale_unit_mean(pr.model, pr.tilt, (2.0,), n=10_000, seed=5, threads=8)
    assert a == b


def test_compensated_drift_q_model():
    pr = presets.example2()
    qm = q_model(pr.model, pr.tilt)
    c = lambda rows: np.atleast_2d(rows)[:, 0] / (1.25 * 0.9)  # noqa: E731
    for r in dg.compensated_drift(qm, c, (5.0, 10.0), n=20_000, seed=3, threads=4):
        assert r.passed


def test_conditional_drift_degenerate_strata():
    pr = presets.example2()
    qm = q_model(pr.model, pr.tilt)
    grid = np.array([[0.5], [1.0], [2.0]])
    reps = dg.conditional_drift(qm, enforced_premium(pr.model, pr.tilt), grid, (5.0,), n=10_000, seed=4, threads=4)
    assert len(reps) == 3 and all(r.passed for r in reps)


def test_classical_compound_poisson_compensator():
    m = RiskModel(dist.Degenerate(2.0), ExponentialKernel(1.0), dist.Exponential(0.5))
    for r in dg.compensated_drift(m, 4.0, (5.0,), n=20_000, seed=6, threads=4):
        assert r.passed


def test_jensen_gap_detected():
    pr = presets.example2()
    r = dg.jensen_gap(pr.model, t=10.0, n=20_000, seed=7, threads=4)
    assert r.passed and r.z > 3.29


def test_jensen_gap_absent_without_mixing():
    m = RiskModel(dist.Degenerate(1.0), ExponentialKernel(1.0), dist.Exponential(1.0))
    r = dg.jensen_gap(m, t=10.0, n=20_000, seed=7, threads=4)
    assert not r.passed


def test_slln_degenerate_oracle():
    m = RiskModel(dist.Degenerate(1.0), ExponentialKernel(1.0), dist.Degenerate(1.0))
    (rep,) = dg.slln_ratio(m, (400.0,), n=1000, seed=2)
    # Poisson(400) counts: |N/t - 1| has 95th percentile near 1.96 / 20
    assert rep.q95 < 2.0 / math.sqrt(rep.mean_count) * 1.2
    assert rep.mean_count == pytest.approx(400, rel=0.01)


def test_wald_identities_mixed_poisson(mixed_poisson):
    reps = dg.wald_identities(mixed_poisson, 4.0, n=50_000, seed=3, threads=4)
    assert reps[0].target == pytest.approx(4 * 2 / 3, rel=1e-10)
    # Var = E N Var X + Var N E^2 X with Var N = t E Theta + t^2 Var Theta
    assert reps[1].target == pytest.approx(8 / 3 + (8 / 3 + 16 * 2 / 9), rel=1e-10)
    assert all(r.passed for r in reps)


def test_wald_needs_exponential_kernel(gamma_renewal):
    with pytest.raises(UnsupportedOperationError):
        dg.wald_identities(gamma_renewal, 1.0, n=10)


def test_association_worked_cases():
    z, p = [1, 2, 3], [Fraction(1, 3)] * 3
    r = dg.association_inequality(z, p, lambda v: v, lambda v: v)
    assert r.lhs == Fraction(14, 3) and r.rhs == 4 and r.direction == ">=" and r.holds
    r = dg.association_inequality(z, p, lambda v: v, lambda v: -v)
    assert r.direction == "<=" and r.holds
    r = dg.association_inequality(z, p, lambda v: v, lambda v: v * v, event=[2, 3])
    # E[1_A z^3] = 35/3, E[1_A z] = 5/3, E[1_A z^2] = 13/3, P(A) = 2/3
    assert r.lhs == Fraction(35, 3) and r.rhs == Fraction(5, 3) * Fraction(13, 3) / Fraction(2, 3)


def test_association_rejects_non_monotone():
    with pytest.raises(ValueError):
        dg.association_inequality([1, 2, 3], [Fraction(1, 3)] * 3, lambda v: (v - 2) ** 2, lambda v: v)


@st.composite
def monotone_case(draw):
    size = draw(st.integers(1, 8))
    atoms = sorted(draw(st.lists(st.integers(-20, 20), min_size=size, max_size=size, unique=True)))
    raw = draw(st.lists(st.integers(1, 9), min_size=size, max_size=size))
    probs = [Fraction(r, sum(raw)) for r in raw]
    fv = sorted(draw(st.lists(st.integers(-9, 9), min_size=size, max_size=size)))
    gv = sorted(draw(st.lists(st.integers(-9, 9), min_size=size, max_size=size)))
    if draw(st.booleans()):
        gv = gv[::-1]
    mask = draw(st.lists(st.booleans(), min_size=size, max_size=size))
    if not any(mask):
        mask[0] = True
    event = [a for a, m in zip(atoms, mask) if m]
    return atoms, probs, dict(zip(atoms, fv)), dict(zip(atoms, gv)), event


@settings(max_examples=80, deadline=None)
@given(monotone_case())
def test_association_property(case):
    atoms, probs, f, g, event = case
    r = dg.association_inequality(atoms, probs, f.__getitem__, g.__getitem__, event)
    assert r.holds


def test_pathlaw_identity_passes(mixed_poisson):
    r = dg.pathlaw_equivalence(mixed_poisson, identity_tilt(mixed_poisson), 3.0, n=5_000, seed=1, n_perm=99)
    assert r.passed and r.ess == pytest.approx(5_000)


def test_pathlaw_weight_degeneracy_is_inconclusive():
    pr = presets.example2()
    with pytest.raises(InconclusiveError):
        dg.pathlaw_equivalence(pr.model, pr.tilt, 5.0, n=500, seed=1, n_perm=19, min_ess=10_000)
