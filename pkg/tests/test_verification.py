import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechlearn.distributions import Uniform
from mechlearn.exceptions import EndpointMismatch
from mechlearn.first_best import efficient_value
from mechlearn.mechanisms import (
    MonotoneThresholdMechanism,
    ThresholdPiece,
    designer_value,
    efficient_mechanism,
    exclusion_mechanism,
    mechanism_utility,
)
from mechlearn.verification import (
    check_epic,
    check_feasibility,
    convex_dominates,
    convex_order_vs_majorization,
    majorizes,
    mc_value,
)

from oracles import subdiagonal_pooled_mass


def test_optimum_is_feasible(uniform_opt):
    rep = check_feasibility(uniform_opt.mechanism)
    assert rep.passed
    assert rep.ic_min_margin >= -1e-6 and rep.ir_min >= -1e-6 and rep.monotone_x_min_slack >= -1e-6
    assert rep.envelope_residual <= 1e-5


def test_always_allocate_fails_participation():
    always = MonotoneThresholdMechanism((ThresholdPiece.pooled(0, 1, 1.0, 0.0),), 2, Uniform())
    rep = check_feasibility(always)
    assert rep.ir_min == pytest.approx(-1.0)
    assert not rep.passed


def test_efficient_is_feasible():
    mech = efficient_mechanism(Uniform(), 2)
    rep = check_feasibility(mech)
    assert rep.passed
    u = mechanism_utility(mech)
    assert np.max(np.abs(u.values - u.grid**2)) < 1e-3


def test_misreport_incentive_detected():
    # Excluded types just below 1/2 gain by claiming to be pooled.
    bad = MonotoneThresholdMechanism(
        (ThresholdPiece.exclude(0, 0.5), ThresholdPiece.pooled(0.5, 1, 1.0, 1 / 3)), 2, Uniform()
    )
    rep = check_feasibility(bad)
    assert rep.ic_min_margin < -0.01
    assert not rep.passed


def test_epic(uniform_opt):
    d = Uniform()
    assert check_epic(efficient_mechanism(d, 2)) == 0.0
    assert check_epic(exclusion_mechanism(d, 2)) == 0.0
    mass = check_epic(uniform_opt.mechanism)
    sub = subdiagonal_pooled_mass(d, uniform_opt.s_min, uniform_opt.s_max, uniform_opt.tau)
    assert sub >= 0.01
    assert mass >= sub - 1e-9


def test_mc_matches_designer_value(uniform_opt):
    for mech in (uniform_opt.mechanism, efficient_mechanism(Uniform(), 2)):
        est = mc_value(mech, 1_000_000, seed=7)
        assert abs(est.mean - designer_value(mech)) <= 4 * est.se
    assert abs(mc_value(efficient_mechanism(Uniform(), 2), 10**6, 3).mean - efficient_value(Uniform(), 2)) < 0.003
    assert mc_value(exclusion_mechanism(Uniform(), 2), 10_000).mean == 0.0


def test_mc_reproducible(uniform_opt, monkeypatch):
    a = mc_value(uniform_opt.mechanism, 20_000, seed=3, workers=2)
    b = mc_value(uniform_opt.mechanism, 20_000, seed=3, workers=2)
    assert a == b
    monkeypatch.setenv("MECHLEARN_THREADS", "3")
    assert mc_value(uniform_opt.mechanism, 20_000, seed=3).workers == 3
    with pytest.raises(ValueError):
        mc_value(uniform_opt.mechanism, 100)


# -- convex order -----------------------------------------------------------------


def _random_pair(rng, k=30):
    x = np.sort(rng.uniform(0, 1, k))
    x[0], x[-1] = 0.0, 1.0
    mu = rng.normal(size=k)
    nu = rng.normal(size=k)
    nu += (mu.sum() - nu.sum()) / k
    return x, np.cumsum(mu), np.cumsum(nu)


def test_identical_measures():
    x = np.linspace(0, 1, 11)
    h = np.cumsum(np.ones(11))
    assert convex_order_vs_majorization(x, h, h) == (True, True)


def test_random_instances_agree():
    rng = np.random.default_rng(0)
    verdicts = []
    for _ in range(100):
        x, h, g = _random_pair(rng)
        pair = convex_order_vs_majorization(x, h, g)
        assert pair[0] == pair[1]
        verdicts.append(pair[0])
    # Also exercise the positive branch.
    for _ in range(20):
        x, h, _ = _random_pair(rng)
        assert convex_order_vs_majorization(x, h, h) == (True, True)


def test_mean_preserving_contraction():
    x = np.linspace(0, 1, 21)
    spread = np.zeros(21)
    spread[[0, 20]] = 0.5
    contracted = np.zeros(21)
    contracted[10] = 1.0
    h, g = np.cumsum(spread), np.cumsum(contracted)
    assert convex_order_vs_majorization(x, h, g) == (True, True)
    assert convex_order_vs_majorization(x, g, h) == (False, False)


def test_endpoint_mismatch():
    x = np.linspace(0, 1, 5)
    with pytest.raises(EndpointMismatch):
        majorizes(x, np.ones(5), np.zeros(5))


@settings(max_examples=200, deadline=None)
@given(
    mu=st.lists(st.floats(-3, 3), min_size=3, max_size=15),
    scale=st.floats(0.0, 1.0),
    seed=st.integers(0, 2**32 - 1),
)
def test_lemma_holds_for_arbitrary_pairs(mu, scale, seed):
    mu = np.array(mu)
    k = len(mu)
    rng = np.random.default_rng(seed)
    x = np.sort(rng.choice(np.linspace(0, 1, 1000), k, replace=False))
    nu = scale * rng.normal(size=k) + (1 - scale) * mu
    nu += (mu.sum() - nu.sum()) / k
    h, g = np.cumsum(mu), np.cumsum(nu)
    assert majorizes(x, h, g, 1e-9) == convex_dominates(x, h, g, 1e-9)
