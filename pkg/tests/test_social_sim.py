import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechlearn.distributions import Uniform
from mechlearn.exceptions import ConfigError, UnsupportedNetwork
from mechlearn.first_best import efficient_envelope
from mechlearn.mechanisms import exclusion_mechanism, extract_mechanism
from mechlearn.optimizer import objective_weights, solve_reduced
from mechlearn.social_sim import (
    BinarySignalModel,
    QueueNetwork,
    cascade_condition,
    compare_concealment,
    custom_strategies,
    queue_threshold_mechanism,
    simulate_queue,
)


@pytest.fixture(scope="module")
def reject_model():
    return BinarySignalModel(0.2, 0.7)


@pytest.fixture(scope="module")
def reject_runs(reject_model):
    return {kind: simulate_queue(QueueNetwork(10, kind), reject_model, 1_000_000, seed=11) for kind in ("full", "empty")}


def test_signal_model():
    m = BinarySignalModel(0.2, 0.7)
    assert m.p_high == pytest.approx(0.6)
    assert 0.5 * (m.p_high_given(1) + m.p_high_given(-1)) == pytest.approx(m.p_high)
    with pytest.raises(ConfigError):
        BinarySignalModel(0.6, 0.7)


@pytest.mark.parametrize("l, h, verdict", [(0.2, 0.7, "reject"), (0.25, 0.8, "accept"), (0.25, 0.75, "accept")])
def test_cascade_condition(l, h, verdict):
    assert cascade_condition(BinarySignalModel(l, h)) == verdict


def test_full_network_rejection_cascade(reject_runs, reject_model):
    full = reject_runs["full"]
    assert full.follow_first_reject == 1.0
    assert full.cascade_consistent
    assert np.all(full.acceptance_rate[1:] <= reject_model.p_high + 3 * full.se[1:])


def test_empty_network_is_independent(reject_runs):
    empty = reject_runs["empty"]
    assert np.all(np.abs(empty.acceptance_rate - 0.6) <= 3 * empty.se)
    assert empty.cascade_frequency == 0.0


def test_concealment_verdicts(reject_runs, reject_model):
    assert reject_runs["full"].mean_acceptance < reject_runs["empty"].mean_acceptance
    assert compare_concealment(reject_runs["full"], reject_runs["empty"], reject_model) == "RejectCascadeDominatedByConcealment"
    model = BinarySignalModel(0.3, 0.8)
    full = simulate_queue(QueueNetwork(10, "full"), model, 200_000, seed=2)
    empty = simulate_queue(QueueNetwork(10, "empty"), model, 200_000, seed=2)
    assert compare_concealment(full, empty, model) == "AcceptCascadeDominatesConcealment"


def test_reproducible(reject_model):
    a = simulate_queue(QueueNetwork(5), reject_model, 30_000, seed=4, chunk=7_000)
    b = simulate_queue(QueueNetwork(5), reject_model, 30_000, seed=4, chunk=7_000)
    np.testing.assert_array_equal(a.acceptance_rate, b.acceptance_rate)


@settings(max_examples=15, deadline=None)
@given(l=st.floats(0.05, 0.45), h=st.floats(0.55, 0.95), n=st.integers(1, 7))
def test_custom_full_network_matches_recursion(l, h, n):
    model = BinarySignalModel(l, h)
    observe = [list(range(i)) for i in range(n)]
    custom = simulate_queue(QueueNetwork(n, "custom", tuple(map(tuple, observe))), model, 4_000, seed=1)
    full = simulate_queue(QueueNetwork(n, "full"), model, 4_000, seed=1)
    np.testing.assert_array_equal(custom.acceptance_rate, full.acceptance_rate)


def test_custom_empty_network_follows_signal():
    model = BinarySignalModel(0.2, 0.7)
    tables = custom_strategies(model, QueueNetwork(3, "custom", ((), (), ())))
    for t in tables:
        assert t[((), True)] and not t[((), False)]


def test_network_config():
    net = QueueNetwork.from_config({"n": 3, "observe": [[], [0], [0, 1]]})
    assert net.kind == "custom" and net.observed(2) == (0, 1)
    with pytest.raises(ConfigError):
        QueueNetwork.from_config({"n": 2, "observe": [[], [1]]})
    with pytest.raises(ConfigError):
        QueueNetwork.from_config({"observe": "full"})
    with pytest.raises(UnsupportedNetwork):
        custom_strategies(BinarySignalModel(0.2, 0.7), QueueNetwork(13, "custom", tuple(() for _ in range(13))))


def test_queue_threshold_mechanism():
    d = Uniform()
    w = objective_weights(d, 401)
    mechs = []
    for n in (1, 2, 3):
        b = efficient_envelope(d, n, 401)
        mechs.append(extract_mechanism(solve_reduced(w, b), b, d, n))
    values = queue_threshold_mechanism(mechs)
    assert values[0] == pytest.approx(0.5, abs=1e-9)
    lp3 = solve_reduced(objective_weights(d), efficient_envelope(d, 3)).lp_stats["objective"]
    assert values[2] == pytest.approx(lp3, abs=2e-3)
    assert values[0] <= values[1] <= values[2]
    assert queue_threshold_mechanism([exclusion_mechanism(d, i) for i in (1, 2)]) == [0.0, 0.0]
    with pytest.raises(ConfigError):
        queue_threshold_mechanism([mechs[1]])
