import numpy as np
import pytest

from rewinding.services.chain import build_gap_chain
from rewinding.services.gap import (
    GapAdaptiveStrategy,
    adaptive_gap_identify,
    d_test,
    decision_threshold,
    decoupling_bound,
    decoupling_probability_exact,
    decoupling_probability_mc,
    default_max_len,
    expected_path_length,
    filtered_path,
    gap_parameters,
    split_probability_exact,
)
from rewinding.services.simulate import QuerySession
from rewinding.utils.errors import InvalidParameterError, NonCanonicalChainError, PathAbortedError
from rewinding.utils.rng import trial_seed


def test_gap_parameters(gap_chain, intro_chain):
    assert gap_parameters(gap_chain) == (5, 4)
    assert gap_parameters(build_gap_chain(6, 8)) == (6, 8)
    with pytest.raises(NonCanonicalChainError):
        gap_parameters(intro_chain)


@pytest.mark.parametrize("n, d, i", [(5, 4, 1), (5, 4, 3), (6, 8, 2), (8, 3, 1)])
def test_moments_match_absorbing_solve(n, d, i):
    moments = expected_path_length(n, d, i)
    assert moments.mean == (n - 1 - i) * d
    assert moments.solved_mean == pytest.approx(moments.mean, rel=1e-9)
    assert moments.solved_variance == pytest.approx(moments.variance, rel=1e-9)
    assert moments.halved_mean == moments.mean / 2


def test_moments_reject_bad_start():
    with pytest.raises(InvalidParameterError):
        expected_path_length(5, 4, 0)
    with pytest.raises(InvalidParameterError):
        expected_path_length(5, 4, 4)


def test_decision_threshold():
    e1, e2, threshold = decision_threshold(6, 8)
    assert (e1, e2) == (32, 24)
    assert threshold == 28


def test_d_test_on_sink_raises(gap_chain, rng):
    session = QuerySession(gap_chain, gap_chain.index("s"), rng)
    with pytest.raises(ValueError):
        d_test(session, 0)


def test_d_test_flags_dummy_state(gap_chain, rng):
    session = QuerySession(gap_chain, gap_chain.index("D"), rng)
    assert d_test(session, 0, t_children=4)
    assert session.queries == 4


def test_filtered_path_reaches_sink(gap_chain, rng):
    session = QuerySession(gap_chain, gap_chain.index("q3"), rng)
    length = filtered_path(session, 0, default_max_len(5, 4))
    assert length >= 1
    assert any(session.is_sink(t) for t in range(session.tree.size))


def test_filtered_path_aborts(gap_chain, rng):
    session = QuerySession(gap_chain, gap_chain.index("q1"), rng)
    with pytest.raises(PathAbortedError):
        filtered_path(session, 0, max_len=1)


def test_zero_paths_abstain(gap_chain):
    stats = adaptive_gap_identify(gap_chain, gap_chain.index("q1"), k_paths=0, seed=1)
    assert stats.verdict is None
    assert stats.total_queries == 0


def test_aborted_run_abstains(gap_chain):
    stats = adaptive_gap_identify(gap_chain, gap_chain.index("q1"), k_paths=5, seed=1, max_len=1)
    assert stats.aborted
    assert stats.verdict is None


def test_hidden_must_be_q1_or_q2(gap_chain):
    with pytest.raises(InvalidParameterError):
        adaptive_gap_identify(gap_chain, gap_chain.index("q3"), k_paths=1)


def test_strategy_requires_gap_chain(intro_chain):
    with pytest.raises(NonCanonicalChainError):
        GapAdaptiveStrategy(intro_chain, 10)


def test_same_seed_same_run(gap_chain):
    first = adaptive_gap_identify(gap_chain, gap_chain.index("q2"), k_paths=20, seed=trial_seed(3, 0))
    second = adaptive_gap_identify(gap_chain, gap_chain.index("q2"), k_paths=20, seed=trial_seed(3, 0))
    assert first == second


def test_decoupling_bound_edges():
    with pytest.raises(InvalidParameterError):
        decoupling_bound(5, 2, 0)
    assert decoupling_bound(8, 2, 4) == 0.0
    assert decoupling_bound(5, 2, 4) == pytest.approx(0.5**4 * 4 / 8)
    # биномиальный множитель обрезается единицей
    assert decoupling_bound(4, 2, 16) == pytest.approx(0.5**16)


@pytest.mark.parametrize("d", [2, 4])
@pytest.mark.parametrize("k", [4, 8, 16])
def test_exact_probability_below_bound(d, k):
    assert decoupling_probability_exact(5, d, k) <= decoupling_bound(5, d, k) + 1e-15


def test_monte_carlo_matches_exact():
    estimate = decoupling_probability_mc(5, 2, 8, trials=100_000, seed=4)
    exact = decoupling_probability_exact(5, 2, 8)
    assert abs(estimate.covered.estimate - exact) <= 4 * max(estimate.covered.standard_error, 1e-4)
    split = split_probability_exact(5, 2, 8)
    assert abs(estimate.split.estimate - split) <= 4 * max(estimate.split.standard_error, 1e-4)
    assert estimate.trials == 100_000


def test_split_probability_small_case():
    # n=5: из q2 до стока два продвижения (по 1/4), остаться на месте - тоже 1/4
    expected = 1 / 16 + 2 / 64 + 3 / 256
    assert split_probability_exact(5, 2, 4) == pytest.approx(expected)
    assert split_probability_exact(5, 2, 1) == 0.0
    # n=4: одно продвижение из q2 сразу ведет в сток
    assert split_probability_exact(4, 2, 2) == pytest.approx(1 / 4 + 1 / 16)


def test_walks_split_beyond_bound():
    # расхождение блужданий бывает чаще, чем допускает граница, а событие границы - нет
    estimate = decoupling_probability_mc(5, 2, 4, trials=200_000, seed=11)
    bound = decoupling_bound(5, 2, 4)
    assert abs(estimate.split.estimate - split_probability_exact(5, 2, 4)) <= 4 * estimate.split.standard_error
    assert abs(estimate.covered.estimate - decoupling_probability_exact(5, 2, 4)) <= 4 * estimate.covered.standard_error
    assert estimate.split.estimate > bound + 3 * estimate.split.standard_error
    assert estimate.covered.estimate <= bound + 3 * estimate.covered.standard_error


def test_walks_never_split_without_enough_steps():
    estimate = decoupling_probability_mc(6, 2, 2, trials=10_000, seed=2)
    assert estimate.split.estimate == 0.0
    assert estimate.covered.estimate == 0.0


def test_monte_carlo_rejects_zero_trials():
    with pytest.raises(InvalidParameterError):
        decoupling_probability_mc(5, 2, 8, trials=0)


@pytest.mark.slow
def test_adaptive_gap_acceptance():
    n, d = 6, 8
    chain = build_gap_chain(n, d)
    q1, q2 = chain.index("q1"), chain.index("q2")
    trials = 100
    correct = within = 0
    for i in range(trials):
        hidden = (q1, q2)[i % 2]
        stats = adaptive_gap_identify(chain, hidden, k_paths=100 * n, seed=trial_seed(2024, i))
        correct += stats.verdict == chain.states[hidden]
        within += stats.total_queries <= 5000 * n * n * d
    assert correct / trials >= 2 / 3
    assert within / trials >= 0.95
    assert np.isfinite(decision_threshold(n, d)[2])
