import math

import numpy as np
import pytest

from rewinding.models.tree import NonAdaptivePlan
from rewinding.services.gap import GapAdaptiveStrategy
from rewinding.services.simulate import estimate_success, run_adaptive, run_plan
from rewinding.services.strategies import (
    STRATEGY_NAMES,
    IntroChildrenStrategy,
    PathTestDecision,
    PlanStrategy,
    SinkFreeGroupDecision,
    build_strategy,
    example1_naive_plan,
    example1_parameter,
    example1_path_plan,
    intro_children_plan,
    passive_path_plan,
    resetting_plan,
)
from rewinding.utils.errors import InvalidParameterError, NonCanonicalChainError


def test_intro_strategy_never_errs_from_a(intro_chain):
    a, a_prime = intro_chain.index("a"), intro_chain.index("a'")
    strategy = IntroChildrenStrategy(a, a_prime, 7)
    for seed in range(50):
        tree, verdict = run_adaptive(intro_chain, a, strategy, None, seed)
        assert verdict == a
        assert tree.queries == 8


def test_intro_strategy_success(intro_chain):
    a, a_prime = intro_chain.index("a"), intro_chain.index("a'")
    strategy = IntroChildrenStrategy(a, a_prime, 7)
    estimate = estimate_success(
        intro_chain, lambda hidden, seed: run_adaptive(intro_chain, hidden, strategy, None, seed)[1], a, a_prime, 2000, 1
    )
    assert estimate.rate >= 0.97


def test_intro_plan_shape(intro_chain):
    plan = intro_children_plan(0, 4, 3)
    assert plan.parent.tolist() == [-1, 0, 1, 1, 1]
    assert plan.decision(np.array([0, 0, 1, 1, 1])) == 0
    assert plan.decision(np.array([0, 0, 0, 1, 1])) == 4
    with pytest.raises(InvalidParameterError):
        intro_children_plan(0, 4, 0)


def test_naive_plan_size():
    plan = example1_naive_plan(0, 2, 8)
    m = math.ceil(8 * math.log(8**3))
    assert m == 50
    assert plan.queries == m + m * m
    assert plan.parent[1:m + 1].tolist() == [0] * m
    assert plan.parent[m + 1:m + 1 + m].tolist() == [1] * m


def test_sink_free_group_decision():
    decision = SinkFreeGroupDecision(a=0, b=2, start=1, groups=2, group_size=2)
    assert decision(np.array([0, 1, 0, 0, 1])) == 0
    assert decision(np.array([0, 0, 0, 0, 1])) == 2


def test_path_plan_shape():
    d, repetitions = 4, 3
    plan = example1_path_plan(0, 2, d, repetitions=repetitions, test_factor=2)
    width = 2 * d + 2 * d
    assert plan.size == 1 + repetitions * width
    first_path = plan.parent[1:1 + 2 * d].tolist()
    assert first_path == [0] + list(range(1, 2 * d))
    assert plan.parent[1 + 2 * d:1 + width].tolist() == [2 * d] * (2 * d)


def test_path_test_decision():
    decision = PathTestDecision(a=0, b=2, path_length=2, test_children=2, repetitions=2)
    # первый блок отброшен (сток на пути), второй без стока среди тестов
    assert decision(np.array([0, 1, 0, 1, 1, 0, 0, 0, 0])) == 0
    assert decision(np.array([0, 1, 0, 1, 1, 0, 0, 0, 1])) == 2


def test_example1_plans_succeed(example1_chain):
    a, a_prime = example1_chain.index("a"), example1_chain.index("a'")
    for plan in (example1_naive_plan(a, a_prime, 8), example1_path_plan(a, a_prime, 8)):
        estimate = estimate_success(
            example1_chain, lambda hidden, seed, plan=plan: run_plan(example1_chain, hidden, plan, seed)[1], a, a_prime, 200, 3
        )
        assert estimate.rate >= 2 / 3


def test_example1_parameter(example1_chain, three_state_chain):
    assert example1_parameter(example1_chain) == 8
    with pytest.raises(InvalidParameterError):
        example1_parameter(three_state_chain)


def test_passive_and_resetting_plans():
    assert passive_path_plan(3).parent.tolist() == [-1, 0, 1, 2]
    assert passive_path_plan(0).size == 1
    assert resetting_plan(2, 2).parent.tolist() == [-1, 0, 1, 0, 3]
    with pytest.raises(InvalidParameterError):
        passive_path_plan(-1)


def test_plan_strategy_follows_plan_shape(intro_chain):
    plan = intro_children_plan(0, 4, 5)
    tree, verdict = run_adaptive(intro_chain, 0, PlanStrategy(plan), None, 9)
    assert tree.parent == plan.parent.tolist()
    assert verdict == plan.decision(np.asarray(tree.observation))


def test_registry(intro_chain, example1_chain, gap_chain):
    assert "gap-adaptive" in STRATEGY_NAMES
    assert isinstance(build_strategy("intro-children", intro_chain, 0, 4, D=3), IntroChildrenStrategy)
    plan = build_strategy("passive-path", intro_chain, 0, 4, T=3, d=None)
    assert isinstance(plan, NonAdaptivePlan) and plan.queries == 3
    naive = build_strategy("example1-naive", example1_chain, 0, 2)
    assert naive.queries == 50 + 50 * 50
    gap = build_strategy("gap-adaptive", gap_chain, 0, 1)
    assert isinstance(gap, GapAdaptiveStrategy) and gap.k_paths == 500


def test_registry_errors(intro_chain):
    with pytest.raises(InvalidParameterError):
        build_strategy("nonexistent", intro_chain, 0, 4)
    with pytest.raises(NonCanonicalChainError):
        build_strategy("gap-adaptive", intro_chain, 0, 4)
