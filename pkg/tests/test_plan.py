import math
from itertools import combinations

import numpy as np
import pytest

from rewinding.models.chain import POMarkovChain
from rewinding.models.tree import QueryTree
from rewinding.services.chain import build_gap_chain, random_chain
from rewinding.services.partition import iter_refinements, refines, source_partition
from rewinding.services.plan import (
    build_partition_graph,
    certify_path_bound,
    classify_observations,
    classify_tree,
    edge_weight,
    identify,
    plan_degrees,
    plan_epsilon,
    plan_identification,
    plan_log_epsilon,
    shortest_costs,
)
from rewinding.services.simulate import run_plan
from rewinding.utils.errors import EnumerationCapError, IndistinguishableError, InvalidParameterError
from rewinding.utils.rng import trial_seed


def _twin_chain() -> POMarkovChain:
    # x и y совпадают с точностью до перестановки меток
    P = np.array([[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]])
    return POMarkovChain(name="twins", states=("x", "y", "s"), transition=P, observation=[0, 0, 1], sink=2)


def test_graph_sizes(example1_chain, gap_chain):
    assert build_partition_graph(random_chain(3, np.random.default_rng(1))).graph.number_of_nodes() == 2
    assert build_partition_graph(example1_chain).graph.number_of_nodes() == 15
    assert build_partition_graph(gap_chain).graph.number_of_nodes() == 15


def test_graph_cap(example1_chain):
    with pytest.raises(EnumerationCapError):
        build_partition_graph(example1_chain, cap=3)


def test_edges_match_pairwise_rederivation(gap_chain):
    graph = build_partition_graph(gap_chain)
    for p1 in graph.nodes:
        for p2 in iter_refinements(p1):
            if p2 == p1:
                continue
            weight = edge_weight(gap_chain, p1, p2)
            assert graph.graph.has_edge(p1, p2) == math.isfinite(weight)
            if math.isfinite(weight):
                assert weight >= 1.0
                assert graph.weight(p1, p2) == pytest.approx(weight)


def test_edge_weight_requires_refinement(intro_chain):
    p0 = source_partition(intro_chain)
    with pytest.raises(ValueError):
        edge_weight(intro_chain, p0, p0)


def test_source_cost_is_one(example1_chain):
    graph = build_partition_graph(example1_chain)
    costs = shortest_costs(graph)
    assert costs[graph.source].cost == 1.0
    assert costs[graph.source].predecessor is None


def test_discrete_cost_matches_brute_force(example1_chain):
    graph = build_partition_graph(example1_chain)
    costs = shortest_costs(graph)
    discrete = max(graph.nodes, key=lambda p: p.size)
    best = math.inf

    def walk(node, product):
        nonlocal best
        if node == discrete:
            best = min(best, product)
            return
        for _, target, data in graph.graph.out_edges(node, data=True):
            walk(target, product * data["weight"])

    walk(graph.source, 1.0)
    assert costs[discrete].cost == pytest.approx(best, rel=1e-9)


def test_intro_plan(intro_chain):
    a, a_prime = intro_chain.index("a"), intro_chain.index("a'")
    plan = plan_identification(intro_chain, a, a_prime)
    assert plan.k == 2
    assert plan.weights == pytest.approx((4.0, 1.0))
    assert plan.degrees == (2270, 568)
    assert plan.total_queries == 2270 + 2270 * 568
    assert plan.path[-1].separates(a, a_prime)
    for p1, p2 in zip(plan.path, plan.path[1:]):
        assert refines(p2, p1) and p1 != p2


def test_plan_invariants(example1_chain):
    a, a_prime = example1_chain.index("a"), example1_chain.index("a'")
    plan = plan_identification(example1_chain, a, a_prime)
    assert 1 <= plan.k <= 3
    assert plan.epsilon == pytest.approx(plan_epsilon(example1_chain.n, plan.k, plan.cost))
    assert plan.log_epsilon == pytest.approx(math.log(plan.epsilon))
    assert list(plan.degrees) == plan_degrees(example1_chain.n, plan.log_epsilon, list(plan.weights))
    assert plan.parent_array.size == plan.total_queries + 1
    # размер дерева ограничен полиномом от n, c и log(1/eps)
    bound = math.prod(2 * example1_chain.n**2 * math.log(1 / plan.epsilon) * w + 1 for w in plan.weights)
    assert plan.total_queries <= plan.k * bound


def test_prim_is_never_cheaper(example1_chain):
    a, a_prime = example1_chain.index("a"), example1_chain.index("a'")
    dijkstra = plan_identification(example1_chain, a, a_prime)
    prim = plan_identification(example1_chain, a, a_prime, method="prim")
    assert prim.method == "prim"
    assert prim.cost >= dijkstra.cost * (1 - 1e-9)
    assert prim.path[-1].separates(a, a_prime)


def test_unknown_method(intro_chain):
    with pytest.raises(InvalidParameterError):
        plan_identification(intro_chain, 0, 4, method="bfs")


def test_indistinguishable_pairs(intro_chain):
    s = intro_chain.index("s")
    with pytest.raises(IndistinguishableError):
        plan_identification(intro_chain, s, s)
    with pytest.raises(IndistinguishableError):
        plan_identification(_twin_chain(), 0, 1)


def test_zero_height_plan(intro_chain):
    a, s = intro_chain.index("a"), intro_chain.index("s")
    plan = plan_identification(intro_chain, a, s)
    assert plan.k == 0 and plan.total_queries == 0
    for hidden in (a, s):
        assert identify(intro_chain, a, s, hidden, 3, plan) == hidden


def test_classify_checks_shape(intro_chain):
    a, s = intro_chain.index("a"), intro_chain.index("s")
    plan = plan_identification(intro_chain, a, s)
    with pytest.raises(ValueError):
        classify_tree(intro_chain, plan, QueryTree.from_arrays([-1, 0], [a, a], [0, 0]))
    with pytest.raises(ValueError):
        classify_observations(plan, np.zeros(3, dtype=int))


def test_classify_all_sink_children_terminates(gap_chain):
    q1, q2 = gap_chain.index("q1"), gap_chain.index("q2")
    plan = plan_identification(gap_chain, q1, q2)
    observation = np.ones(plan.total_queries + 1, dtype=np.int64)
    observation[0] = 0
    assert classify_observations(plan, observation) >= -1


def test_planned_tree_classification(example1_chain):
    a, a_prime = example1_chain.index("a"), example1_chain.index("a'")
    plan = plan_identification(example1_chain, a, a_prime)
    if plan.total_queries > 200_000:
        pytest.skip("дерево слишком велико для явного построения")
    tree, verdict = run_plan(example1_chain, a, plan.nonadaptive_plan, 7)
    assert tree.queries == plan.total_queries
    assert plan.verdict_for_class(classify_tree(example1_chain, plan, tree)) == verdict


def test_identify_rejects_foreign_hidden(intro_chain):
    with pytest.raises(InvalidParameterError):
        identify(intro_chain, 0, 4, intro_chain.index("s"), 1)


@pytest.mark.slow
@pytest.mark.parametrize(
    "chain_name, pair",
    [("intro", ("a", "a'")), ("example1", ("a", "a'")), ("gap", ("q1", "q2"))],
)
def test_identify_success(chain_name, pair, intro_chain, example1_chain):
    chain = {"intro": intro_chain, "example1": example1_chain, "gap": build_gap_chain(5, 4)}[chain_name]
    a, b = chain.index(pair[0]), chain.index(pair[1])
    plan = plan_identification(chain, a, b)
    trials = 150
    correct = 0
    for i in range(trials):
        hidden = (a, b)[i % 2]
        correct += identify(chain, a, b, hidden, trial_seed(99, i), plan) == hidden
    assert correct / trials >= 2 / 3


def test_certify_path_bound(intro_chain, gap_chain):
    a, a_prime = intro_chain.index("a"), intro_chain.index("a'")
    assert certify_path_bound(intro_chain, a, a, 10.0) is None
    with pytest.raises(InvalidParameterError):
        certify_path_bound(intro_chain, a, a_prime, 0.5)
    path = certify_path_bound(intro_chain, a, a_prime, 1e6)
    assert path is not None
    assert len(path) - 1 <= intro_chain.n - 2
    assert path[-1].separates(a, a_prime)


def test_certify_gap_pair_with_adaptive_budget(gap_chain):
    n, d = 5, 4
    q1, q2 = gap_chain.index("q1"), gap_chain.index("q2")
    # бюджет адаптивного различителя: k = 100n путей по 20nd вершин с проверками
    q_hat = 100 * n * 20 * n * d * 4
    path = certify_path_bound(gap_chain, q1, q2, q_hat)
    assert path is not None
    assert all(refines(p2, p1) for p1, p2 in zip(path, path[1:]))


def test_pairs_of_random_chains_have_plans():
    rng = np.random.default_rng(8)
    for _ in range(5):
        chain = random_chain(4, rng, sparsity=0.0)
        for a, b in combinations(range(chain.n - 1), 2):
            plan = plan_identification(chain, a, b)
            assert plan.path[-1].separates(a, b)


def _near_twin_chain(gap: float) -> POMarkovChain:
    # x и y различаются только переходом в сток с вероятностью gap
    P = np.array([[1.0, 0.0, gap], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return POMarkovChain(name="near-twins", states=("x", "y", "s"), transition=P, observation=[0, 0, 1], sink=2)


def test_plan_epsilon_survives_huge_costs():
    log_epsilon = plan_log_epsilon(10, 9, math.log(1e300))
    assert math.isfinite(log_epsilon) and log_epsilon < -700
    assert 0.0 <= plan_epsilon(10, 9, 1e300) < 1e-300
    assert plan_epsilon(3, 1, math.inf) == 0.0
    assert plan_epsilon(3, 1, 1.0) == pytest.approx(1 / (3 * 9 * math.log2(9)))


def test_plan_with_tiny_separation():
    chain = _near_twin_chain(2e-100)
    x, y = chain.index("x"), chain.index("y")
    plan = plan_identification(chain, x, y)
    assert plan.k == 1
    assert plan.weights[0] == pytest.approx(1e200, rel=1e-9)
    assert plan.log_epsilon == pytest.approx(plan_log_epsilon(3, 1, math.log(1e200)))
    assert plan.degrees[0] > 1e200


def test_plan_with_unrepresentable_degrees():
    chain = _near_twin_chain(2e-200)
    graph = build_partition_graph(chain)
    discrete = max(graph.nodes, key=lambda p: p.size)
    # вес 1e400 не помещается в float, но логарифм конечен и ребро остается в графе
    assert graph.weight(graph.source, discrete) == math.inf
    assert graph.graph[graph.source][discrete]["log_weight"] == pytest.approx(2 * math.log(1e200))
    assert shortest_costs(graph)[discrete].cost == math.inf
    with pytest.raises(EnumerationCapError):
        plan_identification(chain, chain.index("x"), chain.index("y"), graph=graph)
    with pytest.raises(EnumerationCapError):
        plan_degrees(3, -10.0, [math.inf])
