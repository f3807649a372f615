from itertools import combinations

import numpy as np
import pytest

from rewinding.models.chain import POMarkovChain
from rewinding.models.partition import Partition
from rewinding.services.partition import (
    bell_number,
    best_separating_collection,
    class_masses,
    dtv_matrix,
    dtv_partition,
    format_partition,
    iter_refinements,
    iter_set_partitions,
    pair_test,
    pair_test_sample_count,
    parse_partition,
    refine_by_components,
    refines,
    source_partition,
    theta,
)
from rewinding.services.plan import edge_weight
from rewinding.utils.errors import ChainFormatError, NonCanonicalChainError, NotTestableError


def test_source_partition(intro_chain):
    p = source_partition(intro_chain)
    assert p.size == 2
    assert format_partition(intro_chain, p) == "[a b b' a'][s]"


def test_source_partition_requires_canonical(three_state_chain):
    with pytest.raises(NonCanonicalChainError):
        source_partition(three_state_chain)


def test_canonical_labels_order():
    assert Partition((3, 3, 1, 0)).class_of == (0, 0, 1, 2)
    assert Partition((2, 0)) == Partition((0, 1))


def test_refines():
    fine = Partition((0, 1, 2, 2))
    coarse = Partition((0, 0, 1, 1))
    assert refines(fine, coarse)
    assert not refines(coarse, fine)
    assert refines(coarse, Partition.trivial(4))
    assert refines(Partition.discrete(4), coarse)


def test_dtv_partition_intro(intro_chain):
    p = source_partition(intro_chain)
    a, b = intro_chain.index("a"), intro_chain.index("b")
    # a уходит в s с вероятностью 0, b с вероятностью 1
    assert dtv_partition(intro_chain, a, b, p) == pytest.approx(1.0)
    assert dtv_partition(intro_chain, a, intro_chain.index("a'"), p) == 0.0


def test_dtv_matrix_is_symmetric_and_bounded(random_chains):
    for chain in random_chains[:10]:
        p = source_partition(chain)
        matrix = dtv_matrix(chain, p)
        assert np.allclose(matrix, matrix.T)
        assert np.all(np.diag(matrix) == 0.0)
        assert matrix.min() >= 0.0 and matrix.max() <= 1.0 + 1e-12


def test_theta_of_discrete_partition_is_zero(intro_chain):
    assert theta(intro_chain, Partition.discrete(intro_chain.n)) == 0.0
    assert theta(intro_chain, source_partition(intro_chain)) == pytest.approx(1.0)


def _same_class_pairs(p: Partition):
    for members in p.classes:
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                yield a, b


@pytest.mark.slow
def test_refine_by_components_properties():
    from rewinding.services.chain import random_chain

    rng = np.random.default_rng(77)
    checked = 0
    for _ in range(1000):
        chain = random_chain(int(rng.integers(3, 7)), rng)
        p = source_partition(chain)
        for a, b in _same_class_pairs(p):
            D = dtv_partition(chain, a, b, p)
            if D <= 0.0:
                continue
            refined = refine_by_components(chain, p, a, b)
            assert refines(refined, p)
            assert refined.separates(a, b)
            threshold = D / (chain.n - 1)
            for x, y in _same_class_pairs(p):
                if refined.separates(x, y):
                    assert dtv_partition(chain, x, y, p) >= threshold - 1e-12
            assert edge_weight(chain, p, refined) <= ((chain.n - 1) / D) ** 2 * (1 + 1e-9)
            checked += 1
            break
    assert checked > 500


def test_refine_rejects_bad_pairs(intro_chain):
    p = source_partition(intro_chain)
    a, a_prime, s = intro_chain.index("a"), intro_chain.index("a'"), intro_chain.index("s")
    with pytest.raises(ValueError):
        refine_by_components(intro_chain, p, a, s)
    with pytest.raises(NotTestableError):
        refine_by_components(intro_chain, p, a, a_prime)


def test_refine_intro_separates(intro_chain):
    p = source_partition(intro_chain)
    a, b = intro_chain.index("a"), intro_chain.index("b")
    refined = refine_by_components(intro_chain, p, a, b)
    assert format_partition(intro_chain, refined) == "[a a'][b][s][b']"


def test_bell_numbers():
    assert [bell_number(m) for m in range(8)] == [1, 1, 2, 5, 15, 52, 203, 877]
    for m in range(6):
        assert sum(1 for _ in iter_set_partitions(range(m))) == bell_number(m)


def test_iter_refinements_counts():
    p = Partition((0, 0, 0, 1, 1))
    refinements = list(iter_refinements(p))
    assert len(refinements) == bell_number(3) * bell_number(2)
    assert len(set(refinements)) == len(refinements)
    assert all(refines(r, p) for r in refinements)


def test_parse_and_format(intro_chain):
    p = parse_partition(intro_chain, "[a a'][b b'] [s]")
    assert p.size == 3
    assert format_partition(intro_chain, p) == "[a a'][b b'][s]"


@pytest.mark.parametrize("text", ["a b", "[a b][s]", "[a a' b b' s][a]", "[a a'][b b'][s] x", "[q][a a' b b' s]"])
def test_parse_rejects_bad_literals(intro_chain, text):
    with pytest.raises(ChainFormatError):
        parse_partition(intro_chain, text)


def test_pair_test_sample_count():
    assert pair_test_sample_count(1.0, 0.1) == 5
    assert pair_test_sample_count(0.5, 0.1) == 19


def test_pair_test_decides(intro_chain, rng):
    p = source_partition(intro_chain)
    a, b = intro_chain.index("a"), intro_chain.index("b")
    sink_class = p[intro_chain.index("s")]
    other = 1 - sink_class
    assert pair_test(intro_chain, p, a, b, lambda m: np.full(m, other), 0.01) == a
    assert pair_test(intro_chain, p, a, b, lambda m: np.full(m, sink_class), 0.01) == b


def test_pair_test_not_testable(intro_chain):
    p = source_partition(intro_chain)
    a, a_prime = intro_chain.index("a"), intro_chain.index("a'")
    with pytest.raises(NotTestableError):
        pair_test(intro_chain, p, a, a_prime, lambda m: np.zeros(m, dtype=int), 0.1)


def _check_metric_and_monotonicity(chain) -> None:
    p0 = source_partition(chain)
    base = dtv_matrix(chain, p0)
    finest = dtv_matrix(chain, Partition.discrete(chain.n))
    n = chain.n
    # d(x, z) <= d(x, y) + d(y, z)
    assert np.all(base[:, None, :] <= base[:, :, None] + base[None, :, :] + 1e-12)
    for p in iter_refinements(p0):
        matrix = dtv_matrix(chain, p)
        assert np.all(matrix >= base - 1e-12)
        assert np.all(finest >= matrix - 1e-12)
    assert base.shape == (n, n)


def test_metric_suite_on_builders(intro_chain, example1_chain, gap_chain):
    for chain in (intro_chain, example1_chain, gap_chain):
        _check_metric_and_monotonicity(chain)


@pytest.mark.slow
def test_metric_suite_on_random_chains():
    from rewinding.services.chain import random_chain

    rng = np.random.default_rng(101)
    for _ in range(1000):
        _check_metric_and_monotonicity(random_chain(int(rng.integers(3, 7)), rng))


def _tie_chain() -> POMarkovChain:
    # для пары (x, y) классы {x} и {s} дают равные массы
    P = np.array(
        [
            [0.2, 0.3, 0.1, 0.4],
            [0.2, 0.1, 0.3, 0.4],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return POMarkovChain(name="ties", states=("x", "y", "z", "s"), transition=P, observation=[0, 0, 0, 1], sink=3)


def _brute_force_separation(chain, a, b, p):
    masses = class_masses(chain, p)
    difference = masses[b] - masses[a]
    best, maximizers = -np.inf, []
    for r in range(p.size + 1):
        for collection in combinations(range(p.size), r):
            value = float(difference[list(collection)].sum())
            if value > best + 1e-12:
                best, maximizers = value, [frozenset(collection)]
            elif abs(value - best) <= 1e-12:
                maximizers.append(frozenset(collection))
    return best, maximizers


def test_best_separating_collection_with_ties():
    chain = _tie_chain()
    p = Partition.discrete(chain.n)
    x, y, z = chain.index("x"), chain.index("y"), chain.index("z")
    best, maximizers = _brute_force_separation(chain, x, y, p)
    collection = best_separating_collection(chain, x, y, p)
    # равные массы не включаются: из четырех максимизаторов выбирается наименьший
    assert collection == frozenset({p[z]})
    assert len(maximizers) == 4
    assert collection in maximizers and all(collection <= m for m in maximizers)
    assert best == pytest.approx(dtv_partition(chain, x, y, p))
    assert best_separating_collection(chain, y, x, p) == frozenset({p[y]})
    assert best_separating_collection(chain, x, x, p) == frozenset()


def test_best_separating_collection_example1(example1_chain):
    p = source_partition(example1_chain)
    a, b = example1_chain.index("a"), example1_chain.index("b")
    assert best_separating_collection(example1_chain, a, b, p) == frozenset({p[example1_chain.index("s")]})
    assert dtv_partition(example1_chain, a, b, p) == pytest.approx(1 / 8)


def test_best_separating_collection_matches_brute_force(random_chains):
    for chain in random_chains[:20]:
        for p in list(iter_refinements(source_partition(chain)))[:5]:
            for a, b in combinations(range(chain.n), 2):
                best, maximizers = _brute_force_separation(chain, a, b, p)
                collection = best_separating_collection(chain, a, b, p)
                masses = class_masses(chain, p)
                value = float((masses[b] - masses[a])[sorted(collection)].sum())
                assert value == pytest.approx(best, abs=1e-12)
                assert value == pytest.approx(dtv_partition(chain, a, b, p), abs=1e-12)


def _child_sampler(chain, p, hidden, rng):
    masses = class_masses(chain, p)[hidden]

    def sample(m):
        return rng.choice(p.size, size=m, p=masses)

    return sample


@pytest.mark.slow
@pytest.mark.parametrize("hidden_label", ["a", "b"])
def test_pair_test_error_rate(example1_chain, hidden_label):
    p = source_partition(example1_chain)
    a, b = example1_chain.index("a"), example1_chain.index("b")
    hidden = example1_chain.index(hidden_label)
    epsilon, trials = 0.05, 10_000
    assert pair_test_sample_count(dtv_partition(example1_chain, a, b, p), epsilon) == 384
    rng = np.random.default_rng(2718)
    sampler = _child_sampler(example1_chain, p, hidden, rng)
    errors = sum(pair_test(example1_chain, p, a, b, sampler, epsilon) != hidden for _ in range(trials))
    rate = errors / trials
    standard_error = np.sqrt(epsilon * (1 - epsilon) / trials)
    assert rate <= epsilon + 3 * standard_error
