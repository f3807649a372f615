"""Разбиения пространства состояний, TV относительно разбиения и парный тест."""
import math
import re
from functools import lru_cache
from itertools import product
from typing import Callable, Iterator, Sequence

import networkx as nx
import numpy as np

from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.partition import Partition
from rewinding.services.chain import is_canonical
from rewinding.utils.errors import ChainFormatError, NonCanonicalChainError, NotTestableError
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.services.partition")


def source_partition(chain: POMarkovChain) -> Partition:
    """Исходное разбиение P0: {s} и все остальные состояния."""
    canonical, sink = is_canonical(chain)
    if not canonical:
        logger.error(f"Цепь {chain.name!r} не каноническая, P0 не определено")
        raise NonCanonicalChainError(f"Цепь {chain.name!r} не каноническая")
    return Partition(tuple(1 if x == sink else 0 for x in range(chain.n)))


def refines(p2: Partition, p1: Partition) -> bool:
    """Истинно, если каждый класс p2 лежит в некотором классе p1."""
    if p2.n != p1.n:
        raise ValueError(f"Разбиения заданы на разных множествах: {p2.n} и {p1.n}")
    seen: dict[int, int] = {}
    for c2, c1 in zip(p2.class_of, p1.class_of):
        if seen.setdefault(c2, c1) != c1:
            return False
    return True


def class_masses(chain: POMarkovChain, p: Partition) -> np.ndarray:
    """Матрица n x |P|: p(x, C) = сумма переходов из x в класс C."""
    return chain.transition @ p.indicator


def dtv_matrix(chain: POMarkovChain, p: Partition) -> np.ndarray:
    """Попарные d_TV^P для всех пар состояний."""
    masses = class_masses(chain, p)
    return 0.5 * np.abs(masses[:, None, :] - masses[None, :, :]).sum(axis=2)


def dtv_partition(chain: POMarkovChain, a: StateId, b: StateId, p: Partition) -> float:
    """d_TV^P(a, b) = 1/2 * sum_C |p(a,C) - p(b,C)|."""
    if a == b:
        return 0.0
    masses = class_masses(chain, p)
    return float(0.5 * np.abs(masses[a] - masses[b]).sum())


def theta(chain: POMarkovChain, p: Partition) -> float:
    """Наибольшая d_TV^P по парам одного класса; 0 при отсутствии таких пар."""
    same = np.equal.outer(p.class_of, p.class_of)
    np.fill_diagonal(same, False)
    if not same.any():
        return 0.0
    return float(dtv_matrix(chain, p)[same].max())


def best_separating_collection(chain: POMarkovChain, a: StateId, b: StateId, p: Partition) -> frozenset[int]:
    """Классы, где p(b,C) > p(a,C); равенства исключены, поэтому множество каноническое."""
    masses = class_masses(chain, p)
    return frozenset(int(c) for c in np.flatnonzero(masses[b] > masses[a]))


def pair_test_sample_count(delta: float, epsilon: float) -> int:
    """m = ceil(2 ln(1/eps) / delta^2)."""
    return math.ceil(2.0 * math.log(1.0 / epsilon) / delta**2)


def pair_test(
    chain: POMarkovChain,
    p: Partition,
    a: StateId,
    b: StateId,
    sampler: Callable[[int], np.ndarray],
    epsilon: float,
) -> StateId:
    """
    Различение a и b по классам свежих потомков неизвестной вершины.

    :param sampler: sampler(m) возвращает классы m новых потомков в разбиении p
    :param epsilon: Допустимая ошибка для каждой из двух гипотез
    :return: a или b
    """
    delta = dtv_partition(chain, a, b, p)
    if delta <= 0.0:
        logger.error(f"Пара ({chain.states[a]}, {chain.states[b]}) неразличима на разбиении")
        raise NotTestableError(f"d_TV({chain.states[a]}, {chain.states[b]}) = 0 на данном разбиении")
    m = pair_test_sample_count(delta, epsilon)
    collection = best_separating_collection(chain, a, b, p)
    threshold = float(class_masses(chain, p)[a, sorted(collection)].sum()) + delta / 2
    classes = np.asarray(sampler(m))
    fraction = float(np.isin(classes, list(collection)).mean()) if m else 0.0
    logger.debug(f"Парный тест: m={m}, доля {fraction:.4f}, порог {threshold:.4f}")
    return a if fraction < threshold else b


def refine_by_components(chain: POMarkovChain, p: Partition, a: StateId, b: StateId) -> Partition:
    """
    Измельчение P пересечением классов с компонентами связности графа
    близких состояний (ребро, если d_TV^P(x,y) < D/(n-1)).
    """
    if not p.same_class(a, b):
        raise ValueError("a и b должны лежать в одном классе разбиения")
    D = dtv_partition(chain, a, b, p)
    if D <= 0.0:
        logger.error("Измельчение невозможно: D = 0")
        raise NotTestableError("d_TV^P(a, b) = 0, измельчение невозможно")
    n = chain.n
    threshold = D / (n - 1)
    distances = dtv_matrix(chain, p)
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    close = np.argwhere(np.triu(distances < threshold, k=1))
    graph.add_edges_from(map(tuple, close.tolist()))
    component = {}
    for index, members in enumerate(nx.connected_components(graph)):
        for x in members:
            component[x] = index
    refined = Partition(tuple(p.class_of[x] * n + component[x] for x in range(n)))
    logger.debug(f"Измельчение: {p.size} -> {refined.size} классов при пороге {threshold:.6f}")
    return refined


@lru_cache(maxsize=None)
def bell_number(m: int) -> int:
    """Число разбиений m-элементного множества (треугольник Белла)."""
    row = [1]
    for _ in range(m):
        nxt = [row[-1]]
        for value in row:
            nxt.append(nxt[-1] + value)
        row = nxt
    return row[0]


def iter_set_partitions(items: Sequence[int]) -> Iterator[list[list[int]]]:
    """Все разбиения набора через строки ограниченного роста."""
    items = list(items)
    if not items:
        yield []
        return
    m = len(items)
    growth = [0] * m
    maxima = [0] * m
    while True:
        blocks: list[list[int]] = [[] for _ in range(max(growth) + 1)]
        for item, block in zip(items, growth):
            blocks[block].append(item)
        yield blocks
        i = m - 1
        while i > 0 and growth[i] == maxima[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        growth[i] += 1
        maxima[i] = max(maxima[i - 1], growth[i])
        for j in range(i + 1, m):
            growth[j] = 0
            maxima[j] = maxima[i]


def iter_refinements(p: Partition) -> Iterator[Partition]:
    """Все измельчения p, включая само p."""
    per_class = [list(iter_set_partitions(members)) for members in p.classes]
    for choice in product(*per_class):
        labels = [0] * p.n
        block_id = 0
        for blocks in choice:
            for block in blocks:
                for x in block:
                    labels[x] = block_id
                block_id += 1
        yield Partition(tuple(labels))


_GROUP = re.compile(r"\[([^\[\]]*)\]")


def parse_partition(chain: POMarkovChain, text: str) -> Partition:
    """Разбор литерала "[a b a' b'][s]"."""
    stripped = text.strip()
    groups = _GROUP.findall(stripped)
    if not groups or _GROUP.sub("", stripped).strip():
        raise ChainFormatError(f"некорректный литерал разбиения {text!r}", field="partition")
    try:
        classes = [[chain.index(label) for label in group.split()] for group in groups]
        return Partition.from_classes(chain.n, classes)
    except (KeyError, ValueError) as e:
        raise ChainFormatError(str(e), field="partition") from e


def format_partition(chain: POMarkovChain, p: Partition) -> str:
    return p.format(chain.states)
