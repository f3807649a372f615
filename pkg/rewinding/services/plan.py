"""
Граф разбиений, мультипликативные кратчайшие пути и неадаптивный
план идентификации состояния с рекурсивным классификатором победителей.
"""
import heapq
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import networkx as nx
import numpy as np

from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.partition import Partition
from rewinding.models.tree import ABSTAIN, NonAdaptivePlan, QueryTree, Verdict
from rewinding.services.partition import (
    bell_number,
    class_masses,
    dtv_matrix,
    iter_refinements,
    refines,
    source_partition,
)
from rewinding.services.simulate import sample_plan
from rewinding.utils.errors import EnumerationCapError, IndistinguishableError, InvalidParameterError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import as_seed_sequence

logger = setup_logger("rewinding.services.plan")

DEFAULT_PARTITION_CAP = 10
DEFAULT_MATERIALIZE_CAP = 200_000
_COST_TIE = 1e-9
_LOG_FLOAT_MAX = math.log(sys.float_info.max)


def _exp_or_inf(log_value: float) -> float:
    return math.exp(log_value) if log_value < _LOG_FLOAT_MAX else math.inf


def edge_weight(chain: POMarkovChain, p1: Partition, p2: Partition) -> float:
    """
    Вес ребра P1 -> P2: максимум 1/d_TV^{P1}(a,b)^2 по парам, которые P2 разделяет впервые.

    :return: Вес >= 1 или inf, если у какой-то разделяемой пары d_TV = 0
    """
    if p1 == p2 or not refines(p2, p1):
        raise ValueError("Ребро существует только для собственного измельчения")
    return _split_weight(dtv_matrix(chain, p1), p1, p2)[0]


def _split_weight(distances: np.ndarray, p1: Partition, p2: Partition) -> tuple[float, float]:
    """(вес, ln веса); при очень малых d_TV вес считается через логарифм, квадрат не обнуляется."""
    c1 = np.asarray(p1.class_of)
    c2 = np.asarray(p2.class_of)
    split = np.equal.outer(c1, c1) & ~np.equal.outer(c2, c2)
    smallest = float(distances[split].min())
    if smallest <= 0.0:
        return math.inf, math.inf
    log_weight = -2.0 * math.log(smallest)
    if log_weight < _LOG_FLOAT_MAX / 2:
        weight = 1.0 / smallest**2
        return weight, math.log(weight)
    return _exp_or_inf(log_weight), log_weight


@dataclass
class PartitionGraph:
    """Граф разбиений, измельчающих P0; вершины - Partition, атрибуты ребер weight и log_weight."""
    chain: POMarkovChain
    source: Partition
    graph: nx.DiGraph

    @property
    def nodes(self) -> list[Partition]:
        return list(self.graph.nodes)

    def weight(self, p1: Partition, p2: Partition) -> float:
        data = self.graph.get_edge_data(p1, p2)
        return math.inf if data is None else data["weight"]


def build_partition_graph(chain: POMarkovChain, cap: int = DEFAULT_PARTITION_CAP) -> PartitionGraph:
    """
    Строит граф разбиений со всеми ребрами конечного веса.

    :param cap: Предел на n-1 (число вершин графа равно B(n-1))
    """
    if chain.n - 1 > cap:
        logger.error(f"Граф разбиений для n-1={chain.n - 1} превышает предел {cap}")
        raise EnumerationCapError(f"n-1 = {chain.n - 1} больше предела {cap} (B = {bell_number(chain.n - 1)})")
    source = source_partition(chain)
    graph = nx.DiGraph()
    nodes = sorted(iter_refinements(source))
    graph.add_nodes_from(nodes)
    for p1 in nodes:
        distances = dtv_matrix(chain, p1)
        for p2 in iter_refinements(p1):
            if p2 == p1:
                continue
            weight, log_weight = _split_weight(distances, p1, p2)
            if math.isfinite(log_weight):
                graph.add_edge(p1, p2, weight=weight, log_weight=log_weight)
    logger.info(f"Граф разбиений {chain.name!r}: {graph.number_of_nodes()} вершин, {graph.number_of_edges()} ребер")
    return PartitionGraph(chain=chain, source=source, graph=graph)


class PathCost(NamedTuple):
    cost: float
    predecessor: Optional[Partition]
    log_cost: float


def shortest_costs(graph: PartitionGraph) -> dict[Partition, PathCost]:
    """Дейкстра по натуральным логарифмам весов; c(P0) = 1, недостижимые - inf."""
    predecessors, distances = nx.dijkstra_predecessor_and_distance(
        graph.graph, graph.source, weight="log_weight"
    )
    costs = {}
    for node in graph.graph.nodes:
        if node in distances:
            preds = predecessors.get(node) or []
            costs[node] = PathCost(_exp_or_inf(distances[node]), min(preds) if preds else None, distances[node])
        else:
            costs[node] = PathCost(math.inf, None, math.inf)
    return costs


def prim_costs(graph: PartitionGraph) -> dict[Partition, PathCost]:
    """Рост дерева из P0 жадным добавлением самого легкого выходящего ребра."""
    costs = {node: PathCost(math.inf, None, math.inf) for node in graph.graph.nodes}
    costs[graph.source] = PathCost(1.0, None, 0.0)
    in_tree = {graph.source}
    frontier = []

    def push_edges(node):
        for _, target, data in graph.graph.out_edges(node, data=True):
            if target not in in_tree:
                heapq.heappush(frontier, (data["log_weight"], target, node))

    push_edges(graph.source)
    while frontier:
        log_weight, target, parent = heapq.heappop(frontier)
        if target in in_tree:
            continue
        log_cost = costs[parent].log_cost + log_weight
        costs[target] = PathCost(_exp_or_inf(log_cost), parent, log_cost)
        in_tree.add(target)
        push_edges(target)
    return costs


def reconstruct_path(costs: dict[Partition, PathCost], target: Partition) -> list[Partition]:
    path = [target]
    while costs[path[-1]].predecessor is not None:
        path.append(costs[path[-1]].predecessor)
    return path[::-1]


def plan_log_epsilon(n: int, k: int, log_cost: float) -> float:
    """ln eps для eps = 1 / (3 n^{2k} Q max(1, log2(n^{2k} Q))), где ln Q = log_cost."""
    log2_scale = 2 * k * math.log2(n) + log_cost / math.log(2)
    return -(log2_scale * math.log(2) + math.log(3.0 * max(1.0, log2_scale)))


def plan_epsilon(n: int, k: int, cost: float) -> float:
    """eps по стоимости пути; при огромной стоимости уходит в 0 без переполнения."""
    return math.exp(plan_log_epsilon(n, k, math.log(cost)))


def plan_degrees(n: int, log_epsilon: float, weights: list[float]) -> list[int]:
    """degrees[i] = ceil(2 n^2 ln(1/eps) w_i)."""
    raw = [2 * n * n * -log_epsilon * w for w in weights]
    if not all(math.isfinite(x) for x in raw):
        logger.error(f"Степени плана не представимы: ln eps = {log_epsilon:.6g}, веса {weights}")
        raise EnumerationCapError("Степени дерева плана превышают диапазон чисел с плавающей точкой")
    return [math.ceil(x) for x in raw]


@dataclass(frozen=True, eq=False)
class IdentificationPlan:
    """
    План идентификации: путь P0..Pk, ошибка на тест и степени уровней.

    Вершина высоты i имеет degrees[i-1] потомков; корень имеет высоту k.
    """
    chain: POMarkovChain
    a: StateId
    b: StateId
    path: tuple[Partition, ...]
    weights: tuple[float, ...]
    epsilon: float
    log_epsilon: float
    degrees: tuple[int, ...]
    method: str = "dijkstra"
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def k(self) -> int:
        return len(self.path) - 1

    @property
    def cost(self) -> float:
        return math.prod(self.weights)

    @cached_property
    def level_sizes(self) -> list[int]:
        """Число вершин на глубинах 0..k."""
        sizes = [1]
        for height in range(self.k, 0, -1):
            sizes.append(sizes[-1] * self.degrees[height - 1])
        return sizes

    @property
    def total_queries(self) -> int:
        return sum(self.level_sizes) - 1

    def verdict_for_class(self, root_class: int) -> Verdict:
        final = self.path[-1]
        if root_class == final[self.a]:
            return self.a
        if root_class == final[self.b]:
            return self.b
        return ABSTAIN

    @cached_property
    def parent_array(self) -> np.ndarray:
        """Родители равномерного дерева в порядке уровней."""
        parent = [np.array([-1], dtype=np.int64)]
        offset = 0
        for depth in range(1, self.k + 1):
            degree = self.degrees[self.k - depth]
            count = self.level_sizes[depth]
            parent.append(offset + np.arange(count, dtype=np.int64) // degree)
            offset += self.level_sizes[depth - 1]
        return np.concatenate(parent)

    @cached_property
    def nonadaptive_plan(self) -> NonAdaptivePlan:
        return NonAdaptivePlan(parent=self.parent_array, decision=WinnerDecision(self), name="partition-path")


class _Classifier:
    """Таблицы парных тестов для пути разбиений."""

    def __init__(self, plan: IdentificationPlan):
        chain = plan.chain
        self.plan = plan
        self.path = plan.path
        self.n = chain.n
        p0 = self.path[0]
        sink = int(np.flatnonzero(chain.observation == 1)[0])
        other = next(x for x in range(chain.n) if x != sink)
        self.class_by_symbol = np.array([p0[other], p0[sink]], dtype=np.int64)
        # coarsen[h][j]: класс P_j для каждого класса P_h (j <= h)
        self.coarsen = {}
        for h, ph in enumerate(self.path):
            for j in range(h + 1):
                mapping = np.empty(ph.size, dtype=np.int64)
                for x in range(self.n):
                    mapping[ph[x]] = self.path[j][x]
                self.coarsen[(h, j)] = mapping
        self.tests = {}
        for j in range(1, len(self.path)):
            prev, cur = self.path[j - 1], self.path[j]
            masses = class_masses(chain, prev)
            for x in range(self.n):
                rows = []
                for y in range(self.n):
                    if prev[x] == prev[y] and cur[x] != cur[y]:
                        collection = masses[y] > masses[x]
                        delta = 0.5 * float(np.abs(masses[x] - masses[y]).sum())
                        threshold = float(masses[x, collection].sum()) + delta / 2
                        rows.append((collection, threshold))
                self.tests[(j, x)] = rows

    def decide(self, height: int, symbols: np.ndarray, counts: Optional[np.ndarray], degree: int) -> np.ndarray:
        """
        Решение классов вершин высоты height.

        :param symbols: Наблюдения вершин
        :param counts: Матрица N x |P_{height-1}| решенных классов потомков
        :param degree: Число потомков каждой вершины
        :return: Класс в P_height или -1 (воздержание)
        """
        decided = self.class_by_symbol[np.minimum(symbols, 1)]
        for j in range(1, height + 1):
            projected = np.zeros((decided.size, self.path[j - 1].size))
            np.add.at(projected.T, self.coarsen[(height - 1, j - 1)], counts.T)
            fraction = projected / degree
            wins = np.zeros((decided.size, self.path[j].size), dtype=bool)
            for x in range(self.n):
                ok = decided == self.path[j - 1][x]
                for collection, threshold in self.tests[(j, x)]:
                    ok &= fraction[:, collection].sum(axis=1) < threshold
                wins[:, self.path[j][x]] |= ok
            single = wins.sum(axis=1) == 1
            decided = np.where(single, wins.argmax(axis=1), -1)
        return decided


def _classifier(plan: IdentificationPlan) -> _Classifier:
    if "classifier" not in plan._tables:
        plan._tables["classifier"] = _Classifier(plan)
    return plan._tables["classifier"]


def _child_counts(parent_local: np.ndarray, child_classes: np.ndarray, parents: int, classes: int) -> np.ndarray:
    valid = child_classes >= 0
    flat = np.bincount(parent_local[valid] * classes + child_classes[valid], minlength=parents * classes)
    return flat.reshape(parents, classes).astype(np.float64)


def classify_observations(plan: IdentificationPlan, observation: np.ndarray) -> int:
    """Класс корня в P_k по вектору наблюдений равномерного дерева."""
    observation = np.asarray(observation, dtype=np.int64)
    if observation.size != plan.total_queries + 1:
        raise ValueError(f"Форма дерева не совпадает с планом: {observation.size} вершин вместо {plan.total_queries + 1}")
    classifier = _classifier(plan)
    sizes = plan.level_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    decided = None
    for depth in range(plan.k, -1, -1):
        height = plan.k - depth
        symbols = observation[offsets[depth]:offsets[depth + 1]]
        if height == 0:
            decided = classifier.decide(0, symbols, None, 1)
            continue
        degree = plan.degrees[height - 1]
        parent_local = np.arange(decided.size) // degree
        counts = _child_counts(parent_local, decided, symbols.size, plan.path[height - 1].size)
        decided = classifier.decide(height, symbols, counts, degree)
    return int(decided[0])


def classify_tree(chain: POMarkovChain, plan: IdentificationPlan, tree: QueryTree) -> int:
    """
    Класс корня в P_k (или -1) по дереву, форма которого совпадает с планом.

    Каждая вершина высоты i решает свой класс в P_0..P_i: пары, уже разделенные
    в P_{j-1}, отвечаются ее классом в P_{j-1}, новые пары - парными тестами
    по классам потомков.
    """
    if tree.size != plan.total_queries + 1 or not np.array_equal(np.asarray(tree.parent), plan.parent_array):
        logger.error("Форма дерева не совпадает с планом")
        raise ValueError("Форма дерева не совпадает с равномерным деревом плана")
    return classify_observations(plan, np.asarray(tree.observation))


@dataclass(frozen=True)
class WinnerDecision:
    """Решающее правило плана как функция вектора наблюдений."""
    plan: IdentificationPlan

    def __call__(self, observation: np.ndarray) -> Verdict:
        return self.plan.verdict_for_class(classify_observations(self.plan, observation))


def sample_root_class(plan: IdentificationPlan, x0: StateId, rng: np.random.Generator) -> int:
    """
    Класс корня без построения дерева: потомки вершины группируются по
    скрытому состоянию и разыгрываются мультиномиально. Поддеревья разных
    вершин условно независимы при известных состояниях, поэтому распределение
    совпадает с распределением на явном дереве.
    """
    chain = plan.chain
    classifier = _classifier(plan)
    P = chain.transition / chain.transition.sum(axis=1, keepdims=True)
    masses0 = class_masses(chain, plan.path[0])
    masses0 = masses0 / masses0.sum(axis=1, keepdims=True)

    def grouped_multinomial(states: np.ndarray, degree: int, rows: np.ndarray) -> np.ndarray:
        counts = np.zeros((states.size, rows.shape[1]), dtype=np.int64)
        for s in np.unique(states):
            where = np.flatnonzero(states == s)
            counts[where] = rng.multinomial(degree, rows[s], size=where.size)
        return counts

    def decide(height: int, states: np.ndarray) -> np.ndarray:
        symbols = chain.observation[states]
        if height == 0:
            return classifier.decide(0, symbols, None, 1)
        degree = plan.degrees[height - 1]
        if height == 1:
            counts = grouped_multinomial(states, degree, masses0).astype(np.float64)
            return classifier.decide(1, symbols, counts, degree)
        by_state = grouped_multinomial(states, degree, P)
        children = np.repeat(np.tile(np.arange(chain.n), states.size), by_state.ravel())
        parent_local = np.repeat(np.arange(states.size), degree)
        child_classes = decide(height - 1, children)
        counts = _child_counts(parent_local, child_classes, states.size, plan.path[height - 1].size)
        return classifier.decide(height, symbols, counts, degree)

    return int(decide(plan.k, np.array([x0], dtype=np.int64))[0])


def plan_identification(
    chain: POMarkovChain,
    a: StateId,
    b: StateId,
    method: str = "dijkstra",
    graph: Optional[PartitionGraph] = None,
    cap: int = DEFAULT_PARTITION_CAP,
) -> IdentificationPlan:
    """
    Алгоритм построения плана: разбиение минимальной стоимости,
    разделяющее a и b, и кратчайший путь к нему.

    :param method: "dijkstra" (дерево кратчайших путей) или "prim" (жадный рост дерева)
    """
    if a == b:
        logger.error("Состояния совпадают, разделяющего разбиения нет")
        raise IndistinguishableError("a = b: ни одно разбиение их не разделяет")
    if method not in ("dijkstra", "prim"):
        raise InvalidParameterError(f"Неизвестный метод планирования: {method}")
    graph = graph or build_partition_graph(chain, cap)
    costs = shortest_costs(graph) if method == "dijkstra" else prim_costs(graph)
    candidates = [p for p, c in costs.items() if p.separates(a, b) and math.isfinite(c.log_cost)]
    if not candidates:
        logger.error(f"Пара ({chain.states[a]}, {chain.states[b]}) неразличима планировщиком")
        raise IndistinguishableError(
            f"Ни одно разбиение конечной стоимости не разделяет {chain.states[a]} и {chain.states[b]}"
        )
    best = min(costs[p].log_cost for p in candidates)
    target = min(p for p in candidates if costs[p].log_cost <= best + _COST_TIE * max(1.0, abs(best)))
    path = reconstruct_path(costs, target)
    weights = [graph.weight(p1, p2) for p1, p2 in zip(path, path[1:])]
    k = len(path) - 1
    log_cost = sum(graph.graph[p1][p2]["log_weight"] for p1, p2 in zip(path, path[1:]))
    log_epsilon = plan_log_epsilon(chain.n, k, log_cost)
    epsilon = math.exp(log_epsilon)
    plan = IdentificationPlan(
        chain=chain,
        a=a,
        b=b,
        path=tuple(path),
        weights=tuple(weights),
        epsilon=epsilon,
        log_epsilon=log_epsilon,
        degrees=tuple(plan_degrees(chain.n, log_epsilon, weights)),
        method=method,
    )
    logger.info(
        f"План для ({chain.states[a]}, {chain.states[b]}): k={k}, c={plan.cost:.6g}, "
        f"eps={epsilon:.3e}, степени {list(plan.degrees)}, запросов {plan.total_queries}"
    )
    return plan


def identify(
    chain: POMarkovChain,
    a: StateId,
    b: StateId,
    hidden: StateId,
    seed,
    plan: Optional[IdentificationPlan] = None,
    materialize_cap: int = DEFAULT_MATERIALIZE_CAP,
) -> Verdict:
    """
    Идентификация скрытого начального состояния по плану.

    Небольшие деревья строятся явно; большие разыгрываются по уровням.
    """
    if hidden not in (a, b):
        raise InvalidParameterError(f"Скрытое состояние {chain.states[hidden]} не входит в пару")
    plan = plan or plan_identification(chain, a, b)
    rng = np.random.default_rng(as_seed_sequence(seed))
    if plan.total_queries <= materialize_cap:
        hidden_states = sample_plan(chain, hidden, plan.nonadaptive_plan, rng)
        root_class = classify_observations(plan, chain.observation[hidden_states])
    else:
        root_class = sample_root_class(plan, hidden, rng)
    verdict = plan.verdict_for_class(root_class)
    if verdict is ABSTAIN:
        logger.warning("Классификатор воздержался: нет единственного победителя")
    return verdict


def certify_path_bound(
    chain: POMarkovChain,
    a: StateId,
    b: StateId,
    q_hat: float,
    graph: Optional[PartitionGraph] = None,
) -> Optional[list[Partition]]:
    """
    Конструктивная проверка: идем из P0 по ребрам веса не больше h = (3(n-1) q_hat)^2,
    выбирая самое легкое (при равенстве - наименьшее разбиение), пока такие ребра есть.

    :return: Путь, если его конец разделяет a и b, иначе None
    """
    if q_hat < 1:
        raise InvalidParameterError(f"q_hat должно быть не меньше 1, получено {q_hat}")
    if a == b:
        return None
    graph = graph or build_partition_graph(chain)
    h = (3 * (chain.n - 1) * q_hat) ** 2
    path = [graph.source]
    while True:
        options = [
            (data["weight"], target)
            for _, target, data in graph.graph.out_edges(path[-1], data=True)
            if data["weight"] <= h
        ]
        if not options:
            break
        path.append(min(options)[1])
    if path[-1].separates(a, b):
        logger.info(f"Сертификат найден: путь из {len(path) - 1} ребер при h={h:.6g}")
        return path
    return None
