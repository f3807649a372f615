"""Сведение произвольной ч.н. цепи к канонической и эмуляция стратегий на ней."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from rewinding.interfaces.strategies import AdaptiveStrategy, NodeCounter, StrategyPlay
from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import ABSTAIN, NonAdaptivePlan, Verdict
from rewinding.schemas.reports import ReductionReport
from rewinding.services.chain import is_canonical
from rewinding.services.simulate import QuerySession, run_adaptive, run_play
from rewinding.utils.errors import InvalidParameterError, StrategyContractError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import split_streams

logger = setup_logger("rewinding.services.reduce")

SINK_SYMBOL = 1


@dataclass(frozen=True, eq=False)
class CanonicalReduction:
    """
    Результат сведения.

    :param source: Исходная цепь с алфавитом размера k
    :param target: Каноническая цепь
    :param phi: phi[x] - индекс образа состояния x в target
    :param dummy_paths: (x, x') -> индексы d_1..d_{k-1} в target
    :param special_states: Индексы sigma_1..sigma_k, последний - сток
    :param q: Вероятность обычного шага из образа
    """
    source: POMarkovChain
    target: POMarkovChain
    phi: tuple[int, ...]
    dummy_paths: dict[tuple[int, int], tuple[int, ...]]
    special_states: tuple[int, ...]
    q: float

    @property
    def k(self) -> int:
        return len(self.special_states)

    def decode_observation(self, length: int) -> int:
        """Путь, впервые попавший в сток на length-й вершине, вышел из состояния с наблюдением k - length."""
        if not 1 <= length <= self.k:
            raise ValueError(f"Длина {length} вне [1, {self.k}]")
        return self.k - length

    def phi_inverse(self, node_state: StateId) -> Optional[StateId]:
        try:
            return self.phi.index(node_state)
        except ValueError:
            return None


def _unique_label(label: str, taken: set[str]) -> str:
    while label in taken:
        label = "_" + label
    taken.add(label)
    return label


def reduce_to_canonical(source: POMarkovChain, q: float) -> CanonicalReduction:
    """
    Строит каноническую цепь M^.

    Из phi(x) с вероятностью q*p(x,x') начинается фиктивный путь d_1..d_{k-1},
    ведущий в phi(x'); с вероятностью 1-q - переход в sigma_{O(x)+1},
    откуда цепочка sigma доходит до стока sigma_k.
    """
    if not 0.0 < q < 1.0:
        logger.error(f"Недопустимый параметр q={q}")
        raise InvalidParameterError(f"q должно лежать в (0, 1), получено {q}")
    k = source.alphabet_size
    if k < 2:
        raise InvalidParameterError(f"Алфавит исходной цепи должен содержать хотя бы 2 символа, получено {k}")

    taken = set(source.states)
    labels = list(source.states)
    edges = [(int(x), int(y)) for x, y in np.argwhere(source.transition > 0)]
    dummy_paths = {}
    for x, y in edges:
        path = []
        for j in range(1, k):
            path.append(len(labels))
            labels.append(_unique_label(f"d{j}[{source.states[x]}->{source.states[y]}]", taken))
        dummy_paths[(x, y)] = tuple(path)
    special = []
    for i in range(1, k + 1):
        special.append(len(labels))
        labels.append(_unique_label("s" if i == k else f"sigma{i}", taken))

    size = len(labels)
    P = np.zeros((size, size))
    for (x, y), path in dummy_paths.items():
        P[x, path[0]] = q * source.transition[x, y]
        for u, v in zip(path, path[1:]):
            P[u, v] = 1.0
        P[path[-1], y] = 1.0
    for x in range(source.n):
        P[x, special[int(source.observation[x])]] += 1.0 - q
    for u, v in zip(special, special[1:]):
        P[u, v] = 1.0
    P[special[-1], special[-1]] = 1.0
    observation = np.zeros(size, dtype=np.int64)
    observation[special[-1]] = 1

    target = POMarkovChain(
        name=f"{source.name}-canonical",
        states=tuple(labels),
        transition=P,
        observation=observation,
        sink=special[-1],
        declared_alphabet=2,
    )
    reduction = CanonicalReduction(
        source=source,
        target=target,
        phi=tuple(range(source.n)),
        dummy_paths=dummy_paths,
        special_states=tuple(special),
        q=q,
    )
    logger.info(
        f"Сведение {source.name!r}: {source.n} -> {target.n} состояний, "
        f"{len(edges)} ненулевых переходов, k={k}, q={q}"
    )
    return reduction


def exact_emulated_child_distribution(reduction: CanonicalReduction, x: StateId) -> np.ndarray:
    """P^(первый шаг d_1^{x,x'} | первый шаг не особый) как вектор по x'."""
    row = reduction.target.transition[reduction.phi[x]]
    regular = 1.0 - row[list(reduction.special_states)].sum()
    distribution = np.zeros(reduction.source.n)
    for (u, y), path in reduction.dummy_paths.items():
        if u == x:
            distribution[y] = row[path[0]] / regular
    return distribution


def max_marginal_deviation(reduction: CanonicalReduction) -> float:
    """Наибольшее отклонение эмулированных строк от строк исходной цепи."""
    return max(
        float(np.abs(exact_emulated_child_distribution(reduction, x) - reduction.source.transition[x]).max())
        for x in range(reduction.source.n)
    )


@dataclass
class EmulationRecord:
    source_queries: int = 0
    observation_paths: int = 0
    advance_paths: int = 0


class EmulatedStrategy(AdaptiveStrategy):
    """
    Адаптивная стратегия на M^, исполняющая стратегию исходной цепи.

    Каждая вершина исходного дерева представлена вершиной-образом phi(x).
    Наблюдение образа узнается путями длины не более k до первого попадания в сток,
    потомок - путем длины k, не попавшим в сток.
    """

    def __init__(self, reduction: CanonicalReduction, strategy: AdaptiveStrategy):
        self.reduction = reduction
        self.strategy = strategy
        self.name = f"emulated-{strategy.name}"

    def _observe(self, counter: NodeCounter, node: int, record: EmulationRecord):
        k = self.reduction.k
        while True:
            record.observation_paths += 1
            current = node
            for length in range(1, k + 1):
                current, observation = yield from counter.extend(current)
                if observation == SINK_SYMBOL:
                    return self.reduction.decode_observation(length)

    def _advance(self, counter: NodeCounter, node: int, record: EmulationRecord):
        k = self.reduction.k
        while True:
            record.advance_paths += 1
            current = node
            for _ in range(k):
                current, observation = yield from counter.extend(current)
                if observation == SINK_SYMBOL:
                    break
            else:
                return current

    def play(self, root_observation: int, rng: np.random.Generator) -> StrategyPlay:
        return self.play_recorded(EmulationRecord(), rng)

    def play_recorded(self, record: EmulationRecord, rng: np.random.Generator) -> StrategyPlay:
        counter = NodeCounter()
        images = [0]
        source_root = yield from self._observe(counter, 0, record)
        source_play = self.strategy.play(source_root, rng)
        try:
            request = next(source_play)
            while True:
                if not 0 <= request < len(images):
                    raise StrategyContractError(f"Исходная стратегия запросила вершину {request}")
                child = yield from self._advance(counter, images[request], record)
                observation = yield from self._observe(counter, child, record)
                images.append(child)
                record.source_queries += 1
                request = source_play.send(observation)
        except StopIteration as stop:
            return stop.value
        finally:
            source_play.close()


def emulate_adaptive(reduction: CanonicalReduction, strategy: AdaptiveStrategy) -> EmulatedStrategy:
    """Адаптивная стратегия на M^ для стратегии исходной цепи."""
    return EmulatedStrategy(reduction, strategy)


def nonadaptive_q(plan_size: int, c1: float) -> float:
    """q для неадаптивной эмуляции: вероятность особого шага 1 - q = 1/(c1*Q)."""
    if plan_size < 1:
        raise InvalidParameterError("План должен содержать хотя бы одну вершину")
    return 1.0 - 1.0 / (c1 * plan_size)


def bundle_size(plan_size: int, c2: float) -> int:
    """B = c2 * Q * max(1, ceil(log2 Q))."""
    log_factor = max(1, math.ceil(math.log2(plan_size))) if plan_size > 1 else 1
    return int(math.ceil(c2 * plan_size * log_factor))


def nonadaptive_failure_bounds(plan_size: int, c1: float, c2: float) -> tuple[float, float]:
    """
    Две вероятности отказа неадаптивной эмуляции.

    :return: (1/c1 - хотя бы один путь продолжения ушел в сток,
              Q^{1-c2/c1} - у некоторой вершины ни один путь связки не попал в сток)
    """
    return 1.0 / c1, plan_size ** (1.0 - c2 / c1)


@dataclass(frozen=True)
class EmulatedDecision:
    """Восстанавливает наблюдения исходного плана по наблюдениям целевого и применяет его решение."""
    source_decision: object
    k: int
    bundle: int
    bundle_starts: tuple[int, ...]
    continuation_starts: tuple[int, ...]

    def source_observations(self, observation: np.ndarray) -> Optional[np.ndarray]:
        observation = np.asarray(observation)
        k = self.k
        for start in self.continuation_starts:
            if observation[start:start + k].any():
                return None
        recovered = np.empty(len(self.bundle_starts), dtype=np.int64)
        for t, start in enumerate(self.bundle_starts):
            paths = observation[start:start + self.bundle * k].reshape(self.bundle, k) == SINK_SYMBOL
            hits = np.flatnonzero(paths.any(axis=1))
            if hits.size == 0:
                return None
            length = int(np.argmax(paths[hits[0]])) + 1
            recovered[t] = k - length
        return recovered

    def __call__(self, observation: np.ndarray) -> Verdict:
        recovered = self.source_observations(observation)
        if recovered is None:
            return ABSTAIN
        return self.source_decision(recovered)


def emulate_nonadaptive(reduction: CanonicalReduction, plan: NonAdaptivePlan, c1: float = 20, c2: float = 120) -> NonAdaptivePlan:
    """
    Неадаптивный план на M^ для плана исходной цепи.

    Вершина t плана получает связку из B путей длины k, каждое ребро - один путь
    продолжения длины k от образа родителя; конец этого пути считается образом t.
    Всего k*(B*Q + Q - 1) запросов.
    """
    Q = plan.size
    if Q < 1:
        raise InvalidParameterError("План должен содержать хотя бы одну вершину")
    expected_q = nonadaptive_q(Q, c1)
    if not math.isclose(reduction.q, expected_q, rel_tol=1e-12):
        logger.warning(f"Сведение построено с q={reduction.q}, для плана из {Q} вершин ожидалось {expected_q}")
    k = reduction.k
    B = bundle_size(Q, c2)
    parent = [-1]
    images = [0] * Q
    bundle_starts = []
    continuation_starts = []

    def lay_path(origin: int) -> int:
        start = len(parent)
        parent.append(origin)
        parent.extend(range(start, start + k - 1))
        return start

    source_parent = plan.parent.tolist()
    for t in range(Q):
        if t:
            start = lay_path(images[source_parent[t]])
            continuation_starts.append(start)
            images[t] = start + k - 1
        bundle_starts.append(len(parent))
        for _ in range(B):
            lay_path(images[t])

    decision = EmulatedDecision(
        source_decision=plan.decision,
        k=k,
        bundle=B,
        bundle_starts=tuple(bundle_starts),
        continuation_starts=tuple(continuation_starts),
    )
    emulated = NonAdaptivePlan(np.asarray(parent, dtype=np.int64), decision, name=f"emulated-{plan.name}")
    logger.info(f"Неадаптивная эмуляция {plan.name!r}: Q={Q}, B={B}, {emulated.queries} запросов")
    return emulated


def verify_reduction(
    source: POMarkovChain,
    a: StateId,
    b: StateId,
    strategy: AdaptiveStrategy,
    trials: int,
    seed: int,
    q: float = 0.5,
    budget: Optional[int] = None,
) -> ReductionReport:
    """
    Сравнивает стратегию на исходной цепи и ее эмуляцию на M^ при одинаковых скрытых стартах.

    Запуски на двух цепях используют независимые потоки испытания.
    """
    if trials < 1:
        raise InvalidParameterError(f"Число испытаний должно быть положительным, получено {trials}")
    reduction = reduce_to_canonical(source, q)
    if not is_canonical(reduction.target)[0]:
        raise RuntimeError("Сведение дало неканоническую цепь")
    emulated = emulate_adaptive(reduction, strategy)
    source_correct = target_correct = 0
    source_queries = target_queries = 0
    for i in range(trials):
        hidden = a if i % 2 == 0 else b
        tree, verdict = run_adaptive(source, hidden, strategy, budget, (seed, i, 0))
        source_correct += verdict is not None and verdict == hidden
        source_queries += tree.queries

        chain_rng, strategy_rng = split_streams((seed, i, 1), 2)
        session = QuerySession(reduction.target, reduction.phi[hidden], chain_rng)
        verdict = run_play(session, emulated.play_recorded(EmulationRecord(), strategy_rng))
        target_correct += verdict is not None and verdict == hidden
        target_queries += session.queries

    source_success = source_correct / trials
    target_success = target_correct / trials
    source_mean = source_queries / trials
    target_mean = target_queries / trials
    report = ReductionReport(
        source_success=source_success,
        target_success=target_success,
        success_difference=abs(source_success - target_success),
        source_mean_queries=source_mean,
        target_mean_queries=target_mean,
        overhead_ratio=target_mean / source_mean if source_mean else 0.0,
        trials=trials,
        alphabet_size=reduction.k,
    )
    logger.info(
        f"Проверка сведения: успех {source_success:.4f} / {target_success:.4f}, "
        f"накладные расходы x{report.overhead_ratio:.2f}"
    )
    return report
