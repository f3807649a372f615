"""Библиотека стратегий с откатом для цепей-примеров."""
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from rewinding.interfaces.strategies import AdaptiveStrategy, NodeCounter, PlanDecision, StrategyPlay
from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import ABSTAIN, NonAdaptivePlan, Verdict
from rewinding.services.gap import DEFAULT_T_CHILDREN, GapAdaptiveStrategy
from rewinding.services.plan import plan_identification
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.services.strategies")

SINK_SYMBOL = 1


def _require_positive(**values):
    for key, value in values.items():
        if value < 1:
            logger.error(f"Недопустимый параметр {key}={value}")
            raise InvalidParameterError(f"{key} должно быть положительным, получено {value}")


@dataclass(frozen=True)
class ConstantDecision(PlanDecision):
    verdict: Verdict = ABSTAIN

    def __call__(self, observations: np.ndarray) -> Verdict:
        return self.verdict


@dataclass(frozen=True)
class UniformBlockDecision(PlanDecision):
    """a, если все наблюдения блока [start, stop) совпадают, иначе b."""
    a: StateId
    b: StateId
    start: int
    stop: int

    def __call__(self, observations: np.ndarray) -> Verdict:
        block = np.asarray(observations)[self.start:self.stop]
        return self.a if np.all(block == block[0]) else self.b


@dataclass(frozen=True)
class ChildrenSymbolDecision(PlanDecision):
    """a, если все наблюдения блока равны symbol, иначе b."""
    a: StateId
    b: StateId
    start: int
    stop: int
    symbol: int

    def __call__(self, observations: np.ndarray) -> Verdict:
        block = np.asarray(observations)[self.start:self.stop]
        return self.a if np.all(block == self.symbol) else self.b


@dataclass(frozen=True)
class SinkFreeGroupDecision(PlanDecision):
    """b, если у некоторой группы из m подряд идущих вершин нет стока, иначе a."""
    a: StateId
    b: StateId
    start: int
    groups: int
    group_size: int

    def __call__(self, observations: np.ndarray) -> Verdict:
        block = np.asarray(observations)[self.start:self.start + self.groups * self.group_size]
        sink_free = ~(block.reshape(self.groups, self.group_size) == SINK_SYMBOL).any(axis=1)
        return self.b if sink_free.any() else self.a


@dataclass(frozen=True)
class PathTestDecision(PlanDecision):
    """
    Блоки "путь + тестовые потомки": блок с путем, попавшим в сток, отбрасывается;
    ответ b, если среди тестовых потомков некоторого оставшегося блока есть сток.
    """
    a: StateId
    b: StateId
    path_length: int
    test_children: int
    repetitions: int

    def __call__(self, observations: np.ndarray) -> Verdict:
        width = self.path_length + self.test_children
        blocks = np.asarray(observations)[1:1 + self.repetitions * width].reshape(self.repetitions, width) == SINK_SYMBOL
        kept = ~blocks[:, :self.path_length].any(axis=1)
        flagged = blocks[:, self.path_length:].any(axis=1)
        return self.b if (kept & flagged).any() else self.a


class IntroChildrenStrategy(AdaptiveStrategy):
    """
    Стратегия вводной цепи: один шаг из корня, затем D потомков этого шага.

    Ответ a, если все D наблюдений совпали, иначе a'.
    """
    name = "intro-children"

    def __init__(self, a: StateId, b: StateId, D: int):
        _require_positive(D=D)
        self.a, self.b, self.D = a, b, D

    def play(self, root_observation: int, rng: np.random.Generator) -> StrategyPlay:
        counter = NodeCounter()
        child, _ = yield from counter.extend(0)
        seen = set()
        for _ in range(self.D):
            _, observation = yield from counter.extend(child)
            seen.add(observation)
        return self.a if len(seen) == 1 else self.b


def intro_children_plan(a: StateId, b: StateId, D: int) -> NonAdaptivePlan:
    """Неадаптивный вариант IntroChildrenStrategy: parent = [-1, 0, 1, ..., 1]."""
    _require_positive(D=D)
    parent = np.array([-1, 0] + [1] * D, dtype=np.int64)
    return NonAdaptivePlan(parent, UniformBlockDecision(a, b, 2, 2 + D), name="intro-children")


def children_test_plan(a: StateId, b: StateId, D: int, symbol: int = 0) -> NonAdaptivePlan:
    """D потомков корня; ответ a, если все они наблюдают symbol."""
    _require_positive(D=D)
    parent = np.zeros(D + 1, dtype=np.int64)
    parent[0] = -1
    return NonAdaptivePlan(parent, ChildrenSymbolDecision(a, b, 1, D + 1, symbol), name="children-test")


def example1_naive_plan(a: StateId, b: StateId, d: int) -> NonAdaptivePlan:
    """
    Двухуровневая звезда для примера 1: m = ceil(d ln d^3) потомков корня, у каждого по m потомков.

    Из a' среди потомков корня почти наверняка есть a', все потомки которого не сток.
    """
    if d < 2:
        raise InvalidParameterError(f"d должно быть не меньше 2, получено {d}")
    m = math.ceil(d * math.log(d**3))
    parent = np.concatenate([[-1], np.zeros(m, dtype=np.int64), 1 + np.arange(m * m) // m])
    decision = SinkFreeGroupDecision(a, b, start=1 + m, groups=m, group_size=m)
    logger.debug(f"Наивный план примера 1: d={d}, m={m}, {m + m * m} запросов")
    return NonAdaptivePlan(parent.astype(np.int64), decision, name="example1-naive")


def example1_path_plan(a: StateId, b: StateId, d: int, repetitions: int = 10, test_factor: int = 3) -> NonAdaptivePlan:
    """
    План примера 1 с линейным числом запросов: repetitions блоков,
    путь длины 2d из корня и test_factor*d потомков его последней вершины.
    """
    if d < 2:
        raise InvalidParameterError(f"d должно быть не меньше 2, получено {d}")
    _require_positive(repetitions=repetitions, test_factor=test_factor)
    path_length, test_children = 2 * d, test_factor * d
    parent = [-1]
    for _ in range(repetitions):
        start = len(parent)
        parent.append(0)
        parent.extend(range(start, start + path_length - 1))
        parent.extend([start + path_length - 1] * test_children)
    decision = PathTestDecision(a, b, path_length, test_children, repetitions)
    return NonAdaptivePlan(np.asarray(parent, dtype=np.int64), decision, name="example1-path")


def passive_path_plan(T: int, decision: Optional[PlanDecision] = None) -> NonAdaptivePlan:
    """Пассивное наблюдение: parent = [-1, 0, 1, ..., T-1]."""
    if T < 0:
        raise InvalidParameterError(f"T должно быть неотрицательным, получено {T}")
    parent = np.arange(-1, T, dtype=np.int64)
    return NonAdaptivePlan(parent, decision or ConstantDecision(), name="passive-path")


def resetting_plan(tau: int, repetitions: int, decision: Optional[PlanDecision] = None) -> NonAdaptivePlan:
    """Пути длины tau, каждый раз начинающиеся заново из корня."""
    _require_positive(tau=tau, repetitions=repetitions)
    parent = [-1]
    for _ in range(repetitions):
        start = len(parent)
        parent.append(0)
        parent.extend(range(start, start + tau - 1))
    return NonAdaptivePlan(np.asarray(parent, dtype=np.int64), decision or ConstantDecision(), name="resetting")


def example1_parameter(chain: POMarkovChain) -> int:
    """d цепи примера 1: p(b -> s) = 1/d."""
    try:
        return round(1.0 / chain.transition[chain.index("b"), chain.index("s")])
    except (KeyError, ZeroDivisionError, OverflowError):
        raise InvalidParameterError(f"Цепь {chain.name!r} не похожа на цепь примера 1") from None


class PlanStrategy(AdaptiveStrategy):
    """Неадаптивный план, исполняемый как адаптивная стратегия."""

    def __init__(self, plan: NonAdaptivePlan):
        self.plan = plan
        self.name = plan.name

    def play(self, root_observation: int, rng: np.random.Generator) -> StrategyPlay:
        parent = self.plan.parent.tolist()
        observations = [root_observation]
        for t in range(1, len(parent)):
            observation = yield parent[t]
            observations.append(observation)
        return self.plan.decision(np.asarray(observations, dtype=np.int64))


Strategy = Union[AdaptiveStrategy, NonAdaptivePlan]

_REGISTRY: dict[str, Callable[..., Strategy]] = {
    "intro-children": lambda chain, a, b, D=7, **_: IntroChildrenStrategy(a, b, D),
    "intro-children-plan": lambda chain, a, b, D=7, **_: intro_children_plan(a, b, D),
    "children-test": lambda chain, a, b, D=7, symbol=0, **_: children_test_plan(a, b, D, symbol),
    "example1-naive": lambda chain, a, b, d=None, **_: example1_naive_plan(a, b, d or example1_parameter(chain)),
    "example1-path": lambda chain, a, b, d=None, repetitions=10, test_factor=3, **_: example1_path_plan(
        a, b, d or example1_parameter(chain), repetitions, test_factor
    ),
    "passive-path": lambda chain, a, b, T=10, **_: passive_path_plan(T),
    "resetting": lambda chain, a, b, tau=5, repetitions=3, **_: resetting_plan(tau, repetitions),
    "gap-adaptive": lambda chain, a, b, k_paths=None, t_children=DEFAULT_T_CHILDREN, **_: GapAdaptiveStrategy(
        chain, k_paths if k_paths is not None else 100 * chain.n, t_children
    ),
    "partition-path": lambda chain, a, b, method="dijkstra", **_: plan_identification(
        chain, a, b, method=method
    ).nonadaptive_plan,
}

STRATEGY_NAMES = tuple(_REGISTRY)


def build_strategy(name: str, chain: POMarkovChain, a: StateId, b: StateId, **params) -> Strategy:
    """
    Стратегия или план по имени.

    :param params: Параметры конкретной стратегии (D, d, T, tau, repetitions, k_paths, ...); None пропускаются
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise InvalidParameterError(f"Неизвестная стратегия {name!r}; доступны {', '.join(STRATEGY_NAMES)}") from None
    params = {key: value for key, value in params.items() if value is not None}
    try:
        return factory(chain, a, b, **params)
    except TypeError as e:
        raise InvalidParameterError(f"Стратегии {name!r} не хватает параметров: {e}") from e
