"""Исполнение стратегий с откатом: адаптивных и неадаптивных."""
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np
from scipy import stats

from rewinding.interfaces.strategies import AdaptiveStrategy
from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import ABSTAIN, NonAdaptivePlan, QueryTree, Verdict
from rewinding.utils.errors import InvalidParameterError, StrategyContractError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import as_seed_sequence, split_streams, trial_seed

logger = setup_logger("rewinding.services.simulate")

_BUFFER = 4096


class BudgetExhausted(Exception):
    """Бюджет запросов исчерпан до остановки стратегии."""


class QuerySession:
    """
    Дерево запросов одного испытания вместе с источником случайности.

    :param chain: Цепь
    :param x0: Скрытое начальное состояние
    :param rng: Генератор для выборки потомков
    :param budget: Максимум запросов (None - без ограничения)
    """

    def __init__(self, chain: POMarkovChain, x0: StateId, rng: np.random.Generator, budget: int | None = None):
        if budget is not None and budget < 0:
            raise InvalidParameterError(f"Бюджет должен быть неотрицательным, получено {budget}")
        self.chain = chain
        self.rng = rng
        self.budget = budget
        self._rows = chain.cumulative_rows
        self._obs = chain.observation.tolist()
        self._uniforms: list[float] = []
        self._position = 0
        self.tree = QueryTree()
        self.tree.add(-1, int(x0), self._obs[int(x0)])

    @property
    def queries(self) -> int:
        return self.tree.size - 1

    def _uniform(self) -> float:
        if self._position >= len(self._uniforms):
            self._uniforms = self.rng.random(_BUFFER).tolist()
            self._position = 0
        u = self._uniforms[self._position]
        self._position += 1
        return u

    def extend(self, node: int) -> int:
        """Вытягивает нового потомка вершины node и возвращает его индекс."""
        tree = self.tree
        if not 0 <= node < tree.size:
            raise StrategyContractError(f"Вершина {node} не существует (в дереве {tree.size} вершин)")
        if self.budget is not None and tree.size - 1 >= self.budget:
            raise BudgetExhausted()
        child = bisect_right(self._rows[tree.hidden[node]], self._uniform())
        return tree.add(node, child, self._obs[child])

    def observation(self, node: int) -> int:
        return self.tree.observation[node]

    def is_sink(self, node: int) -> bool:
        return self.chain.sink is not None and self.tree.hidden[node] == self.chain.sink


def drive(strategy: AdaptiveStrategy, session: QuerySession, rng: np.random.Generator) -> Verdict:
    """Прогоняет генератор стратегии на сессии; исчерпание бюджета дает воздержание."""
    play = strategy.play(session.observation(0), rng)
    try:
        node = next(play)
        while True:
            child = session.extend(node)
            node = play.send(session.observation(child))
    except StopIteration as stop:
        return stop.value
    except BudgetExhausted:
        play.close()
        logger.debug(f"Стратегия {strategy.name} исчерпала бюджет {session.budget}, воздержание")
        return ABSTAIN
    except StrategyContractError:
        play.close()
        logger.error(f"Стратегия {strategy.name} нарушила контракт")
        raise


def run_adaptive(chain: POMarkovChain, x0: StateId, strategy: AdaptiveStrategy, budget: int, seed) -> tuple[QueryTree, Verdict]:
    """
    Запуск адаптивной стратегии.

    Потоки цепи и монет стратегии разделены через SeedSequence.spawn,
    поэтому одинаковый сид дает побитно одинаковое дерево.
    """
    chain_rng, strategy_rng = split_streams(seed, 2)
    session = QuerySession(chain, x0, chain_rng, budget)
    verdict = drive(strategy, session, strategy_rng)
    return session.tree, verdict


def sample_plan(chain: POMarkovChain, x0: StateId, plan: NonAdaptivePlan, rng: np.random.Generator) -> np.ndarray:
    """Скрытые состояния вершин плана; выборка по уровням глубины."""
    uniforms = rng.random(plan.size)
    hidden = np.empty(plan.size, dtype=np.int64)
    hidden[0] = x0
    for level in plan.levels:
        hidden[level] = chain.sample_next(hidden[plan.parent[level]], uniforms[level])
    return hidden


def sample_plan_batch(chain: POMarkovChain, x0: StateId, plan: NonAdaptivePlan, runs: int, rng: np.random.Generator) -> np.ndarray:
    """Матрица скрытых состояний runs x size для многих независимых запусков плана."""
    hidden = np.empty((runs, plan.size), dtype=np.int64)
    hidden[:, 0] = x0
    for t in range(1, plan.size):
        hidden[:, t] = chain.sample_next(hidden[:, plan.parent[t]], rng.random(runs))
    return hidden


def run_plan(chain: POMarkovChain, x0: StateId, plan: NonAdaptivePlan, seed) -> tuple[QueryTree, Verdict]:
    """Запуск неадаптивного плана: форма дерева равна plan.parent независимо от наблюдений."""
    rng = np.random.default_rng(as_seed_sequence(seed))
    hidden = sample_plan(chain, x0, plan, rng)
    observation = chain.observation[hidden]
    verdict = plan.decision(observation)
    return QueryTree.from_arrays(plan.parent, hidden, observation), verdict


@dataclass(frozen=True)
class SuccessEstimate:
    rate: float
    half_width: float
    trials: int
    correct: int


def success_interval(correct: int, trials: int, confidence: float = 0.95) -> SuccessEstimate:
    """Доля успехов с нормальным доверительным полуинтервалом."""
    if trials == 0:
        return SuccessEstimate(rate=0.0, half_width=0.0, trials=0, correct=0)
    rate = correct / trials
    z = stats.norm.ppf(0.5 + confidence / 2)
    return SuccessEstimate(rate=rate, half_width=float(z * np.sqrt(rate * (1 - rate) / trials)), trials=trials, correct=correct)


def estimate_success(
    chain: POMarkovChain,
    runner: Callable[[StateId, np.random.SeedSequence], Verdict],
    a: StateId,
    b: StateId,
    trials: int,
    seed: int,
) -> SuccessEstimate:
    """
    Оценка доли верных вердиктов; скрытый старт чередуется a, b, a, ...

    Воздержание засчитывается как ошибка.
    """
    if trials < 1:
        raise InvalidParameterError(f"Число испытаний должно быть положительным, получено {trials}")
    correct = 0
    for i in range(trials):
        hidden = a if i % 2 == 0 else b
        verdict = runner(hidden, trial_seed(seed, i))
        correct += verdict is not None and verdict == hidden
    estimate = success_interval(correct, trials)
    logger.info(f"Успешность {estimate.rate:.4f} ± {estimate.half_width:.4f} на {trials} испытаниях")
    return estimate


T = TypeVar("T")


def run_trials(task: Callable[[int], T], trials: int, workers: int = 1) -> list[T]:
    """
    Выполняет независимые испытания 0..trials-1, результат упорядочен по индексу.

    task сам выводит свой поток из (мастер-сид, индекс); при workers > 1
    задача должна сериализоваться через pickle.
    """
    indices: Sequence[int] = range(trials)
    if workers <= 1 or trials < 2:
        return [task(i) for i in indices]
    chunk = max(1, trials // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, indices, chunksize=chunk))


def run_play(session: QuerySession, play) -> Verdict:
    """Прогоняет уже созданный генератор запросов на сессии без бюджета стратегии."""
    try:
        node = next(play)
        while True:
            child = session.extend(node)
            node = play.send(session.observation(child))
    except StopIteration as stop:
        return stop.value
