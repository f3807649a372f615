"""Адаптивный различитель gap-цепи и оценки вероятности расцепления."""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, special, stats

from rewinding.interfaces.strategies import AdaptiveStrategy, NodeCounter, StrategyPlay
from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import ABSTAIN
from rewinding.schemas.reports import GapRunStats
from rewinding.services.chain import gap_state_labels, is_canonical
from rewinding.services.simulate import QuerySession, run_play
from rewinding.utils.errors import InvalidParameterError, NonCanonicalChainError, PathAbortedError
from rewinding.utils.logger import setup_logger
from rewinding.utils.rng import as_seed_sequence

logger = setup_logger("rewinding.services.gap")

DEFAULT_T_CHILDREN = 3
SINK_SYMBOL = 1


def gap_parameters(chain: POMarkovChain) -> tuple[int, int]:
    """Восстанавливает (n, d) по самой gap-цепи."""
    n = chain.n
    if n < 4 or list(chain.states) != gap_state_labels(n) or not is_canonical(chain)[0]:
        raise NonCanonicalChainError(f"Цепь {chain.name!r} не является gap-цепью")
    d = round(1.0 / (2.0 * chain.transition[0, 1]))
    return n, d


def default_max_len(n: int, d: int) -> int:
    return 20 * n * d


def d_test_play(counter: NodeCounter, node: int, t_children: int) -> StrategyPlay:
    """Вытягивает t_children потомков; истина, если все они - сток."""
    all_sink = True
    for _ in range(t_children):
        _, observation = yield from counter.extend(node)
        all_sink = all_sink and observation == SINK_SYMBOL
    return all_sink


@dataclass
class PathRecord:
    lengths: list[int] = field(default_factory=list)
    discarded: int = 0
    aborted: bool = False


def filtered_path_play(
    counter: NodeCounter,
    root: int,
    max_len: int,
    t_children: int,
    record: Optional[PathRecord] = None,
) -> StrategyPlay:
    """
    Путь от root до стока в обход D: потомок, прошедший D-тест, отбрасывается
    и вытягивается заново из того же родителя.

    :return: Число принятых вершин пути, включая сток
    """
    current, accepted = root, 0
    while True:
        child, observation = yield from counter.extend(current)
        if observation == SINK_SYMBOL:
            return accepted + 1
        if (yield from d_test_play(counter, child, t_children)):
            if record is not None:
                record.discarded += 1
            continue
        accepted += 1
        if accepted > max_len:
            raise PathAbortedError(f"Путь длиннее {max_len}")
        current = child


def d_test(session: QuerySession, node: int, t_children: int = DEFAULT_T_CHILDREN) -> bool:
    """D-тест вершины дерева сессии."""
    if session.observation(node) == SINK_SYMBOL:
        raise ValueError(f"Вершина {node} - сток, D-тест не определен")
    return run_play(session, d_test_play(NodeCounter(session.tree.size), node, t_children))


def filtered_path(
    session: QuerySession,
    root: int,
    max_len: int,
    t_children: int = DEFAULT_T_CHILDREN,
) -> int:
    """Длина отфильтрованного пути из вершины root сессии."""
    return run_play(session, filtered_path_play(NodeCounter(session.tree.size), root, max_len, t_children))


@dataclass(frozen=True)
class PathLengthMoments:
    mean: float
    variance: float
    solved_mean: float
    solved_variance: float
    halved_mean: float


def expected_path_length(n: int, d: int, start_index: int) -> PathLengthMoments:
    """
    Точные моменты длины отфильтрованного пути из q_{start_index}.

    Принятый шаг продвигается с вероятностью 1/d; среднее (n-1-i)*d, дисперсия -
    сумма геометрических. Независимая проверка - решение поглощающей цепи.
    """
    if not 1 <= start_index <= n - 2:
        raise InvalidParameterError(f"start_index должен быть в [1, {n - 2}], получено {start_index}")
    steps = n - 1 - start_index
    p = 1.0 / d
    size = steps
    Q = np.zeros((size, size))
    for i in range(size):
        Q[i, i] = 1.0 - p
        if i + 1 < size:
            Q[i, i + 1] = p
    fundamental = linalg.solve(np.eye(size) - Q, np.eye(size))
    t = fundamental @ np.ones(size)
    variance = (2 * fundamental - np.eye(size)) @ t - t * t
    return PathLengthMoments(
        mean=steps * d,
        variance=steps * (1.0 - p) / p**2,
        solved_mean=float(t[0]),
        solved_variance=float(variance[0]),
        halved_mean=steps * d / 2,
    )


def decision_threshold(n: int, d: int) -> tuple[float, float, float]:
    """(E1, E2, (E1+E2)/2) для стартов q1 и q2."""
    e1 = expected_path_length(n, d, 1).mean
    e2 = expected_path_length(n, d, 2).mean
    return e1, e2, (e1 + e2) / 2


class GapAdaptiveStrategy(AdaptiveStrategy):
    """
    Различитель q1/q2: k отфильтрованных путей из корня,
    ответ q1, если средняя длина не меньше середины между E1 и E2.
    """
    name = "gap-adaptive"

    def __init__(self, chain: POMarkovChain, k_paths: int, t_children: int = DEFAULT_T_CHILDREN, max_len: Optional[int] = None):
        self.n, self.d = gap_parameters(chain)
        self.q1, self.q2 = chain.index("q1"), chain.index("q2")
        self.k_paths = k_paths
        self.t_children = t_children
        self.max_len = max_len or default_max_len(self.n, self.d)
        self.threshold = decision_threshold(self.n, self.d)[2]

    def play(self, root_observation: int, rng: np.random.Generator) -> StrategyPlay:
        return self.play_recorded(PathRecord())

    def play_recorded(self, record: PathRecord) -> StrategyPlay:
        if self.k_paths == 0:
            return ABSTAIN
        counter = NodeCounter()
        try:
            for _ in range(self.k_paths):
                length = yield from filtered_path_play(counter, 0, self.max_len, self.t_children, record)
                record.lengths.append(length)
        except PathAbortedError:
            record.aborted = True
            return ABSTAIN
        return self.q1 if np.mean(record.lengths) >= self.threshold else self.q2


def adaptive_gap_identify(
    chain: POMarkovChain,
    hidden: StateId,
    k_paths: int,
    t_children: int = DEFAULT_T_CHILDREN,
    seed=0,
    max_len: Optional[int] = None,
) -> GapRunStats:
    """
    Один запуск адаптивного различителя из скрытого q1 или q2.

    :return: Длины путей, полное число запросов с накладными расходами D-тестов и вердикт
    """
    strategy = GapAdaptiveStrategy(chain, k_paths, t_children, max_len)
    if hidden not in (strategy.q1, strategy.q2):
        raise InvalidParameterError(f"Скрытое состояние должно быть q1 или q2, получено {chain.states[hidden]}")
    session = QuerySession(chain, hidden, np.random.default_rng(as_seed_sequence(seed)))
    record = PathRecord()
    verdict = run_play(session, strategy.play_recorded(record))
    if record.aborted:
        logger.warning(f"Путь прерван после {len(record.lengths)} путей, воздержание")
    return GapRunStats(
        path_lengths=record.lengths,
        total_queries=session.queries,
        verdict=None if verdict is None else chain.states[verdict],
        mean_length=float(np.mean(record.lengths)) if record.lengths else None,
        threshold=strategy.threshold,
        aborted=record.aborted,
    )


def decoupling_bound(n: int, d: int, k: int) -> float:
    """(1/2)^k * min(C(k, n-2) * d^{-(n-2)}, 1) в логарифмах."""
    if k < 1:
        raise InvalidParameterError(f"k должно быть положительным, получено {k}")
    r = n - 2
    if r > k:
        return 0.0
    log_binom = special.gammaln(k + 1) - special.gammaln(r + 1) - special.gammaln(k - r + 1)
    return math.exp(-k * math.log(2) + min(log_binom - r * math.log(d), 0.0))


def decoupling_probability_exact(n: int, d: int, k: int) -> float:
    """Точная вероятность события границы: k шагов без прыжка в D и не меньше n-2 продвижений."""
    return 0.5**k * float(stats.binom.sf(n - 3, k, 1.0 / d))


def split_probability_exact(n: int, d: int, k: int) -> float:
    """
    Точная вероятность того, что блуждание из q2 входит в сток из q_{n-2},
    пока блуждание из q1 стоит в q_{n-2}.

    Нужно n-3 продвижения до первого прыжка в D за не более чем k шагов.
    """
    r = n - 3
    if r > k:
        return 0.0
    advance, stay = 1.0 / (2 * d), (1.0 - 1.0 / d) / 2
    stays = np.arange(k - r + 1)
    log_terms = (
        special.gammaln(r + stays) - special.gammaln(stays + 1) - special.gammaln(r)
        + r * math.log(advance) + stays * math.log(stay)
    )
    return float(np.exp(log_terms).sum())


@dataclass(frozen=True)
class EventFrequency:
    estimate: float
    standard_error: float
    half_width: float


@dataclass(frozen=True)
class DecouplingEstimate:
    """covered - событие, которое считает граница; split - фактическое расхождение блужданий."""

    covered: EventFrequency
    split: EventFrequency
    trials: int


def _frequency(hits: int, trials: int) -> EventFrequency:
    p = hits / trials
    se = math.sqrt(p * (1 - p) / trials)
    return EventFrequency(estimate=p, standard_error=se, half_width=float(stats.norm.ppf(0.975) * se))


def decoupling_probability_mc(n: int, d: int, k: int, trials: int, seed=0, chunk: int = 50_000) -> DecouplingEstimate:
    """
    Монте-Карло для связанной пары блужданий из q1 и q2 вдоль одного пути длины k.

    Оба блуждания делают общие ходы: прыжок в D (1/2), продвижение (1/(2d)),
    иначе остаются на месте. После прыжка в D обе копии совпадают до конца.
    Считаются два события: covered (весь путь без D и не меньше n-2 продвижений)
    и split (копия из q2 вошла в сток из q_{n-2}, копия из q1 еще в q_{n-2}).
    """
    if trials < 1:
        raise InvalidParameterError(f"Число испытаний должно быть положительным, получено {trials}")
    rng = np.random.default_rng(as_seed_sequence(seed))
    advance = 1.0 / (2 * d)
    # позиции на пути q1..q_{n-2}, s; индекс стока n-2
    sink = n - 2
    covered_hits = split_hits = 0
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        u = rng.random((size, k))
        jumps = u < 0.5
        advances = (u >= 0.5) & (u < 0.5 + advance)
        covered_hits += int((~jumps.any(axis=1) & (advances.sum(axis=1) >= n - 2)).sum())

        walk1 = np.zeros(size, dtype=np.int64)
        walk2 = np.ones(size, dtype=np.int64)
        on_path = np.ones(size, dtype=bool)
        split = np.zeros(size, dtype=bool)
        for step in range(k):
            live = on_path & ~split
            on_path &= ~(live & jumps[:, step])
            moving = live & advances[:, step]
            walk1[moving] += 1
            walk2[moving] += 1
            split |= moving & (walk2 == sink) & (walk1 == sink - 1)
        split_hits += int(split.sum())
    return DecouplingEstimate(
        covered=_frequency(covered_hits, trials),
        split=_frequency(split_hits, trials),
        trials=trials,
    )
