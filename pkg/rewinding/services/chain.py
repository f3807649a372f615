"""Проверка цепей, распознавание канонической формы и построители цепей-примеров."""
from typing import Optional

import numpy as np

from rewinding.models.chain import ROW_SUM_TOLERANCE, POMarkovChain, StateId
from rewinding.schemas.chain import RowViolation, ValidationReport
from rewinding.utils.errors import InvalidParameterError
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.services.chain")


def validate(chain: POMarkovChain) -> ValidationReport:
    """
    Проверка инвариантов цепи. Ошибки не бросаются, все нарушения попадают в отчет.

    :param chain: Проверяемая цепь
    :return: Отчет; ok истинно, только если нарушений нет
    """
    P = chain.transition
    row_sums = []
    negatives = []
    for i, row in enumerate(P):
        total = float(row.sum())
        if not np.isfinite(total) or abs(total - 1.0) > ROW_SUM_TOLERANCE:
            row_sums.append(RowViolation(row=i, state=chain.states[i], detail=f"сумма строки {total!r}"))
        bad = np.flatnonzero((row < 0) | (row > 1) | ~np.isfinite(row))
        for j in bad:
            negatives.append(
                RowViolation(row=i, state=chain.states[i], detail=f"элемент [{i}][{j}] = {row[j]!r} вне [0, 1]")
            )

    sink_violations = []
    if chain.sink is not None:
        s = chain.sink
        if P[s, s] != 1.0:
            sink_violations.append(f"переход {chain.states[s]}->{chain.states[s]} равен {P[s, s]!r}, а не 1")
        leaks = [chain.states[j] for j in np.flatnonzero(P[s]) if j != s]
        if leaks:
            sink_violations.append(f"из стока есть переходы в {leaks}")

    observation_violations = []
    symbols = chain.observation
    if symbols.size and symbols.min() < 0:
        observation_violations.append("отрицательный символ наблюдения")
    if symbols.size and symbols.max() >= chain.alphabet_size:
        observation_violations.append(
            f"символ {int(symbols.max())} вне алфавита размера {chain.alphabet_size}"
        )

    ok = not (row_sums or negatives or sink_violations or observation_violations)
    canonical, sink = is_canonical(chain) if ok else (False, None)
    report = ValidationReport(
        ok=ok,
        chain=chain.name,
        row_sum_violations=row_sums,
        negative_entries=negatives,
        sink_violations=sink_violations,
        observation_violations=observation_violations,
        canonical=canonical,
        sink=None if sink is None else chain.states[sink],
    )
    if ok:
        logger.debug(f"Цепь {chain.name!r} прошла проверку")
    else:
        logger.warning(
            f"Цепь {chain.name!r} не прошла проверку: строк {len(row_sums)}, "
            f"элементов {len(negatives)}, сток {len(sink_violations)}"
        )
    return report


def has_absorbing_indicator_sink(chain: POMarkovChain, s: StateId) -> bool:
    """Условия канонической формы для состояния s: поглощающая строка и индикаторное наблюдение."""
    row = chain.transition[s]
    absorbing = row[s] == 1.0 and np.count_nonzero(row) == 1
    indicator = all((chain.observation[x] == 1) == (x == s) for x in range(chain.n))
    return bool(absorbing and indicator and chain.alphabet_size <= 2)


def is_canonical(chain: POMarkovChain) -> tuple[bool, Optional[StateId]]:
    """Каноническая цепь: объявленный поглощающий сток, наблюдение - индикатор стока."""
    if chain.sink is None:
        return False, None
    if has_absorbing_indicator_sink(chain, chain.sink):
        return True, chain.sink
    return False, None


def _chain(name, states, edges, observation, sink=None, alphabet=None) -> POMarkovChain:
    index = {label: i for i, label in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for (src, dst), p in edges.items():
        P[index[src], index[dst]] += p
    return POMarkovChain(
        name=name,
        states=tuple(states),
        transition=P,
        observation=[observation.get(label, 0) for label in states],
        sink=None if sink is None else index[sink],
        declared_alphabet=alphabet,
    )


def build_intro_chain() -> POMarkovChain:
    """Вводная цепь: a и a' неразличимы пассивным наблюдением."""
    edges = {
        ("a", "a"): 0.5, ("a", "b"): 0.5,
        ("b", "s"): 1.0,
        ("s", "s"): 1.0,
        ("b'", "b'"): 0.5, ("b'", "s"): 0.5,
        ("a'", "b'"): 1.0,
    }
    return _chain("intro", ["a", "b", "s", "b'", "a'"], edges, {"s": 1}, sink="s")


def build_example1_chain(d: int) -> POMarkovChain:
    """
    Цепь примера 1 с параметром d.

    :param d: Параметр, d >= 2
    """
    if d < 2:
        logger.error(f"Недопустимый параметр d={d}")
        raise InvalidParameterError(f"d должно быть не меньше 2, получено {d}")
    inv = 1.0 / d
    edges = {
        ("a", "b"): 1.0,
        ("b", "a"): 1.0 - inv, ("b", "s"): inv,
        ("a'", "a'"): inv, ("a'", "b'"): 1.0 - inv,
        ("b'", "a'"): 1.0 - inv, ("b'", "s"): inv,
        ("s", "s"): 1.0,
    }
    return _chain(f"example1-d{d}", ["a", "b", "a'", "b'", "s"], edges, {"s": 1}, sink="s")


def gap_state_labels(n: int) -> list[str]:
    return [f"q{i}" for i in range(1, n - 1)] + ["D", "s"]


def build_gap_chain(n: int, d: int) -> POMarkovChain:
    """Gap-цепь: q1..q_{n-2}, фиктивное состояние D и сток."""
    if n < 4:
        logger.error(f"Недопустимый параметр n={n}")
        raise InvalidParameterError(f"n должно быть не меньше 4, получено {n}")
    if d < 2:
        logger.error(f"Недопустимый параметр d={d}")
        raise InvalidParameterError(f"d должно быть не меньше 2, получено {d}")
    labels = gap_state_labels(n)
    walk = labels[: n - 2] + ["s"]
    edges = {("D", "s"): 1.0, ("s", "s"): 1.0}
    for i in range(n - 2):
        edges[(walk[i], walk[i])] = (1.0 - 1.0 / d) / 2
        edges[(walk[i], walk[i + 1])] = 1.0 / (2 * d)
        edges[(walk[i], "D")] = 0.5
    return _chain(f"gap-n{n}-d{d}", labels, edges, {"s": 1}, sink="s")


def build_acyclicity_chain(m: int) -> POMarkovChain:
    """
    Цепь проверки ацикличности: сторона YES - слои l1..lm, сторона NO - цикл v_U <-> v_D.

    Наблюдаем только lm; lm сделан поглощающим, чтобы строки оставались стохастическими.
    """
    if m < 2:
        logger.error(f"Недопустимый параметр m={m}")
        raise InvalidParameterError(f"m должно быть не меньше 2, получено {m}")
    layers = [f"l{i}" for i in range(1, m + 1)]
    edges = {("x_YES", layer): 1.0 / m for layer in layers}
    for here, there in zip(layers, layers[1:]):
        edges[(here, there)] = 1.0
    edges[(layers[-1], layers[-1])] = 1.0
    edges.update({("x_NO", "v_U"): 0.5, ("x_NO", "v_D"): 0.5, ("v_U", "v_D"): 1.0, ("v_D", "v_U"): 1.0})
    states = ["x_YES", *layers, "x_NO", "v_U", "v_D"]
    return _chain(f"acyclicity-m{m}", states, edges, {layers[-1]: 1})


# Символы двунаправленного гаджета
PLAIN, FIRST_LAYER, LAST_LAYER, UP, DOWN = range(5)


def build_acyclicity_chain_bidirectional(m: int) -> POMarkovChain:
    """
    Двунаправленный гаджет: пути l_i -> d_i -> l_{i+1} и l_i -> u_i -> l_{i-1}.

    На границах недостающая половина массы уходит в петлю.
    Наблюдения: 0 - прочие, 1 - l1, 2 - lm, 3 - u-состояния, 4 - d-состояния.
    """
    if m < 2:
        logger.error(f"Недопустимый параметр m={m}")
        raise InvalidParameterError(f"m должно быть не меньше 2, получено {m}")
    layers = [f"l{i}" for i in range(1, m + 1)]
    downs = [f"d{i}" for i in range(1, m)]
    ups = [f"u{i}" for i in range(2, m + 1)]
    edges = {("x_YES", layer): 1.0 / m for layer in layers}
    for i in range(1, m + 1):
        here = f"l{i}"
        if i < m:
            edges[(here, f"d{i}")] = 0.5
            edges[(f"d{i}", f"l{i + 1}")] = 1.0
        else:
            edges[(here, here)] = edges.get((here, here), 0.0) + 0.5
        if i > 1:
            edges[(here, f"u{i}")] = 0.5
            edges[(f"u{i}", f"l{i - 1}")] = 1.0
        else:
            edges[(here, here)] = edges.get((here, here), 0.0) + 0.5

    no_side = ["x_NO", "v_U", "v_D", "d_U", "u_U", "d_D", "u_D"]
    edges.update({
        ("x_NO", "v_U"): 0.5, ("x_NO", "v_D"): 0.5,
        ("v_U", "d_U"): 0.5, ("v_U", "u_U"): 0.5, ("d_U", "v_D"): 1.0, ("u_U", "v_D"): 1.0,
        ("v_D", "d_D"): 0.5, ("v_D", "u_D"): 0.5, ("d_D", "v_U"): 1.0, ("u_D", "v_U"): 1.0,
    })
    observation = {layers[0]: FIRST_LAYER, layers[-1]: LAST_LAYER}
    observation.update({label: UP for label in ups + ["u_U", "u_D"]})
    observation.update({label: DOWN for label in downs + ["d_U", "d_D"]})
    states = ["x_YES", *layers, *downs, *ups, *no_side]
    return _chain(f"acyclicity-bidirectional-m{m}", states, edges, observation, alphabet=5)


def build_three_state_chain() -> POMarkovChain:
    """Трехсостоянийная цепь с алфавитом из трех символов для примера сведения."""
    edges = {("s1", "s2"): 1.0, ("s2", "s1"): 0.5, ("s2", "s3"): 0.5, ("s3", "s1"): 1.0}
    return _chain("three-state", ["s1", "s2", "s3"], edges, {"s1": 0, "s2": 1, "s3": 1}, alphabet=3)


def random_chain(n: int, rng: np.random.Generator, canonical: bool = True, sparsity: float = 0.3) -> POMarkovChain:
    """
    Случайная цепь для свойств и экспериментов.

    :param canonical: Если истинно, последнее состояние - поглощающий наблюдаемый сток
    :param sparsity: Доля обнуляемых переходов
    """
    P = rng.random((n, n))
    P[rng.random((n, n)) < sparsity] = 0.0
    empty = P.sum(axis=1) == 0
    P[empty, rng.integers(0, n, size=int(empty.sum()))] = 1.0
    P /= P.sum(axis=1, keepdims=True)
    observation = np.zeros(n, dtype=np.int64)
    sink = None
    if canonical:
        sink = n - 1
        P[sink] = 0.0
        P[sink, sink] = 1.0
        observation[sink] = 1
    else:
        observation = rng.integers(0, 2, size=n)
        observation[0] = 0
    states = tuple(f"x{i}" for i in range(n - 1)) + (("s",) if canonical else (f"x{n - 1}",))
    return POMarkovChain(name=f"random-{n}", states=states, transition=P, observation=observation, sink=sink)


BUILDERS = {
    "intro": build_intro_chain,
    "example1": build_example1_chain,
    "gap": build_gap_chain,
    "acyclicity": build_acyclicity_chain,
    "acyclicity-bidirectional": build_acyclicity_chain_bidirectional,
    "three-state": build_three_state_chain,
}


def resolve_state(chain: POMarkovChain, label: str) -> StateId:
    """Индекс состояния по метке из командной строки."""
    try:
        return chain.index(label)
    except KeyError:
        logger.error(f"Состояние {label!r} отсутствует в цепи {chain.name!r}")
        raise InvalidParameterError(f"Состояние {label!r} отсутствует в цепи {chain.name!r}") from None
