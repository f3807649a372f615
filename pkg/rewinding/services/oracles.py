"""Точные оракулы для малых экземпляров: распределение наблюдений, TV планов, перебор планов."""
import math
from itertools import product
from typing import Iterator, Optional, Sequence

import numpy as np

from rewinding.models.chain import POMarkovChain, StateId
from rewinding.models.tree import NonAdaptivePlan, validate_parents
from rewinding.utils.errors import EnumerationCapError
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.services.oracles")

DEFAULT_ENUMERATION_CAP = 10_000_000
_CHUNK = 1 << 18

ObservationVector = tuple[int, ...]


def _parents(plan) -> np.ndarray:
    if isinstance(plan, NonAdaptivePlan):
        return plan.parent
    return validate_parents(plan)


def _check_cap(n: int, nodes: int, cap: int) -> None:
    # сравнение через логарифмы, чтобы не строить огромные целые
    if nodes * math.log(max(n, 1)) > math.log(cap) + 1e-12:
        logger.error(f"Перебор {n}^{nodes} разметок превышает предел {cap}")
        raise EnumerationCapError(f"{n}^{nodes} разметок превышает предел перебора {cap}")


def exact_observation_distribution(
    chain: POMarkovChain,
    plan,
    x0: StateId,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> dict[ObservationVector, float]:
    """
    Точное распределение вектора наблюдений плана.

    Суммирует произведения переходных вероятностей по всем скрытым разметкам
    некорневых вершин и группирует их по вектору наблюдений.

    :param plan: NonAdaptivePlan или массив родителей
    :param cap: Предел числа разметок |Ω|^{#вершин}
    """
    parent = _parents(plan)
    size = parent.size
    n = chain.n
    _check_cap(n, size, cap)
    observation = chain.observation
    if size == 1:
        return {(int(observation[x0]),): 1.0}

    T = size - 1
    base = max(chain.alphabet_size, int(observation.max()) + 1, 2)
    weights = base ** np.arange(size - 1, -1, -1, dtype=np.int64)
    digits = n ** np.arange(T - 1, -1, -1, dtype=np.int64)
    P = chain.transition
    totals: dict[int, float] = {}
    for start in range(0, n**T, _CHUNK):
        index = np.arange(start, min(start + _CHUNK, n**T), dtype=np.int64)
        labels = np.empty((index.size, size), dtype=np.int64)
        labels[:, 0] = x0
        labels[:, 1:] = (index[:, None] // digits[None, :]) % n
        prob = np.ones(index.size)
        for t in range(1, size):
            prob *= P[labels[:, parent[t]], labels[:, t]]
        keep = prob > 0
        if not keep.any():
            continue
        keys = observation[labels[keep]] @ weights
        unique, inverse = np.unique(keys, return_inverse=True)
        sums = np.bincount(inverse, weights=prob[keep])
        for key, value in zip(unique.tolist(), sums.tolist()):
            totals[key] = totals.get(key, 0.0) + value

    distribution = {}
    for key, value in totals.items():
        vector = []
        for _ in range(size):
            key, digit = divmod(key, base)
            vector.append(digit)
        distribution[tuple(reversed(vector))] = value
    return distribution


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(key, 0.0) - q.get(key, 0.0)) for key in keys)


def exact_plan_tv(chain: POMarkovChain, plan, a: StateId, b: StateId, cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """TV между распределениями векторов наблюдений плана из a и из b."""
    if a == b:
        _check_cap(chain.n, _parents(plan).size, cap)
        return 0.0
    return total_variation(
        exact_observation_distribution(chain, plan, a, cap),
        exact_observation_distribution(chain, plan, b, cap),
    )


def iter_parent_arrays(T: int) -> Iterator[list[int]]:
    """Все массивы родителей с T запросами; их T! штук."""
    for choice in product(*(range(t) for t in range(1, T + 1))):
        yield [-1, *choice]


def iter_plans_up_to(max_nodes: int) -> Iterator[list[int]]:
    for T in range(max_nodes):
        yield from iter_parent_arrays(T)


def exhaustive_min_queries(
    chain: POMarkovChain,
    a: StateId,
    b: StateId,
    maxT: int,
    tv_threshold: float = 1 / 3,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> Optional[int]:
    """
    Наименьшее T, при котором некоторый неадаптивный план из T запросов
    дает точную TV не меньше порога; None, если в пределах maxT такого нет.
    """
    _check_cap(chain.n, maxT + 1, cap)
    if math.lgamma(maxT + 1) > math.log(cap):
        logger.error(f"Число планов {maxT}! превышает предел {cap}")
        raise EnumerationCapError(f"{maxT}! планов превышает предел перебора {cap}")
    if a == b:
        return None
    for T in range(maxT + 1):
        for parent in iter_parent_arrays(T):
            tv = exact_plan_tv(chain, parent, a, b, cap)
            if tv >= tv_threshold - 1e-12:
                logger.info(f"Минимальное число запросов {T}, план {parent[1:]}, TV={tv:.6f}")
                return T
    logger.info(f"Ни один план до {maxT} запросов не достигает TV {tv_threshold}")
    return None


def empirical_tv(observations_a: np.ndarray, observations_b: np.ndarray, base: int) -> float:
    """TV между эмпирическими распределениями строк двух матриц наблюдений."""
    weights = base ** np.arange(observations_a.shape[1] - 1, -1, -1, dtype=np.int64)
    keys_a = observations_a @ weights
    keys_b = observations_b @ weights
    unique = np.union1d(keys_a, keys_b)
    freq_a = np.bincount(np.searchsorted(unique, keys_a), minlength=unique.size) / keys_a.size
    freq_b = np.bincount(np.searchsorted(unique, keys_b), minlength=unique.size) / keys_b.size
    return float(0.5 * np.abs(freq_a - freq_b).sum())


def plan_from_parents(parent: Sequence[int], name: str = "enumerated") -> NonAdaptivePlan:
    return NonAdaptivePlan(parent=np.asarray(parent), decision=_no_decision, name=name)


def _no_decision(observations: np.ndarray):
    return None
