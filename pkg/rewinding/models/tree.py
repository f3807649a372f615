from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from rewinding.models.chain import ObservationSymbol, StateId

# None - воздержание от ответа, он всегда засчитывается как ошибка
Verdict = Optional[StateId]
ABSTAIN: Verdict = None


@dataclass
class QueryTree:
    """
    Дерево запросов: вершина t создана после своего родителя, корень имеет родителя -1.

    :param parent: Родители вершин в порядке создания
    :param hidden: Скрытые состояния вершин
    :param observation: Наблюдения O(hidden[t])
    """
    parent: list[int] = field(default_factory=list)
    hidden: list[StateId] = field(default_factory=list)
    observation: list[ObservationSymbol] = field(default_factory=list)

    @classmethod
    def from_arrays(cls, parent, hidden, observation) -> "QueryTree":
        return cls(list(map(int, parent)), list(map(int, hidden)), list(map(int, observation)))

    @property
    def root_state(self) -> StateId:
        return self.hidden[0]

    @property
    def size(self) -> int:
        return len(self.parent)

    @property
    def queries(self) -> int:
        """Число запросов T: корень бесплатный."""
        return max(self.size - 1, 0)

    def add(self, parent: int, hidden: StateId, observation: ObservationSymbol) -> int:
        self.parent.append(parent)
        self.hidden.append(hidden)
        self.observation.append(observation)
        return len(self.parent) - 1

    def rewind_amounts(self) -> list[int]:
        """Функция отката A: A_t = t - parent(t+1)."""
        return rewind_amounts(self.parent)

    def shape(self) -> tuple[int, ...]:
        return tuple(self.parent[1:])


def rewind_amounts(parent) -> list[int]:
    return [t - int(parent[t + 1]) for t in range(len(parent) - 1)]


def parents_from_rewind_amounts(amounts) -> list[int]:
    """Обратное преобразование: parent(t+1) = t - A_t."""
    parent = [-1]
    for t, amount in enumerate(amounts):
        if not 0 <= amount <= t:
            raise ValueError(f"Откат {amount} на шаге {t} выходит за корень")
        parent.append(t - amount)
    return parent


def validate_parents(parent) -> np.ndarray:
    """Проверяет массив родителей неадаптивного плана: parent[t] < t для t >= 1."""
    array = np.asarray(parent, dtype=np.int64)
    if array.ndim != 1:
        raise ValueError("Массив родителей должен быть одномерным")
    if array.size == 0:
        raise ValueError("План должен содержать корень")
    if array[0] != -1:
        raise ValueError(f"Родитель корня должен быть -1, получено {array[0]}")
    index = np.arange(array.size)
    bad = np.flatnonzero((array[1:] < 0) | (array[1:] >= index[1:])) + 1
    if bad.size:
        raise ValueError(f"Некорректные родители у вершин {bad[:5].tolist()}")
    return array


@dataclass(frozen=True, eq=False)
class NonAdaptivePlan:
    """
    Неадаптивный план: форма дерева фиксирована до выборки.

    :param parent: Родители вершин, parent[0] = -1
    :param decision: Функция от вектора наблюдений к вердикту
    :param name: Имя плана для отчетов
    """
    parent: np.ndarray
    decision: Callable[[np.ndarray], Verdict]
    name: str = "plan"

    def __post_init__(self):
        parent = validate_parents(self.parent)
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)

    @property
    def size(self) -> int:
        return int(self.parent.size)

    @property
    def queries(self) -> int:
        return self.size - 1

    @cached_property
    def depth(self) -> np.ndarray:
        parent = self.parent.tolist()
        depth = [0] * self.size
        for t in range(1, self.size):
            depth[t] = depth[parent[t]] + 1
        return np.asarray(depth, dtype=np.int64)

    @cached_property
    def levels(self) -> list[np.ndarray]:
        """Вершины, сгруппированные по глубине, начиная с глубины 1."""
        depth = self.depth
        return [np.flatnonzero(depth == h) for h in range(1, int(depth.max(initial=0)) + 1)]
