from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

StateId = int
ObservationSymbol = int

ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class POMarkovChain:
    """
    Частично наблюдаемая марковская цепь.

    :param name: Название цепи
    :param states: Метки состояний, индекс метки - StateId
    :param transition: Матрица переходов n x n, строка i - распределение следующего состояния
    :param observation: Наблюдение O(x) для каждого состояния
    :param sink: Индекс стока, если он объявлен
    :param declared_alphabet: Размер алфавита наблюдений, если он задан явно
    """
    name: str
    states: tuple[str, ...]
    transition: np.ndarray
    observation: np.ndarray
    sink: Optional[StateId] = None
    declared_alphabet: Optional[int] = field(default=None)

    def __post_init__(self):
        transition = np.array(self.transition, dtype=np.float64)
        observation = np.array(self.observation, dtype=np.int64)
        transition.setflags(write=False)
        observation.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "observation", observation)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def alphabet_size(self) -> int:
        if self.declared_alphabet is not None:
            return self.declared_alphabet
        return int(self.observation.max()) + 1 if self.n else 0

    def index(self, label: str) -> StateId:
        """Индекс состояния по метке."""
        try:
            return self.states.index(label)
        except ValueError:
            raise KeyError(f"Состояние {label!r} отсутствует в цепи {self.name!r}") from None

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Кумулятивные строки; последний элемент каждой строки ровно 1.0."""
        cum = np.cumsum(self.transition, axis=1)
        totals = cum[:, -1:].copy()
        totals[totals == 0] = 1.0
        cum = cum / totals
        cum[:, -1] = 1.0
        cum.setflags(write=False)
        return cum

    @cached_property
    def cumulative_rows(self) -> list[list[float]]:
        """Те же строки в виде списков для bisect во внутренних циклах."""
        return [row.tolist() for row in self.cumulative]

    def sample_next(self, states: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Векторный шаг: для каждого состояния выбирает потомка по равномерному числу."""
        rows = self.cumulative[states]
        return np.minimum((uniforms[:, None] >= rows).sum(axis=1), self.n - 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, POMarkovChain):
            return NotImplemented
        return (
            self.name == other.name
            and self.states == other.states
            and self.sink == other.sink
            and self.alphabet_size == other.alphabet_size
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.observation, other.observation)
        )

    def __hash__(self) -> int:
        return hash((self.name, self.states, self.sink))
