from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


def canonical_labels(labels: Sequence[int]) -> tuple[int, ...]:
    """Перенумерация классов по наименьшему элементу."""
    mapping: dict[int, int] = {}
    result = []
    for label in labels:
        if label not in mapping:
            mapping[label] = len(mapping)
        result.append(mapping[label])
    return tuple(result)


@dataclass(frozen=True, order=True)
class Partition:
    """
    Разбиение множества состояний.

    class_of[x] - номер класса состояния x в канонической форме; сравнение и
    порядок (для детерминированного выбора при равенстве стоимостей) идут по class_of.
    """
    class_of: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_of", canonical_labels(self.class_of))

    @classmethod
    def from_classes(cls, n: int, classes: Iterable[Iterable[int]]) -> "Partition":
        labels = [-1] * n
        for index, members in enumerate(classes):
            for x in members:
                if labels[x] != -1:
                    raise ValueError(f"Состояние {x} встречается в нескольких классах")
                labels[x] = index
        if -1 in labels:
            raise ValueError(f"Состояние {labels.index(-1)} не покрыто разбиением")
        return cls(tuple(labels))

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls(tuple(range(n)))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls((0,) * n)

    @property
    def n(self) -> int:
        return len(self.class_of)

    @property
    def size(self) -> int:
        return max(self.class_of) + 1 if self.class_of else 0

    @property
    def classes(self) -> tuple[tuple[int, ...], ...]:
        groups: list[list[int]] = [[] for _ in range(self.size)]
        for x, c in enumerate(self.class_of):
            groups[c].append(x)
        return tuple(tuple(g) for g in groups)

    def __getitem__(self, state: int) -> int:
        return self.class_of[state]

    def same_class(self, a: int, b: int) -> bool:
        return self.class_of[a] == self.class_of[b]

    def separates(self, a: int, b: int) -> bool:
        return self.class_of[a] != self.class_of[b]

    @cached_property
    def indicator(self) -> np.ndarray:
        """Матрица n x |классов| принадлежности состояний классам."""
        matrix = np.zeros((self.n, self.size), dtype=np.float64)
        matrix[np.arange(self.n), self.class_of] = 1.0
        return matrix

    def format(self, states: Sequence[str]) -> str:
        """Литерал вида "[a b a' b'][s]"."""
        return "".join("[" + " ".join(states[x] for x in group) + "]" for group in self.classes)
