from abc import ABC, abstractmethod
from typing import Generator

import numpy as np

from rewinding.models.tree import Verdict

# Протокол стратегии: генератор отдает индекс вершины для расширения,
# получает наблюдение нового потомка и возвращает вердикт через return.
StrategyPlay = Generator[int, int, Verdict]


class AdaptiveStrategy(ABC):
    """
    Абстрактный интерфейс адаптивной стратегии с откатом.

    Решения зависят только от видимых данных (форма дерева и наблюдения)
    и от явно переданного генератора. Каждый вызов play создает новый
    генератор, поэтому один объект стратегии можно запускать в разных испытаниях.
    """
    name: str = "strategy"

    @abstractmethod
    def play(self, root_observation: int, rng: np.random.Generator) -> StrategyPlay:
        """
        Запуск стратегии.

        :param root_observation: Наблюдение корня
        :param rng: Генератор собственных монет стратегии
        :return: Генератор запросов; новая вершина получает следующий свободный индекс
        """
        pass


class PlanDecision(ABC):
    """Решающее правило неадаптивного плана по полному вектору наблюдений."""

    @abstractmethod
    def __call__(self, observations: np.ndarray) -> Verdict:
        pass


class NodeCounter:
    """
    Счетчик вершин видимого дерева внутри генератора стратегии.

    Использование: child, observation = yield from counter.extend(node)
    """

    def __init__(self, size: int = 1):
        self.size = size

    def extend(self, node: int) -> Generator[int, int, tuple[int, int]]:
        observation = yield node
        self.size += 1
        return self.size - 1, observation
