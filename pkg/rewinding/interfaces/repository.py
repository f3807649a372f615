from abc import ABC, abstractmethod
from pathlib import Path

from pydantic import BaseModel

from rewinding.models.chain import POMarkovChain


class ChainRepositoryInterface(ABC):
    """Абстрактный интерфейс для хранилищ цепей."""

    @abstractmethod
    def read_chain(self, path: Path | str) -> POMarkovChain:
        """Загрузить цепь."""
        pass

    @abstractmethod
    def write_chain(self, chain: POMarkovChain, path: Path | str) -> None:
        """Сохранить цепь."""
        pass

    @abstractmethod
    def dumps(self, chain: POMarkovChain) -> str:
        """Текстовая форма цепи."""
        pass


class ReportRepositoryInterface(ABC):
    """Абстрактный интерфейс для записи отчетов."""

    @abstractmethod
    def write_report(self, report: BaseModel, path: Path | str | None) -> str:
        """Сохранить отчет; без пути вернуть текст для stdout."""
        pass
