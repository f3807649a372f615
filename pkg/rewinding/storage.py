import json
import os
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from rewinding.interfaces.repository import ChainRepositoryInterface, ReportRepositoryInterface
from rewinding.models.chain import POMarkovChain
from rewinding.schemas.chain import ChainDocument
from rewinding.utils.errors import ChainFormatError
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.storage")


def _format_float(value: float) -> str:
    # 17 значащих цифр восстанавливают double без потерь
    return format(float(value), ".17g")


def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc) or "<document>"


class FileChainRepository(ChainRepositoryInterface):
    """Хранилище цепей в виде JSON-файлов с каноническим порядком ключей."""

    @staticmethod
    def to_document(chain: POMarkovChain) -> ChainDocument:
        return ChainDocument(
            name=chain.name,
            states=list(chain.states),
            transition=chain.transition.tolist(),
            observation=chain.observation.tolist(),
            sink=None if chain.sink is None else chain.states[chain.sink],
            alphabet_size=chain.alphabet_size,
        )

    def dumps(self, chain: POMarkovChain) -> str:
        """Текстовая форма: name, states, transition, observation, sink, alphabet_size."""
        doc = self.to_document(chain)
        rows = ",\n".join(
            "    [" + ", ".join(_format_float(p) for p in row) + "]" for row in doc.transition
        )
        return (
            "{\n"
            f'  "name": {json.dumps(doc.name, ensure_ascii=False)},\n'
            f'  "states": {json.dumps(doc.states, ensure_ascii=False)},\n'
            f'  "transition": [\n{rows}\n  ],\n'
            f'  "observation": {json.dumps(doc.observation)},\n'
            f'  "sink": {json.dumps(doc.sink, ensure_ascii=False)},\n'
            f'  "alphabet_size": {doc.alphabet_size}\n'
            "}\n"
        )

    def loads(self, text: str, source: str = "<string>") -> POMarkovChain:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            logger.error(f"Ошибка декодирования JSON в {source}: строка {e.lineno}, столбец {e.colno}")
            raise ChainFormatError(f"некорректный JSON в строке {e.lineno}, столбце {e.colno}: {e.msg}") from e
        try:
            doc = ChainDocument.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            field = _field_path(first["loc"])
            logger.error(f"Ошибка формата цепи в {source}: {field}: {first['msg']}")
            raise ChainFormatError(first["msg"], field=field) from e
        return self.from_document(doc)

    @staticmethod
    def from_document(doc: ChainDocument) -> POMarkovChain:
        sink = None if doc.sink is None else doc.states.index(doc.sink)
        return POMarkovChain(
            name=doc.name,
            states=tuple(doc.states),
            transition=doc.transition,
            observation=doc.observation,
            sink=sink,
            declared_alphabet=doc.alphabet_size,
        )

    def read_chain(self, path: Path | str) -> POMarkovChain:
        """Загрузить цепь из файла."""
        logger.debug(f"Загрузка цепи из файла: {path}")
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        chain = self.loads(text, source=str(path))
        logger.info(f"Загружена цепь {chain.name!r} с {chain.n} состояниями")
        return chain

    def write_chain(self, chain: POMarkovChain, path: Path | str) -> None:
        """Сохранить цепь в файл."""
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps(chain))
        logger.info(f"Цепь {chain.name!r} сохранена в {path}")


class ReportRepository(ReportRepositoryInterface):
    """Запись отчетов и вспомогательных JSON-файлов."""

    def write_report(self, report: BaseModel, path: Path | str | None) -> str:
        text = report.model_dump_json(indent=2) + "\n"
        if path is not None:
            self._write(path, text)
            logger.info(f"Отчет {type(report).__name__} сохранен в {path}")
        return text

    def write_json(self, data: dict[str, Any], path: Path | str) -> None:
        self._write(path, json.dumps(data, ensure_ascii=False, indent=2) + "\n")
        logger.info(f"JSON сохранен в {path}")

    @staticmethod
    def _write(path: Path | str, text: str) -> None:
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
