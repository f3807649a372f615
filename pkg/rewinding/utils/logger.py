import logging
import os
import sys
from datetime import datetime
from pathlib import Path

# Настройка форматирования логов
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = os.getenv("REWINDING_LOG_LEVEL", "INFO").upper()

# Директория для логов задается только через окружение
LOG_DIR = os.getenv("REWINDING_LOG_DIR")


def _log_file() -> Path:
    log_dir = Path(LOG_DIR)
    os.makedirs(log_dir, exist_ok=True)
    return log_dir / f"rewinding_{datetime.now().strftime('%Y-%m-%d')}.log"


def setup_logger(name=None):
    """
    Настраивает и возвращает логгер с заданным именем.

    Консольный вывод идет в stderr, чтобы stdout оставался чистым для JSON-отчетов.

    Args:
        name: Имя логгера (если None, возвращается корневой логгер)

    Returns:
        Настроенный объект логгера
    """
    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL)

    # Добавляем обработчики к логгеру, если их еще нет
    if not logger.handlers:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(console_handler)

        if LOG_DIR:
            file_handler = logging.FileHandler(_log_file(), encoding="utf-8")
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            logger.addHandler(file_handler)

    # Отключаем распространение логов, чтобы избежать дублирования
    logger.propagate = False

    return logger


def set_level(level: str) -> None:
    """Меняет уровень всех уже созданных логгеров пакета (флаг --log-level)."""
    for name in list(logging.Logger.manager.loggerDict):
        if name.startswith("rewinding"):
            logging.getLogger(name).setLevel(level.upper())
