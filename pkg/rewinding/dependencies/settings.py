import os
from functools import lru_cache

from pydantic import BaseModel, Field

from rewinding.services.experiments import ExperimentService
from rewinding.storage import FileChainRepository, ReportRepository
from rewinding.utils.logger import setup_logger

logger = setup_logger("rewinding.dependencies.settings")


class Settings(BaseModel):
    """Настройки из переменных окружения."""
    log_level: str = "INFO"
    log_dir: str | None = None
    trials: int = Field(1000, ge=0)
    seed: int = 0
    workers: int = Field(1, ge=1)
    enumeration_cap: int = Field(10_000_000, ge=1)
    partition_cap: int = Field(10, ge=1)
    materialize_cap: int = Field(200_000, ge=1)
    t_children: int = Field(3, ge=1)

    class Config:
        extra = "forbid"


@lru_cache
def get_settings() -> Settings:
    """Функция-зависимость для получения настроек."""
    settings = Settings(
        log_level=os.getenv("REWINDING_LOG_LEVEL", "INFO"),
        log_dir=os.getenv("REWINDING_LOG_DIR"),
        trials=int(os.getenv("REWINDING_TRIALS", "1000")),
        seed=int(os.getenv("REWINDING_SEED", "0")),
        workers=int(os.getenv("REWINDING_WORKERS", "1")),
        enumeration_cap=int(os.getenv("REWINDING_ENUMERATION_CAP", "10000000")),
        partition_cap=int(os.getenv("REWINDING_PARTITION_CAP", "10")),
        materialize_cap=int(os.getenv("REWINDING_MATERIALIZE_CAP", "200000")),
        t_children=int(os.getenv("REWINDING_T_CHILDREN", "3")),
    )
    logger.debug(f"Загружены настройки: {settings}")
    return settings


def get_chain_repository():
    """Функция-зависимость для получения хранилища цепей."""
    return FileChainRepository()


def get_report_repository():
    """Функция-зависимость для получения хранилища отчетов."""
    return ReportRepository()


def get_experiment_service(settings: Settings | None = None) -> ExperimentService:
    """Функция-зависимость для получения сервиса экспериментов."""
    return ExperimentService(settings or get_settings())
