from datetime import datetime, timezone
from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

TOOL_VERSION = "0.3.0"

ExperimentName = Literal["intro", "example1", "gap", "decouple", "reduction", "planner", "oracle", "identify"]


class TranscriptNode(BaseModel):
    parent: int
    observation: int
    hidden: Optional[str] = None

    class Config:
        extra = "forbid"


class TranscriptDump(BaseModel):
    """Транскрипт одного запуска; скрытые состояния только при --reveal."""
    chain: str
    strategy: str
    seed: int
    verdict: Optional[str]
    queries: int
    nodes: list[TranscriptNode]
    root_state: Optional[str] = None

    class Config:
        extra = "forbid"


class PlanReport(BaseModel):
    chain: str
    a: str
    b: str
    method: str
    path: list[str]
    weights: list[float]
    cost: float
    k: int
    epsilon: float
    degrees: list[int]
    total_queries: int

    class Config:
        extra = "forbid"


class GapRunStats(BaseModel):
    """Статистика одного запуска адаптивного различителя gap-цепи."""
    path_lengths: list[int]
    total_queries: int
    verdict: Optional[str]
    mean_length: Optional[float] = None
    threshold: float
    aborted: bool = False

    class Config:
        extra = "forbid"


class ReductionReport(BaseModel):
    source_success: float
    target_success: float
    success_difference: float
    source_mean_queries: float
    target_mean_queries: float
    overhead_ratio: float
    trials: int
    alphabet_size: int

    class Config:
        extra = "forbid"


class ExperimentReport(BaseModel):
    """Отчет эксперимента; при том же сиде совпадает побитно, кроме created_at."""
    experiment: ExperimentName
    parameters: dict[str, Any]
    records: list[dict[str, Any]]
    aggregates: dict[str, Any]
    seed: int
    tool_version: str = TOOL_VERSION
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    class Config:
        extra = "forbid"
