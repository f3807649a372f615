from typing import Optional

from pydantic import BaseModel, Field, model_validator


class ChainDocument(BaseModel):
    """Файл цепи. Порядок состояний - порядок объявления."""
    name: str
    states: list[str] = Field(min_length=1)
    transition: list[list[float]]
    observation: list[int]
    sink: Optional[str] = None
    alphabet_size: Optional[int] = Field(default=None, ge=1)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_shapes(self):
        n = len(self.states)
        if len(set(self.states)) != n:
            raise ValueError("states: метки состояний повторяются")
        if len(self.transition) != n:
            raise ValueError(f"transition: ожидается {n} строк, получено {len(self.transition)}")
        for i, row in enumerate(self.transition):
            if len(row) != n:
                raise ValueError(f"transition[{i}]: ожидается {n} элементов, получено {len(row)}")
        if len(self.observation) != n:
            raise ValueError(f"observation: ожидается {n} символов, получено {len(self.observation)}")
        if self.sink is not None and self.sink not in self.states:
            raise ValueError(f"sink: состояние {self.sink!r} не объявлено")
        return self


class RowViolation(BaseModel):
    row: int
    state: str
    detail: str


class ValidationReport(BaseModel):
    """Результат проверки инвариантов цепи."""
    ok: bool
    chain: str
    row_sum_violations: list[RowViolation] = []
    negative_entries: list[RowViolation] = []
    sink_violations: list[str] = []
    observation_violations: list[str] = []
    canonical: bool = False
    sink: Optional[str] = None

    class Config:
        extra = "forbid"
