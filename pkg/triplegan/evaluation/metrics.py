"""Classification error and the metrics CSV row."""

from __future__ import annotations

from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from triplegan.data.synthetic import Dataset

METRICS_COLUMNS = (
    "iter",
    "loss_d",
    "loss_g",
    "loss_c_adv",
    "r_c",
    "r_p",
    "r_u",
    "err_val_student",
    "err_val_teacher",
    "alpha_p_eff",
    "alpha_u_eff",
    "time_ms",
)


class Predictor(Protocol):
    def predict(self, x: np.ndarray) -> np.ndarray: ...


def error_rate(predictor: Predictor, dataset: Dataset) -> float:
    """Fraction of eval-mode argmax predictions that miss the label."""
    if len(dataset) == 0:
        return 0.0
    predictions = predictor.predict(dataset.features)
    return float(np.mean(predictions != dataset.labels))


class MetricsRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    iter: int = Field(ge=0)
    loss_d: float = 0.0
    loss_g: float = 0.0
    loss_c_adv: float = 0.0
    r_c: float = 0.0
    r_p: float = 0.0
    r_u: float = 0.0
    err_val_student: float = Field(default=0.0, ge=0, le=1)
    err_val_teacher: float = Field(default=0.0, ge=0, le=1)
    alpha_p_eff: float = 0.0
    alpha_u_eff: float = 0.0
    time_ms: float = 0.0

    @staticmethod
    def csv_header() -> str:
        return ",".join(METRICS_COLUMNS)

    def to_csv(self) -> str:
        values = self.model_dump()
        return ",".join(str(values[c]) if c == "iter" else repr(float(values[c])) for c in METRICS_COLUMNS)

    @classmethod
    def from_csv(cls, line: str) -> MetricsRow:
        fields = line.strip().split(",")
        if len(fields) != len(METRICS_COLUMNS):
            raise ValueError(f"metrics row has {len(fields)} fields, expected {len(METRICS_COLUMNS)}")
        return cls(**dict(zip(METRICS_COLUMNS, fields, strict=True)))
