"""Coefficient schedules and the hyperparameters of the three-player game."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from triplegan.core.settings import Config, RegularizerKind, ScheduleKind

RAMPUP_SHARPNESS = 5.0


class Schedule(BaseModel):
    """0 before ``start``; then ``max_value·exp(-5(1-x)²)`` while x = progress through the ramp-up goes 0→1."""

    model_config = ConfigDict(frozen=True)

    kind: ScheduleKind = "constant"
    max_value: float = Field(default=1.0, ge=0)
    rampup: int = Field(default=0, ge=0)
    start: int = Field(default=0, ge=0)

    def value(self, iteration: int) -> float:
        if iteration < 0:
            raise ValueError(f"iteration must be >= 0, got {iteration}")
        if iteration < self.start:
            return 0.0
        if self.kind == "constant" or self.rampup == 0:
            return self.max_value
        x = min(1.0, (iteration - self.start) / self.rampup)
        return self.max_value * math.exp(-RAMPUP_SHARPNESS * (1.0 - x) ** 2)


def schedule_value(schedule: Schedule, iteration: int) -> float:
    return schedule.value(iteration)


class GameHyperparams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = 0.5
    alpha_p: Schedule = Schedule(kind="constant", max_value=0.0)
    alpha_u: Schedule = Schedule(kind="constant", max_value=0.0)
    batch_d: int = Field(default=32, ge=1)
    batch_c: int = Field(default=64, ge=1)
    batch_g: int = Field(default=64, ge=1)
    regularizer: RegularizerKind = "none"
    ema_decay: float = Field(default=0.99, ge=0, lt=1)
    generator_loss: Literal["minimax", "nonsaturating"] = "minimax"
    pseudo_fraction: float = Field(default=0.5, ge=0, le=1)
    label_source: Literal["auto", "student", "teacher"] = "auto"
    regime: Literal["semi", "low_data"] = "semi"
    iters: int = Field(default=3000, ge=0)
    pretrain_iters: int = Field(default=300, ge=0)
    lr_rampup: Schedule = Schedule(kind="constant", max_value=1.0)

    @field_validator("alpha")
    @classmethod
    def _alpha_open_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("α ∈ (0,1)")
        return value

    @property
    def uses_unlabeled(self) -> bool:
        return self.regime == "semi"

    @property
    def uses_teacher_labels(self) -> bool:
        if self.label_source == "auto":
            return self.regularizer == "mean_teacher"
        return self.label_source == "teacher"

    def alpha_p_at(self, iteration: int) -> float:
        return self.alpha_p.value(iteration)

    def alpha_u_at(self, iteration: int) -> float:
        if not self.uses_unlabeled or self.regularizer == "none":
            return 0.0
        return self.alpha_u.value(iteration)

    @classmethod
    def from_config(cls, config: Config) -> GameHyperparams:
        game = config.game
        lr_ramp = (
            Schedule(kind="sigmoid_rampup", max_value=1.0, rampup=config.optim.lr_rampup)
            if config.optim.lr_rampup
            else Schedule(kind="constant", max_value=1.0)
        )
        return cls(
            alpha=game.alpha,
            alpha_p=Schedule(
                kind=game.alpha_p_kind,
                max_value=game.alpha_p_max,
                rampup=game.alpha_p_rampup,
                start=game.alpha_p_start,
            ),
            alpha_u=Schedule(
                kind=game.alpha_u_kind,
                max_value=game.alpha_u_max,
                rampup=game.alpha_u_rampup,
                start=game.alpha_u_start,
            ),
            batch_d=game.batch_d,
            batch_c=game.batch_c,
            batch_g=game.batch_g,
            regularizer=game.regularizer,
            ema_decay=game.ema_decay,
            generator_loss=game.generator_loss,
            pseudo_fraction=game.pseudo_fraction,
            label_source=game.label_source,
            regime=config.data.regime,
            iters=config.run.iters,
            pretrain_iters=config.pretrain_iters,
            lr_rampup=lr_ramp,
        )
