"""Run configuration: INI text in, fully validated ``Config`` out.

Only two sources feed a ``Config``: explicit keyword overrides (the CLI's
``--seed``/``--out``) and the INI text handed to ``parse_config``. Environment
variables and dotenv files are never consulted.
"""

from __future__ import annotations

import configparser
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
from typing import Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic.fields import FieldInfo
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from triplegan.core.errors import ConfigError, ConfigParseError

_INI_TEXT: ContextVar[str | None] = ContextVar("_INI_TEXT", default=None)

ScheduleKind = Literal["constant", "sigmoid_rampup"]
RegularizerKind = Literal["none", "entropy", "consistency", "mean_teacher"]


def _split_widths(value: Any) -> Any:
    if isinstance(value, str):
        return [int(part) for part in value.split(",") if part.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataSection(_Section):
    kind: Literal["mixture", "moons", "rings"] = "mixture"
    n_classes: int = Field(default=8, ge=2)
    n_per_class: int = Field(default=250, ge=1)
    n_val_per_class: int = Field(default=100, ge=1)
    n_test_per_class: int = Field(default=100, ge=1)
    radius: float = Field(default=0.75, gt=0)
    sigma: float = Field(default=0.08, ge=0)
    dim: int = Field(default=2, ge=2)
    labels_per_class: int = Field(default=4, ge=1)
    regime: Literal["semi", "low_data"] = "semi"
    seed: int = Field(default=0, ge=0)
    augment: Literal["none", "jitter"] = "none"
    augment_sigma: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check_counts(self) -> DataSection:
        if self.labels_per_class > self.n_per_class:
            raise ValueError("labels_per_class must not exceed n_per_class")
        if self.kind == "moons" and self.n_classes != 2:
            raise ValueError("moons datasets have exactly 2 classes (n_classes = 2)")
        return self


class ModelSection(_Section):
    classifier_widths: list[int] = Field(default_factory=lambda: [128, 128])
    generator_widths: list[int] = Field(default_factory=lambda: [128, 128])
    trunk_widths: list[int] = Field(default_factory=lambda: [128, 64])
    latent_dim: int = Field(default=16, ge=1)
    discriminator: Literal["projection", "concat"] = "projection"
    input_noise: float = Field(default=0.05, ge=0)
    dropout: float = Field(default=0.1, ge=0, lt=1)

    @field_validator("classifier_widths", "generator_widths", "trunk_widths", mode="before")
    @classmethod
    def _comma_separated(cls, value: Any) -> Any:
        return _split_widths(value)

    @field_validator("classifier_widths", "generator_widths", "trunk_widths")
    @classmethod
    def _positive_widths(cls, value: list[int]) -> list[int]:
        if not value or any(width < 1 for width in value):
            raise ValueError("widths must be a non-empty list of positive integers")
        return value


class GameSection(_Section):
    alpha: float = 0.5
    alpha_p_kind: ScheduleKind = "sigmoid_rampup"
    alpha_p_max: float = Field(default=0.3, ge=0)
    alpha_p_start: int = Field(default=1000, ge=0)
    alpha_p_rampup: int = Field(default=500, ge=0)
    alpha_u_kind: ScheduleKind = "sigmoid_rampup"
    alpha_u_max: float = Field(default=10.0, ge=0)
    alpha_u_start: int = Field(default=0, ge=0)
    alpha_u_rampup: int = Field(default=1000, ge=0)
    regularizer: RegularizerKind = "mean_teacher"
    ema_decay: float = Field(default=0.99, ge=0, lt=1)
    pseudo_fraction: float = Field(default=0.5, ge=0, le=1)
    label_source: Literal["auto", "student", "teacher"] = "auto"
    batch_d: int = Field(default=32, ge=1)
    batch_c: int = Field(default=64, ge=1)
    batch_g: int = Field(default=64, ge=1)
    generator_loss: Literal["minimax", "nonsaturating"] = "minimax"

    @field_validator("alpha")
    @classmethod
    def _alpha_open_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("α ∈ (0,1)")
        return value


class OptimSection(_Section):
    c_lr: float = Field(default=3e-4, ge=0)
    c_beta1: float = Field(default=0.5, ge=0, lt=1)
    c_beta2: float = Field(default=0.999, ge=0, lt=1)
    c_eps: float = Field(default=1e-8, gt=0)
    g_lr: float = Field(default=3e-4, ge=0)
    g_beta1: float = Field(default=0.5, ge=0, lt=1)
    g_beta2: float = Field(default=0.999, ge=0, lt=1)
    g_eps: float = Field(default=1e-8, gt=0)
    d_lr: float = Field(default=3e-4, ge=0)
    d_beta1: float = Field(default=0.5, ge=0, lt=1)
    d_beta2: float = Field(default=0.999, ge=0, lt=1)
    d_eps: float = Field(default=1e-8, gt=0)
    lr_rampup: int = Field(default=0, ge=0)  # 0 disables the learning-rate ramp-up


class RunSection(_Section):
    iters: int = Field(default=3000, ge=0)
    pretrain_iters: int | None = Field(default=None, ge=0)  # None → 10% of iters
    checkpoint_interval: int = Field(default=1000, ge=1)
    metrics_interval: int = Field(default=100, ge=1)
    out_dir: str = "runs/default"
    serial: bool = False
    dtype: Literal["f32", "f64"] = "f64"
    prefetch_depth: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def _resolve_pretrain(self) -> RunSection:
        if self.pretrain_iters is None:
            object.__setattr__(self, "pretrain_iters", self.iters // 10)
        if self.pretrain_iters is not None and self.pretrain_iters > self.iters:
            raise ValueError("pretrain_iters must not exceed iters")
        if self.checkpoint_interval % self.metrics_interval:
            raise ValueError("checkpoint_interval must be a multiple of metrics_interval")
        return self


class IniConfigSettingsSource(PydanticBaseSettingsSource):
    """Settings source reading ``[section]`` / ``key = value`` text."""

    def __init__(self, settings_cls: type[BaseSettings], text: str | None) -> None:
        super().__init__(settings_cls)
        self._sections = read_ini(text) if text is not None else {}

    def get_field_value(self, field: FieldInfo, field_name: str) -> tuple[Any, str, bool]:
        return self._sections.get(field_name), field_name, False

    def __call__(self) -> dict[str, Any]:
        return dict(self._sections)


class Config(BaseSettings):
    model_config = SettingsConfigDict(extra="forbid", frozen=True)

    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    game: GameSection = Field(default_factory=GameSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    run: RunSection = Field(default_factory=RunSection)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, IniConfigSettingsSource(settings_cls, _INI_TEXT.get()))

    @property
    def pretrain_iters(self) -> int:
        return self.run.pretrain_iters or 0

    def to_ini(self) -> str:
        """Render every resolved value (defaults included) as INI text."""
        lines: list[str] = []
        for section_name in type(self).model_fields:
            section: BaseModel = getattr(self, section_name)
            lines.append(f"[{section_name}]")
            for key, value in section.model_dump().items():
                if value is None:
                    continue
                lines.append(f"{key} = {_format_value(value)}")
            lines.append("")
        return "\n".join(lines)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def read_ini(text: str) -> dict[str, dict[str, str]]:
    """Parse INI text into ``{section: {key: raw value}}``; errors carry line numbers."""
    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        default_section="__defaults__",
    )
    parser.optionxform = str  # type: ignore[assignment, method-assign]
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("expected a [section] header", exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("expected 'key = value'", line) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigParseError(exc.message, exc.lineno) from exc
    return {name: dict(parser.items(name)) for name in parser.sections()}


@contextmanager
def _ini_text(text: str) -> Iterator[None]:
    token = _INI_TEXT.set(text)
    try:
        yield
    finally:
        _INI_TEXT.reset(token)


def _describe(error: dict[str, Any]) -> str:
    loc = [str(part) for part in error["loc"]]
    if error["type"] == "extra_forbidden":
        if len(loc) == 1:
            return f"unknown section [{loc[0]}]"
        return f"unknown key '{loc[-1]}' in [{loc[0]}]"
    message = str(error["msg"]).removeprefix("Value error, ")
    where = f"[{loc[0]}] {'.'.join(loc[1:])}".strip() if loc else "config"
    return f"invalid value for {where}: {message} (got {error.get('input')!r})"


def parse_config(text: str, **overrides: Any) -> Config:
    """Build a validated Config from INI text; keyword overrides win over the text."""
    with _ini_text(text):
        try:
            return Config(**overrides)
        except ValidationError as exc:
            raise ConfigError("; ".join(_describe(e) for e in exc.errors())) from exc


def load_config(path: str | Path, **overrides: Any) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config {path} is not UTF-8 text: byte {exc.start}") from exc
    return parse_config(text, **overrides)
