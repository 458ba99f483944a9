"""Experiment configuration: strict TOML-backed schema."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Raised for unreadable files and schema violations; the message names the key path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class RangeScalingConfig(_Strict):
    L1: int = Field(gt=0)
    b: float = Field(gt=0)
    T: float = Field(ge=1)


class ModelConfig(_Strict):
    d: int = Field(gt=0)
    L: int = Field(gt=0)
    epsilon: float = Field(gt=0, le=1)
    lam: Union[float, Literal["critical"]] = Field(alias="lambda")
    range_scaling: Optional[RangeScalingConfig] = None

    model_config = ConfigDict(extra="forbid", strict=True, frozen=True, populate_by_name=True)

    @field_validator("lam")
    @classmethod
    def _nonneg(cls, v):
        if v != "critical" and not v >= 0:
            raise ValueError("lambda must be >= 0 or \"critical\"")
        return v


class Query(_Strict):
    """One r-point evaluation: ``r - 1`` rescaled times and their momenta."""

    times: list[float] = Field(min_length=1)
    kappas: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _match(self):
        if any(t <= 0 for t in self.times):
            raise ValueError("query times must be > 0")
        if self.kappas is not None and len(self.kappas) != len(self.times):
            raise ValueError("need one kappa vector per time")
        return self


class ScheduleConfig(_Strict):
    n_max: int = Field(gt=1)
    window: tuple[float, float] = (0.5, 1.0)
    T: list[float] = Field(default_factory=list)
    queries: list[Query] = Field(default_factory=list)


class BudgetConfig(_Strict):
    n_runs: int = Field(gt=0)
    seed: int = Field(ge=0, lt=2**64)
    workers: int = Field(default=1, gt=0)
    block_size: int = Field(default=1000, gt=0)


class CriticalConfig(_Strict):
    bracket: tuple[float, float] = (0.9, 1.2)
    n_max: Optional[int] = Field(default=None, gt=1)
    n_runs: Optional[int] = Field(default=None, gt=0)
    n_runs_cap: Optional[int] = Field(default=None, gt=0)
    tol: float = Field(default=1e-3, gt=0)
    z: float = Field(default=3.0, gt=0)


class OutputConfig(_Strict):
    directory: str = "results"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class ExperimentConfig(_Strict):
    model: ModelConfig
    schedule: ScheduleConfig
    budget: BudgetConfig
    critical: CriticalConfig = Field(default_factory=CriticalConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)

    def content_hash(self) -> str:
        """SHA-256 of everything that can change a numeric result.

        Worker count and output location are excluded: neither affects the
        emitted tables.
        """
        data = self.to_dict()
        data["budget"].pop("workers", None)
        data.pop("output", None)
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **blocks) -> "ExperimentConfig":
        """Copy with block fields overridden, e.g. ``replace(budget={"seed": 3})``."""
        data = self.to_dict()
        for name, fields in blocks.items():
            data[name] = {**data.get(name, {}), **fields}
        return parse_config(data)


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(_tuplify(data))
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def _tuplify(data):
    # TOML arrays arrive as lists; strict mode wants tuples for tuple fields
    data = json.loads(json.dumps(data))
    for block, key in (("schedule", "window"), ("critical", "bracket")):
        if isinstance(data.get(block), dict) and isinstance(data[block].get(key), list):
            data[block][key] = tuple(data[block][key])
    return data


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(data)


def dumps_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(config), encoding="utf-8")
