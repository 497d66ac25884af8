"""Experiment configuration: a TOML file validated against a strict schema.

Example::

    seed = 7

    [[products]]
    name = "milk"
    lifetime = 3
    holding = 1.0
    penalty = 8.0
    outdating = 3.0

    [demand]
    source = "poisson"
    periods = 1000
    mean = 5.0

    [algorithm]
    name = "gapsi"
    box = [0.0, 20.0]
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Literal, Union, get_args

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .inventory import InventorySystem, ProductSpec

Schedule = Union[float, list[float]]
Algorithm = Literal["gapsi", "stationary-oracle", "cyclic-oracle", "forecast-level", "mpc", "zero"]
ALGORITHMS: tuple[str, ...] = get_args(Algorithm)


class ConfigError(ValueError):
    """Invalid or unreadable configuration; the message lists field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProductConfig(_Strict):
    name: str = ""
    lifetime: int = Field(ge=1)
    lead_time: int = Field(default=0, ge=0)
    unit_volume: Schedule = 1.0
    purchase: Schedule = 0.0
    holding: Schedule = 0.0
    penalty: Schedule = 0.0
    outdating: Schedule = 0.0
    overflow: Schedule = 0.0

    @model_validator(mode="after")
    def _nonempty_state(self):
        if self.lifetime + self.lead_time < 2:
            raise ValueError("lifetime + lead_time must be at least 2")
        return self

    def build(self) -> ProductSpec:
        return ProductSpec(**self.model_dump())


class DemandConfig(_Strict):
    source: Literal["csv", "poisson", "synthetic-cyclic"]
    path: str | None = None
    layout: Literal["wide", "long"] = "wide"
    periods: int | None = Field(default=None, ge=1)
    mean: Schedule = 5.0
    pattern: list[list[float]] | list[float] | None = None
    noise: float = Field(default=0.0, ge=0.0)
    trend: float = 0.0
    first_day: int = 1

    @model_validator(mode="after")
    def _source_fields(self):
        if self.source == "csv" and not self.path:
            raise ValueError("csv demand needs 'path'")
        if self.source != "csv" and self.periods is None:
            raise ValueError(f"{self.source} demand needs 'periods'")
        if self.source == "synthetic-cyclic" and not self.pattern:
            raise ValueError("synthetic-cyclic demand needs 'pattern'")
        return self


class AlgorithmConfig(_Strict):
    name: Algorithm
    eta: float = Field(default=0.1, gt=0)
    buffer_size: int = Field(default=10, ge=1)
    box: tuple[float, float] = (0.0, 20.0)
    theta0: float | list[float] | None = None
    features: Literal["constant", "calendar"] = "constant"
    feature_scale: float | None = Field(default=None, gt=0)
    policy_side: Literal["left", "right"] = "right"
    model_side: Literal["left", "right"] = "left"
    censored: bool = False
    horizon: int = Field(default=7, ge=1)
    sigma: float = Field(default=0.0, ge=0.0)
    period: int = Field(default=7, ge=1)
    grid_points: int = Field(default=200, ge=2)
    oracle_refine: int = Field(default=4, ge=0)

    @field_validator("box")
    @classmethod
    def _ordered(cls, box):
        if box[0] > box[1]:
            raise ValueError("box requires lower <= upper")
        return box


class OutputConfig(_Strict):
    dir: str = "runs"
    trace: bool = True
    compare_oracle: bool = True


class BenchConfig(_Strict):
    algorithms: list[Algorithm] = ["zero", "stationary-oracle", "cyclic-oracle", "forecast-level", "gapsi"]


class ExperimentConfig(_Strict):
    seed: int = Field(default=0, ge=0, lt=2**64)
    products: list[ProductConfig] = Field(min_length=1)
    capacity: Schedule = math.inf
    demand: DemandConfig
    algorithm: AlgorithmConfig
    output: OutputConfig = OutputConfig()
    bench: BenchConfig = BenchConfig()

    def system(self) -> InventorySystem:
        return InventorySystem([p.build() for p in self.products], capacity=self.capacity)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        data = self.model_dump()
        for key, value in changes.items():
            if value is None:
                continue
            section, _, field = key.partition(".")
            if field:
                data[section][field] = value
            else:
                data[key] = value
        return validate_config(data)

    def digest(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def validate_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    demand = data.get("demand")
    if isinstance(demand, dict) and isinstance(demand.get("path"), str):
        # relative demand files are looked up next to the config file
        demand["path"] = str(path.parent / demand["path"])
    return validate_config(data)
