"""Experiment configuration: YAML document validated with pydantic."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .inference import HmcConfig
from .paris import ParisParams

M_BASE = 2.65

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, label: str) -> int:
    """64-bit seed for one random consumer.

    ``splitmix64(master XOR blake2b64(label))``; labels look like
    ``"sim/pink/low"`` or ``"hmc/none/s2-03/M40"``, so adding a consumer
    never shifts another one's stream.
    """
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return _splitmix64((int(master) & _MASK64) ^ int.from_bytes(digest, "little"))


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParisSpec(_Strict):
    m: float = Field(gt=0)
    C: float = Field(gt=0)
    delta_sigma: float = Field(300.0, gt=0)
    a0: float = Field(3.0, gt=0)

    def params(self) -> ParisParams:
        return ParisParams(self.m, self.C, self.delta_sigma, self.a0)


def _table1() -> dict[str, ParisSpec]:
    return {
        "blue": ParisSpec(m=M_BASE, C=6e-13),
        "orange": ParisSpec(m=M_BASE, C=5.58e-13),
        "green": ParisSpec(m=1.001 * M_BASE, C=6.72e-13),
    }


def _table2() -> dict[str, ParisSpec]:
    return {
        "red": ParisSpec(m=0.995 * M_BASE, C=6.42e-13),
        "purple": ParisSpec(m=0.999 * M_BASE, C=5.1e-13),
        "brown": ParisSpec(m=1.0015 * M_BASE, C=6.12e-13),
        "pink": ParisSpec(m=1.005 * M_BASE, C=6.72e-13),
    }


class GridSettings(_Strict):
    n_points: int = Field(100, ge=2)
    # extent is found so that `reference_structure` ends at `terminal_length`
    n_cycles_max: Optional[float] = Field(None, gt=0)
    reference_structure: str = "green"
    terminal_length: float = Field(20.0, gt=0)
    substeps: int = Field(64, ge=1)
    a_ceiling: float = Field(1000.0, gt=0)


class SecondPopulation(_Strict):
    n_structures: int = Field(8, ge=2)
    m_base: float = Field(M_BASE, gt=0)
    m_multiplier: tuple[float, float] = (0.995, 1.005)
    C_range: tuple[float, float] = (5.1e-13, 6.72e-13)
    delta_sigma: float = Field(300.0, gt=0)
    a0: float = Field(3.0, gt=0)

    @field_validator("m_multiplier", "C_range")
    @classmethod
    def _ordered(cls, v):
        if not 0 < v[0] <= v[1]:
            raise ValueError("range must be positive and ordered (low, high)")
        return v


class NoiseSettings(_Strict):
    high: float = Field(0.05, ge=0)
    low: float = Field(0.5, gt=0)


class FpcaSettings(_Strict):
    variance_threshold: Optional[float] = Field(0.95, gt=0, le=1)
    n_components: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _one_rule(self):
        if (self.variance_threshold is None) == (self.n_components is None):
            raise ValueError("set exactly one of variance_threshold or n_components")
        return self

    def kwargs(self) -> dict:
        return {"variance_threshold": self.variance_threshold, "n_components": self.n_components}


class HmcSettings(_Strict):
    n_samples: int = Field(2000, ge=1)
    n_warmup: int = Field(500, ge=0)
    step_size: float = Field(0.1, gt=0)
    n_leapfrog: int = Field(20, ge=1)
    adapt_step_size: bool = True
    target_accept: float = Field(0.8, gt=0, lt=1)
    step_jitter: float = Field(0.2, ge=0, lt=1)

    def config(self, seed: int) -> HmcConfig:
        return HmcConfig(seed=seed, **self.model_dump())


class MonitorSettings(_Strict):
    checkpoints: list[int] = Field(default_factory=lambda: list(range(10, 90, 10)))
    decision_step: int = Field(40, ge=1)
    statistic: Literal["mean", "median"] = "mean"

    @field_validator("checkpoints")
    @classmethod
    def _sorted_unique(cls, v):
        if not v or any(c < 1 for c in v):
            raise ValueError("checkpoints must be a non-empty list of positive counts")
        return sorted(set(v))


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "runs/latest"
    grid: GridSettings = GridSettings()
    training: dict[str, ParisSpec] = Field(default_factory=_table1)
    first_testing: dict[str, ParisSpec] = Field(default_factory=_table2)
    second_population: SecondPopulation = SecondPopulation()
    noise: NoiseSettings = NoiseSettings()
    fpca: FpcaSettings = FpcaSettings()
    hmc: HmcSettings = HmcSettings()
    monitor: MonitorSettings = MonitorSettings()

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.training) < 2:
            raise ValueError("training population needs at least 2 structures")
        if not self.first_testing:
            raise ValueError("first testing population is empty")
        ids = list(self.training) + list(self.first_testing)
        if len(set(ids)) != len(ids):
            raise ValueError("structure ids must be unique across populations")
        if self.grid.n_cycles_max is None and self.grid.reference_structure not in self.training:
            raise ValueError(
                f"grid.reference_structure {self.grid.reference_structure!r} is not a training structure"
            )
        n = self.grid.n_points
        if max(self.monitor.checkpoints) > n or not self.monitor.decision_step < n:
            raise ValueError(f"checkpoints and decision_step must fit a {n}-point grid")
        return self

    def seed_for(self, label: str) -> int:
        return derive_seed(self.seed, label)


def format_validation_error(err: ValidationError, source: str = "<config>") -> str:
    lines = [f"{source}: {err.error_count()} invalid setting(s)"]
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def load_config(path: Path | str | None = None, **overrides) -> ExperimentConfig:
    """Read a YAML config (or defaults) and apply top-level overrides."""
    doc: dict = {}
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{source}: not valid YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{source}: top level must be a mapping")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(format_validation_error(err, source)) from None


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
