"""Experiment configuration loaded from TOML and validated with pydantic.

Every constant that changes results is a required key; the only optional
keys are the ones whose absence has a documented meaning (``encoder_rows``,
``cache``, the ``[sweep]`` table).
"""

import logging
import os
import tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from alpha_bandit.alpha_posterior import AlphaGrid
from alpha_bandit.bandit_core import TieBreak
from alpha_bandit.ctree import CTreeConfig

logger = logging.getLogger("alpha-bandit.config")

JOBS_VAR = "ALPHA_BANDIT_JOBS"
LOG_LEVEL_VAR = "ALPHA_BANDIT_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "INFO"


class ConfigError(ValueError):
    """Invalid or missing configuration; ``field`` is the dotted key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def positive_int_from_env(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Invalid integer environment configuration", extra={"name": name})
        return default
    return value if value > 0 else default


def log_level_from_env() -> str:
    raw = os.environ.get(LOG_LEVEL_VAR, "").strip().upper()
    if not raw:
        return DEFAULT_LOG_LEVEL
    if raw not in logging.getLevelNamesMapping():
        logger.warning("Unknown log level; using default", extra={"name": LOG_LEVEL_VAR})
        return DEFAULT_LOG_LEVEL
    return raw


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EnvironmentSection(_Section):
    kind: Literal["replay", "switching", "synthetic"]
    paths: Optional[List[Path]] = None
    ordering: Optional[Literal["dataset", "shuffled"]] = None
    encoder_rows: Optional[int] = Field(None, ge=1)
    cache: Optional[Path] = None
    switch_period: Optional[int] = Field(None, ge=1)
    d: Optional[int] = Field(None, ge=1)
    K: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def _required_for_kind(self) -> "EnvironmentSection":
        required: Tuple[str, ...]
        if self.kind == "synthetic":
            required = ("d", "K")
        elif self.kind == "switching":
            required = ("paths", "ordering", "switch_period")
        else:
            required = ("paths", "ordering")
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind} environment requires {', '.join(missing)}")
        if self.paths is not None and not self.paths:
            raise ValueError("paths must list at least one file")
        return self


class PolicySection(_Section):
    kind: Literal["fixed", "oplinucb", "doplinucb", "oracle"]
    alpha: Optional[float] = Field(None, ge=0)
    grid: str
    prior_successes: float = Field(gt=0)
    prior_failures: float = Field(gt=0)
    bernoulli_rewards: bool
    warmup_rounds: int = Field(ge=0)
    window_size: int = Field(ge=1)
    refit_period: int = Field(ge=1)

    @model_validator(mode="after")
    def _check(self) -> "PolicySection":
        AlphaGrid.parse(self.grid)
        if self.kind == "fixed" and self.alpha is None:
            raise ValueError("fixed policy requires alpha")
        return self

    def alpha_grid(self) -> AlphaGrid:
        return AlphaGrid.parse(self.grid)


class CTreeSection(_Section):
    significance: float = Field(gt=0, lt=1)
    min_leaf_weight: int = Field(ge=1)
    max_depth: int = Field(ge=0)
    categorical_exhaustive_limit: int = Field(ge=2)

    def to_ctree_config(self) -> CTreeConfig:
        return CTreeConfig(**self.model_dump())


class SweepSection(_Section):
    axis: Literal["none", "train_size", "switch_period"]
    values: List[int] = Field(default_factory=list)
    write_logs: bool

    @model_validator(mode="after")
    def _check(self) -> "SweepSection":
        if self.axis == "none":
            if self.values:
                raise ValueError("axis 'none' takes no values")
        elif not self.values:
            raise ValueError(f"axis {self.axis!r} needs at least one value")
        if len(set(self.values)) != len(self.values):
            raise ValueError("values must be distinct")
        if self.axis == "train_size" and any(v < 0 for v in self.values):
            raise ValueError("train sizes must be non-negative")
        if self.axis == "switch_period" and any(v < 1 for v in self.values):
            raise ValueError("switch periods must be at least 1")
        return self


class ExperimentConfig(_Section):
    master_seed: int = Field(ge=0)
    seeds: List[int] = Field(min_length=1)
    horizon: int = Field(ge=1)
    output_dir: Path
    tie_break: TieBreak
    environment: EnvironmentSection
    policy: PolicySection
    ctree: CTreeSection
    sweep: Optional[SweepSection] = None

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be non-negative")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if (
            self.sweep is not None
            and self.sweep.axis == "switch_period"
            and self.environment.kind != "switching"
        ):
            raise ValueError("a switch_period sweep needs a switching environment")
        return self

    def require_sweep(self) -> SweepSection:
        if self.sweep is None:
            raise ConfigError("sweep", "section is required for sweeps")
        return self.sweep


def _dotted(loc: Tuple[Union[int, str], ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_config(data: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a parsed TOML document.

    Relative dataset, cache and output paths are resolved against ``base_dir``.
    """
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_dotted(first["loc"]), first["msg"]) from e
    except ValueError as e:
        raise ConfigError("<root>", str(e)) from e
    if base_dir is None:
        return config
    env = config.environment
    update = {}
    if env.paths is not None:
        update["paths"] = [base_dir / path for path in env.paths]
    if env.cache is not None:
        update["cache"] = base_dir / env.cache
    return config.model_copy(
        update={
            "environment": env.model_copy(update=update),
            "output_dir": base_dir / config.output_dir,
        }
    )


def load_config(path: Union[str, os.PathLike]) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e.strerror}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"invalid TOML in {path}: {e}") from e
    config = parse_config(data, base_dir=path.parent)
    logger.debug("Loaded experiment config", extra={"path": str(path)})
    return config
