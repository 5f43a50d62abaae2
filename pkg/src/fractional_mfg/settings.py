"""Configuration management for fractional MFG runs."""

import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class RuntimeSettings:
    """Process-level settings."""

    log_level: str = "WARNING"
    threads: int = 1
    output_dir: str = "runs"

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        """Create settings from environment variables with validation."""
        log_level = os.getenv("FRACTIONAL_MFG_LOG_LEVEL", "WARNING").upper()
        threads = os.getenv("FRACTIONAL_MFG_THREADS", "1")
        output_dir = os.getenv("FRACTIONAL_MFG_OUTPUT_DIR", "runs")

        problems = []
        if log_level not in LOG_LEVELS:
            problems.append(f"  FRACTIONAL_MFG_LOG_LEVEL: one of {', '.join(LOG_LEVELS)} (got {log_level!r})")
        if not threads.isdigit() or int(threads) < 1:
            problems.append(f"  FRACTIONAL_MFG_THREADS: a positive integer (got {threads!r})")
        if problems:
            print("ERROR: Invalid environment variables for fractional-mfg:", file=sys.stderr)
            print("\n".join(problems), file=sys.stderr)
            sys.exit(2)

        return cls(log_level=log_level, threads=int(threads), output_dir=output_dir)


class Settings:
    """Global settings manager."""

    def __init__(self):
        self.runtime = RuntimeSettings.from_env()

    def apply_logging(self, level: Optional[str] = None) -> None:
        logging.getLogger("fractional_mfg").setLevel(level or self.runtime.log_level)


# Global settings instance
settings = Settings()


# run configuration sections

Beta = Annotated[float, Field(gt=0.0, le=1.0)]
NormName = Literal["sup", "C1", "C2", "L1", "W1", "W2"]


class Section(BaseModel):
    """Strict JSON section: unknown keys and implicit conversions are rejected."""

    model_config = ConfigDict(extra="forbid", strict=True, allow_inf_nan=False)


class FourierData(Section):
    """mean + sum of a cos(k phase) + b sin(k phase); modes are [k, a, b] or [kx, ky, a, b] in 2-D."""

    mean: float = 0.0
    modes: List[List[float]] = Field(default_factory=list)

    @field_validator("modes")
    @classmethod
    def _mode_arity(cls, modes: List[List[float]]) -> List[List[float]]:
        for mode in modes:
            if len(mode) not in (3, 4):
                raise ValueError(f"Fourier mode {mode} must be [k, a, b] or [kx, ky, a, b]")
        return modes

    def to_values(self, coordinates: Tuple[np.ndarray, ...], length: float = 2.0 * math.pi) -> np.ndarray:
        scale = 2.0 * math.pi / length
        values = np.full(coordinates[0].shape, float(self.mean))
        for mode in self.modes:
            if len(mode) == 3:
                k, a, b = mode
                phase = k * scale * coordinates[0]
            else:
                if len(coordinates) < 2:
                    raise ConfigurationError(f"two-axis Fourier mode {mode} on a one-dimensional grid")
                kx, ky, a, b = mode
                phase = scale * (kx * coordinates[0] + ky * coordinates[1])
            values = values + a * np.cos(phase) + b * np.sin(phase)
        return values

    def harmonics(self) -> List[Tuple[int, float, float]]:
        return [(int(k), float(a), float(b)) for k, a, b in self.modes]


class CatalogChoice(Section):
    """A catalog entry: ``{"kind": ..., <parameters>}``; parameter names are checked by the catalog."""

    kind: str
    params: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _collect_params(cls, data: Any) -> Any:
        if isinstance(data, dict) and "params" not in data:
            collected = {"params": {key: value for key, value in data.items() if key != "kind"}}
            if "kind" in data:
                collected["kind"] = data["kind"]
            return collected
        return data


class GeneratorConfig(Section):
    kind: Literal["laplacian", "fractional_laplacian", "laplace_beltrami", "scalar"] = "fractional_laplacian"
    points: int = Field(128, ge=1)
    alpha: float = Field(1.5, gt=0.0, le=2.0)
    dimension: Literal[1, 2] = 1
    length: float = Field(2.0 * math.pi, gt=0.0)
    rate: float = -1.0
    metric: FourierData = Field(default_factory=lambda: FourierData(mean=1.0, modes=[[1, 0.0, 0.3]]))


class TimeConfig(Section):
    a: float = 0.0
    T: float = 0.1
    steps: int = Field(64, ge=8)

    @model_validator(mode="after")
    def _ordered(self) -> "TimeConfig":
        if not self.a < self.T:
            raise ValueError(f"time.T must exceed time.a, got a={self.a}, T={self.T}")
        return self


class QuadratureConfig(Section):
    node_count: int = Field(16, ge=1)
    domain_cut: float = Field(30.0, gt=0.0)
    oscillatory_node_count: int = Field(200, ge=1)
    tail_tol: float = Field(1e-10, gt=0.0)


class PicardSettings(Section):
    tol: float = Field(1e-8, gt=0.0)
    max_iterations: int = Field(200, ge=1)
    damping: float = Field(1.0, gt=0.0, le=1.0)
    min_damping: float = Field(0.125, gt=0.0, le=1.0)
    norm: NormName = "C1"
    norm_ceiling: float = Field(1e8, gt=0.0)

    @model_validator(mode="after")
    def _damping_range(self) -> "PicardSettings":
        if self.min_damping > self.damping:
            raise ValueError(f"picard needs min_damping <= damping, got {self.min_damping} > {self.damping}")
        return self


class ControlConfig(Section):
    lo: float = -1.0
    hi: float = 1.0
    count: int = Field(21, ge=1)
    refinement: int = Field(0, ge=0)
    map: CatalogChoice = Field(default_factory=lambda: CatalogChoice(kind="clamp"))

    @model_validator(mode="after")
    def _bounds(self) -> "ControlConfig":
        if self.hi < self.lo:
            raise ValueError(f"controls need lo <= hi, got {self.lo} > {self.hi}")
        return self


class CouplingConfig(Section):
    kind: Literal["none", "future-mass", "local-density"] = "none"
    strength: float = 0.0


class AnticipationConfig(Section):
    """u(b) = strength * b(T) (``terminal``) or strength * time average of b (``average``)."""

    kind: Literal["terminal", "average"] = "terminal"
    strength: float = 1.0


def _mean_density() -> FourierData:
    return FourierData(mean=1.0 / (2.0 * math.pi), modes=[[1, 0.5 / (2.0 * math.pi), 0.0]])


def _cosine_terminal() -> FourierData:
    return FourierData(mean=0.0, modes=[[1, 0.2, 0.0]])


def _curved_metric() -> FourierData:
    return FourierData(mean=1.0, modes=[[1, 0.0, 0.3]])


def _attraction() -> CatalogChoice:
    return CatalogChoice(kind="mean-attraction", params={"strength": 0.5})


class SpecfunCheckConfig(Section):
    betas: List[Beta] = Field(default_factory=lambda: [0.4, 0.5, 0.6, 0.7, 0.9])
    s_values: List[float] = Field(default_factory=lambda: [-5.0, -2.0, -1.0, 0.0, 1.0, 2.0])
    mellin_pairs: List[List[float]] = Field(
        default_factory=lambda: [[0.5, 0.0], [0.5, 1.0], [0.7, 0.5], [0.8, 0.25], [0.4, 1.5]]
    )
    tol: float = Field(1e-6, gt=0.0)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)

    @field_validator("mellin_pairs")
    @classmethod
    def _pairs(cls, pairs: List[List[float]]) -> List[List[float]]:
        for pair in pairs:
            if len(pair) != 2:
                raise ValueError(f"Mellin pair {pair} must be [beta, omega]")
        return pairs


class MlopCheckConfig(Section):
    points: int = Field(64, ge=2)
    betas: List[Beta] = Field(default_factory=lambda: [0.5, 0.8])
    taus: List[Annotated[float, Field(ge=0.0)]] = Field(default_factory=lambda: [0.0, 0.01, 0.1, 1.0])
    generator: GeneratorConfig = Field(default_factory=lambda: GeneratorConfig(kind="laplacian", points=64))
    tol: float = Field(1e-6, gt=0.0)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


class SmoothingFitConfig(Section):
    points: int = Field(1024, ge=8)
    alphas: List[Annotated[float, Field(gt=0.0, le=2.0)]] = Field(default_factory=lambda: [2.0, 1.5])
    metric: FourierData = Field(default_factory=_curved_metric)
    manifold_points: int = Field(256, ge=8)
    relative_tol: float = Field(0.1, gt=0.0)
    manifold_tol: float = Field(0.15, gt=0.0)


class SolveMVConfig(Section):
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    beta: Beta = 0.8
    Y: FourierData = Field(default_factory=_mean_density)
    drift: CatalogChoice = Field(default_factory=_attraction)
    control: float = 0.0
    picard: PicardSettings = Field(default_factory=lambda: PicardSettings(norm="W1"))
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


class SolveHJBConfig(Section):
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    beta: Beta = 0.8
    Z: FourierData = Field(default_factory=_cosine_terminal)
    hamiltonian: CatalogChoice = Field(default_factory=lambda: CatalogChoice(kind="lq"))
    controls: ControlConfig = Field(default_factory=ControlConfig)
    picard: PicardSettings = Field(default_factory=PicardSettings)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


class SolveAnticipatingConfig(Section):
    generator: GeneratorConfig = Field(default_factory=lambda: GeneratorConfig(kind="scalar", points=1, rate=1.0))
    time: TimeConfig = Field(default_factory=lambda: TimeConfig(a=0.0, T=0.5, steps=64))
    beta: Beta = 1.0
    Y: FourierData = Field(default_factory=lambda: FourierData(mean=1.0))
    anticipation: AnticipationConfig = Field(default_factory=AnticipationConfig)
    horizon_search: bool = True
    picard: PicardSettings = Field(default_factory=lambda: PicardSettings(norm="sup"))
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


class SolveFBConfig(Section):
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    beta: Beta = 0.8
    Y: FourierData = Field(default_factory=_mean_density)
    Z: FourierData = Field(default_factory=_cosine_terminal)
    drift: CatalogChoice = Field(default_factory=_attraction)
    hamiltonian: CatalogChoice = Field(default_factory=lambda: CatalogChoice(kind="lq"))
    controls: ControlConfig = Field(default_factory=ControlConfig)
    coupling: CouplingConfig = Field(default_factory=lambda: CouplingConfig(kind="local-density", strength=0.5))
    detect_horizon: bool = True
    picard: PicardSettings = Field(default_factory=PicardSettings)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


class ManifoldDemoConfig(Section):
    metric: FourierData = Field(default_factory=_curved_metric)
    points: int = Field(64, ge=8)
    time: TimeConfig = Field(default_factory=lambda: TimeConfig(a=0.0, T=0.05, steps=32))
    beta: Beta = 0.8
    Y: FourierData = Field(default_factory=lambda: FourierData(mean=1.0, modes=[[1, 0.5, 0.0]]))
    Z: FourierData = Field(default_factory=_cosine_terminal)
    drift: CatalogChoice = Field(default_factory=_attraction)
    hamiltonian: CatalogChoice = Field(default_factory=lambda: CatalogChoice(kind="lq"))
    controls: ControlConfig = Field(default_factory=ControlConfig)
    coupling: CouplingConfig = Field(default_factory=lambda: CouplingConfig(kind="local-density", strength=0.5))
    commutator_times: List[Annotated[float, Field(gt=0.0)]] = Field(default_factory=lambda: [1e-3, 1e-2, 1e-1, 1.0])
    picard: PicardSettings = Field(default_factory=PicardSettings)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)


RUN_CONFIGS = {
    "specfun-check": SpecfunCheckConfig,
    "mlop-check": MlopCheckConfig,
    "smoothing-fit": SmoothingFitConfig,
    "solve-mv": SolveMVConfig,
    "solve-hjb": SolveHJBConfig,
    "solve-anticipating": SolveAnticipatingConfig,
    "solve-fb": SolveFBConfig,
    "manifold-demo": ManifoldDemoConfig,
}


def _location(loc: Tuple[Any, ...]) -> str:
    return ".".join(["config", *(str(part) for part in loc)])


def load_run_config(subcommand: str, path: Optional[Union[str, Path]] = None) -> Section:
    """Parse and validate the run configuration of one subcommand; no path gives the built-in demo."""
    if subcommand not in RUN_CONFIGS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    cls = RUN_CONFIGS[subcommand]
    if path is None:
        return cls()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}", {"path": str(path)})
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"malformed JSON in {path}: {e}", {"path": str(path), "line": e.lineno})
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        problems = [
            {"key": _location(err["loc"]), "type": err["type"], "message": err["msg"]} for err in e.errors(include_url=False)
        ]
        details: Dict[str, Any] = {"path": str(path), "errors": problems}
        unknown = sorted(str(err["loc"][-1]) for err in e.errors(include_url=False) if err["type"] == "extra_forbidden")
        if unknown:
            details["unknown"] = unknown
        summary = "; ".join(f"{p['key']}: {p['message']}" for p in problems)
        raise ConfigurationError(f"invalid config {path}: {summary}", details) from e
