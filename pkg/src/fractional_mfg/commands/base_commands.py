"""Base class for run commands with common functionality."""

import csv
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, is_dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, Iterable, List, Sequence

import mpmath
import numpy as np
import scipy
from pydantic import BaseModel

from .. import __version__
from ..errors import FractionalMFGError
from ..manifold import CircleMetric, build_lb_generator
from ..mild import Curve, PicardConfig, TimeGrid
from ..mlop import SubordinationPlan, build_plan
from ..models import ControlSet
from ..operators import Field, Generator, NormKind, SpatialGrid, TorusGrid, build_torus_generator, scalar_generator
from ..settings import FourierData, GeneratorConfig, PicardSettings, QuadratureConfig, TimeConfig
from ..specfun import FractionalOrder, QuadratureSpec

if TYPE_CHECKING:
    from ..runner import FractionalMFGRunner


@dataclass
class CommandOutcome:
    """Report payload of one command and the exit status it asks for."""

    report: Dict[str, Any]
    exit_code: int = 0


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if is_dataclass(value):
        return asdict(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


class BaseCommands:
    """Base class with object builders, artifact writers and report formatting."""

    def __init__(self, runner: "FractionalMFGRunner"):
        self.runner = runner
        self.logger = logging.getLogger(f"fractional_mfg.{self.__class__.__name__}")

    # responses

    def _json_response(self, data: Dict[str, Any], indent: int = 2) -> str:
        """Format response as JSON."""
        return json.dumps(data, indent=indent, default=_to_builtin)

    def _error_response(self, error: FractionalMFGError) -> str:
        """Format an error diagnostic as JSON."""
        return self._json_response(error.to_diagnostic())

    def _envelope(self, subcommand: str, config: Any, started: float, diagnostics: Dict[str, Any]) -> Dict[str, Any]:
        """Report with config echo, versions and wall-clock."""
        return {
            "subcommand": subcommand,
            "config": config.model_dump(mode="json"),
            "seed": self.runner.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "mpmath": mpmath.__version__,
                "fractional_mfg": __version__,
            },
            "wall_clock_seconds": time.perf_counter() - started,
            **diagnostics,
        }

    # artifacts

    def _artifact_path(self, name: str) -> Path:
        out = self.runner.output_dir
        out.mkdir(parents=True, exist_ok=True)
        return out / name

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = self._artifact_path(name)
        path.write_text(self._json_response(data) + "\n")
        self.logger.info(f"wrote {path}")
        return path

    def write_curve_csv(self, curve: Curve, name: str) -> Path:
        """Columns time,node,value; floats in shortest round-trip form."""
        path = self._artifact_path(name)
        flat = curve.values.reshape(curve.values.shape[0], -1)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["time", "node", "value"])
            for t, row in zip(curve.time_grid.nodes, flat):
                for node, value in enumerate(row):
                    writer.writerow([repr(float(t)), node, repr(float(value))])
        self.logger.info(f"wrote {path}")
        return path

    def write_table_csv(self, rows: Sequence[Dict[str, Any]], header: Sequence[str], name: str) -> Path:
        path = self._artifact_path(name)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(row[key])) if isinstance(row[key], (float, np.floating)) else row[key] for key in header])
        self.logger.info(f"wrote {path}")
        return path

    def _map(self, func: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """Run independent checks on the runner's thread pool, preserving order."""
        items = list(items)
        if self.runner.threads <= 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.runner.threads) as pool:
            return list(pool.map(func, items))

    # builders

    def _generator(self, cfg: GeneratorConfig) -> Generator:
        if cfg.kind == "scalar":
            return scalar_generator(cfg.rate)
        if cfg.kind == "laplace_beltrami":
            return build_lb_generator(self._metric(cfg.metric), cfg.points)
        grid = TorusGrid(cfg.points, cfg.length, cfg.dimension)
        return build_torus_generator(grid, cfg.kind, cfg.alpha)

    def _metric(self, data: FourierData) -> CircleMetric:
        return CircleMetric(data.mean, data.harmonics())

    def _field(self, data: FourierData, grid: SpatialGrid) -> Field:
        return Field(grid, data.to_values(grid.coordinates(), getattr(grid, "length", 2.0 * math.pi)))

    def _time_grid(self, cfg: TimeConfig) -> TimeGrid:
        return TimeGrid(cfg.a, cfg.T, cfg.steps)

    def _quadrature(self, cfg: QuadratureConfig) -> QuadratureSpec:
        return QuadratureSpec(cfg.node_count, cfg.domain_cut, cfg.oscillatory_node_count, cfg.tail_tol)

    def _plan(self, beta: float, quad: QuadratureConfig) -> SubordinationPlan:
        return build_plan(FractionalOrder(beta), self._quadrature(quad))

    def _picard(self, cfg: PicardSettings) -> PicardConfig:
        return PicardConfig(cfg.tol, cfg.max_iterations, cfg.damping, cfg.min_damping, NormKind(cfg.norm), cfg.norm_ceiling)

    def _controls(self, lo: float, hi: float, count: int, refinement: int = 0) -> ControlSet:
        return ControlSet.uniform(lo, hi, count, refinement)

    def _failed_rows(self, rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
        failed = [row for row in rows if not row["passed"]]
        for row in failed:
            self.logger.warning(f"check failed: {row}")
        return failed
