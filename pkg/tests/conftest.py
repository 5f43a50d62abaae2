"""Test configuration and fixtures for fractional-mfg tests."""

import json

import numpy as np
import pytest

from src.fractional_mfg.manifold import CircleMetric, build_lb_generator
from src.fractional_mfg.mild import PicardConfig, TimeGrid
from src.fractional_mfg.mlop import build_plan
from src.fractional_mfg.operators import Field, PointGrid, TorusGrid, build_torus_generator, scalar_generator
from src.fractional_mfg.runner import FractionalMFGRunner
from src.fractional_mfg.specfun import FractionalOrder


@pytest.fixture(scope="session")
def plan_half():
    """Subordination plan for beta = 1/2."""
    return build_plan(FractionalOrder(0.5))


@pytest.fixture(scope="session")
def plan_08():
    """Subordination plan for beta = 0.8."""
    return build_plan(FractionalOrder(0.8))


@pytest.fixture(scope="session")
def classical_plan():
    """Single-node plan of the classical branch."""
    return build_plan(FractionalOrder(1.0))


@pytest.fixture
def torus64():
    """64-node torus of length 2 pi."""
    return TorusGrid(64)


@pytest.fixture
def laplacian64(torus64):
    return build_torus_generator(torus64, "laplacian")


@pytest.fixture
def fractional_laplacian128():
    """Fractional Laplacian with alpha = 1.5 on 128 nodes."""
    return build_torus_generator(TorusGrid(128), "fractional_laplacian", 1.5)


@pytest.fixture
def circle_metric():
    """g(theta) = 1 + 0.3 sin(theta)."""
    return CircleMetric(1.0, [(1, 0.0, 0.3)])


@pytest.fixture
def lb_generator(circle_metric):
    return build_lb_generator(circle_metric, 64)


@pytest.fixture
def scalar_unit():
    """Initial datum 1 on the single-node grid."""
    return Field(PointGrid(), np.ones(1))


@pytest.fixture
def decay_generator():
    """A = -1 on a single node."""
    return scalar_generator(-1.0)


@pytest.fixture
def tight_picard():
    return PicardConfig(tol=1e-12, max_iterations=400)


@pytest.fixture
def short_time_grid():
    return TimeGrid(0.0, 0.1, 32)


@pytest.fixture
def smooth_field(torus64):
    """Smooth periodic field on the 64-node torus."""
    x = torus64.nodes
    return Field(torus64, np.cos(x) + 0.5 * np.sin(3.0 * x) + 0.25)


@pytest.fixture
def runner(tmp_path):
    """Runner writing into a temporary directory."""
    return FractionalMFGRunner(out_dir=tmp_path / "run", seed=7, threads=1)


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON run configuration and return its path."""
    def write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running solver tests")

