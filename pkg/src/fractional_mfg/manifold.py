"""Circle with a Riemannian metric g(theta): volume measure, Riemannian derivatives and the
Laplace-Beltrami generator realized as a symmetric finite-difference matrix."""

import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError
from .operators import (
    SMOOTHING_FIT_TIMES,
    Field,
    MatrixGenerator,
    NormKind,
    SmoothingProfile,
    SpatialGrid,
    _spectral_derivative,
    fit_power_law,
    gradient_operator_norms,
)

logger = logging.getLogger(__name__)

MIN_LB_POINTS = 32


class CircleMetric:
    """Metric coefficient g(theta) = mean + sum_k (a_k cos k theta + b_k sin k theta).

    Positivity is checked on a fine sampling at construction.
    """

    def __init__(self, mean: float = 1.0, harmonics: Sequence[Tuple[int, float, float]] = ()):
        self.mean = float(mean)
        self.harmonics = tuple((int(k), float(a), float(b)) for k, a, b in harmonics)
        for k, _, _ in self.harmonics:
            if k < 1:
                raise DomainError(f"metric harmonics must be positive integers, got {k}")
        sample = self(np.linspace(0.0, 2.0 * math.pi, 4096, endpoint=False))
        if not np.all(sample > 0):
            raise DomainError(f"metric must be positive, minimum sampled value {float(np.min(sample)):.4g}")

    @classmethod
    def flat(cls, scale: float = 1.0) -> "CircleMetric":
        return cls(scale)

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        values = np.full(theta.shape, self.mean)
        for k, a, b in self.harmonics:
            values = values + a * np.cos(k * theta) + b * np.sin(k * theta)
        return values

    def derivative(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        values = np.zeros(theta.shape)
        for k, a, b in self.harmonics:
            values = values + k * (b * np.cos(k * theta) - a * np.sin(k * theta))
        return values

    def __eq__(self, other) -> bool:
        return isinstance(other, CircleMetric) and (self.mean, self.harmonics) == (other.mean, other.harmonics)

    def __hash__(self) -> int:
        return hash((self.mean, self.harmonics))

    def __repr__(self) -> str:
        return f"CircleMetric(mean={self.mean}, harmonics={list(self.harmonics)})"


class ManifoldGrid(SpatialGrid):
    """Uniform theta nodes on [0, 2 pi) with Riemannian volume weights sqrt(g) 2 pi / N."""

    def __init__(self, metric: CircleMetric, points: int):
        if int(points) != points or points < 4 or points % 2:
            raise DomainError(f"manifold grid needs an even number of points >= 4, got {points}")
        self.metric = metric
        self.points = int(points)
        self.shape = (self.points,)
        self.spacing = 2.0 * math.pi / self.points
        self.theta = np.arange(self.points) * self.spacing
        self.g_values = metric(self.theta)
        self.weights = np.sqrt(self.g_values) * self.spacing
        self.wavenumbers = np.fft.fftfreq(self.points, d=1.0 / self.points)
        self._christoffel = metric.derivative(self.theta) / (2.0 * self.g_values)

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return (self.theta,)

    def derivative(self, values: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        return _spectral_derivative(np.asarray(values, dtype=float), self.wavenumbers, -1, order)

    def gradient_components(self, values: np.ndarray) -> List[np.ndarray]:
        return [self.derivative(values) / np.sqrt(self.g_values)]

    def hessian_components(self, values: np.ndarray) -> List[np.ndarray]:
        # covariant second derivative f'' - Gamma f' measured with g^{-1}
        first = self.derivative(values)
        second = self.derivative(values, order=2)
        return [(second - self._christoffel * first) / self.g_values]

    def same_as(self, other: SpatialGrid) -> bool:
        return isinstance(other, ManifoldGrid) and other.points == self.points and other.metric == self.metric

    def __repr__(self) -> str:
        return f"ManifoldGrid(points={self.points}, metric={self.metric!r})"


def build_lb_generator(metric: CircleMetric, N: int) -> MatrixGenerator:
    """Laplace-Beltrami g^{-1/2} d/dtheta (g^{-1/2} df/dtheta) by staggered central differences.

    The flux g^{-1/2}(f_{j+1} - f_j)/h is evaluated at half nodes, which makes W Delta symmetric
    for W = diag(volume weights); constants lie in the kernel.
    """
    if int(N) != N or N < MIN_LB_POINTS:
        raise DomainError(f"Laplace-Beltrami generator needs N >= {MIN_LB_POINTS}, got {N}")
    grid = ManifoldGrid(metric, N)
    h = grid.spacing
    g_half = metric(grid.theta + 0.5 * h)
    conductance = 1.0 / (np.sqrt(g_half) * h)
    n = grid.points
    index = np.arange(n)
    right = (index + 1) % n
    stiffness = np.zeros((n, n))
    stiffness[index, right] += conductance
    stiffness[right, index] += conductance
    stiffness[index, index] -= conductance
    stiffness[right, right] -= conductance
    gen = MatrixGenerator(grid, stiffness, kind="laplace_beltrami", smoothing=SmoothingProfile(omega=0.5))
    logger.info(f"Laplace-Beltrami generator on {n} nodes, volume {grid.volume:.6f}")
    return gen


def riemannian_gradient_norm(f: Field, metric: CircleMetric) -> Field:
    """Pointwise |grad f|_theta = |f'(theta)| g(theta)^{-1/2}."""
    theta = f.grid.coordinates()[0]
    return Field(f.grid, np.abs(f.grid.derivative(f.values)) / np.sqrt(metric(theta)))


def spectral_gap(gen: MatrixGenerator) -> Tuple[float, int]:
    """(largest nonzero eigenvalue, multiplicity of the zero eigenvalue)."""
    eigenvalues = np.sort(gen.eigenvalues)[::-1]
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    zero = int(np.sum(np.abs(eigenvalues) <= 1e-10 * scale))
    return float(eigenvalues[zero]) if zero < eigenvalues.size else 0.0, zero


class HeatFit(NamedTuple):
    slope: float
    constant: float
    residual: float
    times: np.ndarray
    norms: np.ndarray


def heat_gradient_fit(
    gen: MatrixGenerator,
    metric: CircleMetric,
    kind: NormKind = NormKind.SUP,
    times: Optional[Sequence[float]] = None,
) -> HeatFit:
    """Log-log fit of the Riemannian gradient operator norm |grad S_t| over t in [1e-3, 1e-1].

    `kind` selects the nodal sup norm or the integral (L1 with volume weights) norm.
    """
    grid = gen.grid
    if not isinstance(grid, ManifoldGrid) or grid.metric != metric:
        raise ConfigurationError("heat gradient fit needs the generator built from the given metric")
    kind = NormKind(kind)
    times = np.asarray(SMOOTHING_FIT_TIMES if times is None else times, dtype=float)
    norms = gradient_operator_norms(gen, times, integral=kind.is_integral)
    slope, constant, residual = fit_power_law(times, norms)
    logger.info(f"heat gradient fit ({kind.value}): slope={slope:.4f}, constant={constant:.4f}")
    return HeatFit(slope, constant, residual, times, norms)
