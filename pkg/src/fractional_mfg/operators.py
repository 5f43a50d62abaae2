"""Spatial discretization: grids, fields, the ordered norm triples and spatial generators.

The torus carries spectral generators (Laplacian, fractional Laplacian); the manifold module
adds the matrix realization on a circle with a metric. Every generator exposes the same
eigen-representation so that Mittag-Leffler and semigroup multipliers apply uniformly.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DomainError, FitUnreliableError

logger = logging.getLogger(__name__)

SMOOTHING_FIT_TIMES = np.geomspace(1e-3, 1e-1, 9)
FIT_RESIDUAL_LIMIT = 0.1


class NormKind(str, Enum):
    """Norms of the two grid-realized triples: sup/C1/C2 and L1/W1/W2."""

    SUP = "sup"
    C1 = "C1"
    C2 = "C2"
    L1 = "L1"
    W1 = "W1"
    W2 = "W2"

    @property
    def is_integral(self) -> bool:
        return self in (NormKind.L1, NormKind.W1, NormKind.W2)

    @property
    def derivative_order(self) -> int:
        return {"sup": 0, "L1": 0, "C1": 1, "W1": 1, "C2": 2, "W2": 2}[self.value]


def _spectral_derivative(values: np.ndarray, wavenumbers: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    coeffs = np.fft.fft(values, axis=axis)
    multiplier = (1j * wavenumbers) ** order
    n = wavenumbers.size
    if order % 2 == 1 and n % 2 == 0:
        multiplier[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.fft.ifft(coeffs * multiplier.reshape(shape), axis=axis).real


class SpatialGrid:
    """Common interface of the spatial grids.

    Arrays handed to grid methods carry the spatial axes last; any leading axes (time nodes,
    batches of probes) are broadcast through.
    """

    shape: Tuple[int, ...] = ()
    weights: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        return tuple(range(-self.dimension, 0))

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        raise NotImplementedError

    def derivative(self, values: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        """Coordinate derivative along spatial axis `axis`."""
        raise NotImplementedError

    def gradient_components(self, values: np.ndarray) -> List[np.ndarray]:
        """First derivatives scaled so that their magnitudes enter the C1/W1 norms."""
        return [self.derivative(values, axis) for axis in range(self.dimension)]

    def hessian_components(self, values: np.ndarray) -> List[np.ndarray]:
        """Second derivatives entering the C2/W2 norms."""
        return [
            self.derivative(self.derivative(values, i), j)
            for i in range(self.dimension)
            for j in range(self.dimension)
        ]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.sum(values * self.weights, axis=self.spatial_axes)

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.integrate(u * v)

    def same_as(self, other: "SpatialGrid") -> bool:
        return self is other or (type(self) is type(other) and self.shape == other.shape and np.array_equal(self.weights, other.weights))


class TorusGrid(SpatialGrid):
    """Uniform periodic grid x_j = jL/N in one or two dimensions."""

    def __init__(self, points: int, length: float = 2.0 * math.pi, dimension: int = 1):
        if int(points) != points or points < 2 or points % 2:
            raise DomainError(f"torus grid needs a positive even number of points, got {points}")
        if not length > 0:
            raise DomainError(f"torus length must be positive, got {length}")
        if dimension not in (1, 2):
            raise DomainError(f"torus dimension must be 1 or 2, got {dimension}")
        self.points = int(points)
        self.length = float(length)
        self.shape = (self.points,) * dimension
        self.nodes = np.arange(self.points) * self.length / self.points
        # physical wavenumbers 2 pi k / L in FFT order
        self.wavenumbers = np.fft.fftfreq(self.points, d=self.length / (2.0 * math.pi * self.points))
        self.weights = np.full(self.shape, (self.length / self.points) ** dimension)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.nodes] * self.dimension), indexing="ij"))

    def derivative(self, values: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        return _spectral_derivative(np.asarray(values, dtype=float), self.wavenumbers, axis - self.dimension, order)

    def wavenumber_magnitude(self) -> np.ndarray:
        grids = np.meshgrid(*([self.wavenumbers] * self.dimension), indexing="ij")
        return np.sqrt(sum(k**2 for k in grids))

    def __repr__(self) -> str:
        return f"TorusGrid(points={self.points}, length={self.length}, dimension={self.dimension})"


class PointGrid(SpatialGrid):
    """Single-node grid hosting scalar (ODE) instances."""

    def __init__(self):
        self.shape = (1,)
        self.weights = np.ones(1)

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return (np.zeros(1),)

    def derivative(self, values: np.ndarray, axis: int = 0, order: int = 1) -> np.ndarray:
        return np.zeros_like(np.asarray(values, dtype=float))

    def __repr__(self) -> str:
        return "PointGrid()"


@dataclass(frozen=True)
class Field:
    """Real function sampled on a spatial grid."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise DomainError(f"field has shape {values.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", values)


def norm_values(grid: SpatialGrid, values: np.ndarray, kind: NormKind) -> np.ndarray:
    """Norm of (possibly batched) nodal values; leading axes are kept."""
    kind = NormKind(kind)
    axes = grid.spatial_axes

    def reduce(array):
        if kind.is_integral:
            return np.sum(np.abs(array) * grid.weights, axis=axes)
        return np.max(np.abs(array), axis=axes)

    values = np.asarray(values, dtype=float)
    total = reduce(values)
    if kind.derivative_order >= 1:
        total = total + sum(reduce(component) for component in grid.gradient_components(values))
    if kind.derivative_order >= 2:
        total = total + sum(reduce(component) for component in grid.hessian_components(values))
    return total


def norm(f: Field, kind: NormKind) -> float:
    if NormKind(kind).derivative_order == 2 and min(f.grid.shape) < 16 and not isinstance(f.grid, PointGrid):
        raise DomainError("second-derivative norms need at least 16 points per axis")
    return float(norm_values(f.grid, f.values, kind))


def gradient(f: Field) -> Union[Field, Tuple[Field, ...]]:
    """Spectral (coordinate) gradient; a tuple of component fields in two dimensions."""
    components = tuple(Field(f.grid, f.grid.derivative(f.values, axis)) for axis in range(f.grid.dimension))
    return components[0] if len(components) == 1 else components


@dataclass(frozen=True)
class SmoothingProfile:
    """Growth and smoothing constants: |e^{At}| <= M e^{mt}, |e^{At}|_{B->B1} <= kappa t^{-omega}."""

    M: float = 1.0
    m: float = 0.0
    M1: float = 1.0
    m1: float = 0.0
    kappa: float = 1.0
    omega: float = 0.5
    kappa1: Optional[float] = None

    def __post_init__(self):
        if min(self.M, self.m, self.M1, self.m1) < 0:
            raise DomainError("growth constants must be nonnegative")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not 0.0 <= self.omega < 1.0:
            raise DomainError(f"smoothing exponent omega must lie in [0, 1), got {self.omega}")


class Generator:
    """Spatial generator A in its eigen-representation.

    Subclasses provide the forward and inverse transforms to eigen-coordinates; multipliers are
    arrays shaped like `eigenvalues` and are applied mode by mode.
    """

    kind: str
    grid: SpatialGrid
    eigenvalues: np.ndarray
    smoothing: SmoothingProfile
    alpha: Optional[float] = None
    translation_invariant: bool = False

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def from_modes(self, coeffs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, values: np.ndarray) -> np.ndarray:
        """A applied to (batched) nodal values."""
        return self.apply_multiplier(self.eigenvalues, values)

    def apply_multiplier(self, multiplier: np.ndarray, values: np.ndarray) -> np.ndarray:
        return self.from_modes(multiplier * self.to_modes(np.asarray(values, dtype=float)))

    @property
    def dissipative(self) -> bool:
        return bool(np.all(self.eigenvalues <= 1e-12 * max(1.0, float(np.max(np.abs(self.eigenvalues))))))

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(kind={self.kind!r}, grid={self.grid!r}, alpha={self.alpha})"


class SpectralGenerator(Generator):
    """Fourier multiplier sigma(k) = -|k|^alpha on a torus."""

    translation_invariant = True

    def __init__(self, grid: TorusGrid, alpha: float, kind: str):
        self.grid = grid
        self.alpha = float(alpha)
        self.kind = kind
        self.eigenvalues = -grid.wavenumber_magnitude() ** self.alpha
        self.smoothing = SmoothingProfile(omega=1.0 / self.alpha)
        self._axes = grid.spatial_axes

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=self._axes)

    def from_modes(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs, axes=self._axes).real


class MatrixGenerator(Generator):
    """A = W^{-1} S with S symmetric and W = diag(weights): self-adjoint in the weighted inner product.

    The generalized eigendecomposition S v = lambda W v is computed once; V^T W V = I.
    """

    def __init__(
        self,
        grid: SpatialGrid,
        stiffness: np.ndarray,
        kind: str = "matrix",
        smoothing: Optional[SmoothingProfile] = None,
        require_dissipative: bool = True,
    ):
        stiffness = np.asarray(stiffness, dtype=float)
        n = grid.node_count
        if stiffness.shape != (n, n):
            raise ConfigurationError(f"stiffness matrix has shape {stiffness.shape}, grid has {n} nodes")
        if not np.allclose(stiffness, stiffness.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(stiffness))))):
            raise DomainError("stiffness matrix must be symmetric")
        self.grid = grid
        self.kind = kind
        self.stiffness = 0.5 * (stiffness + stiffness.T)
        self._weights = grid.weights.reshape(-1)
        self.eigenvalues, self.eigenvectors = linalg.eigh(self.stiffness, np.diag(self._weights))
        if require_dissipative and not self.dissipative:
            raise DomainError(f"generator has positive eigenvalue {float(np.max(self.eigenvalues)):.3e}")
        self.smoothing = smoothing or SmoothingProfile()
        logger.debug(f"{kind} generator on {n} nodes, spectrum in [{self.eigenvalues[0]:.4g}, {self.eigenvalues[-1]:.4g}]")

    def to_modes(self, values: np.ndarray) -> np.ndarray:
        flat = values.reshape(values.shape[: values.ndim - self.grid.dimension] + (-1,))
        return (flat * self._weights) @ self.eigenvectors

    def from_modes(self, coeffs: np.ndarray) -> np.ndarray:
        flat = np.real(coeffs) @ self.eigenvectors.T
        return flat.reshape(flat.shape[:-1] + self.grid.shape)

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        flat = values.reshape(values.shape[: values.ndim - self.grid.dimension] + (-1,))
        return ((flat @ self.stiffness) / self._weights).reshape(values.shape)


def build_torus_generator(grid: TorusGrid, kind: str, alpha: Optional[float] = None) -> Generator:
    """Laplacian or fractional Laplacian -|Delta|^{alpha/2} as a Fourier multiplier."""
    if kind == "laplacian":
        return SpectralGenerator(grid, 2.0, "laplacian")
    if kind != "fractional_laplacian":
        raise DomainError(f"unknown torus generator kind {kind!r}")
    if alpha is None or not 1.0 < alpha <= 2.0:
        raise DomainError(f"fractional Laplacian needs alpha in (1, 2], got {alpha}", {"alpha": alpha})
    if alpha == 2.0:
        return SpectralGenerator(grid, 2.0, "laplacian")
    return SpectralGenerator(grid, alpha, "fractional_laplacian")


def scalar_generator(rate: float) -> MatrixGenerator:
    """A = rate on a single node; positive rates are allowed for ODE instances."""
    return MatrixGenerator(
        PointGrid(),
        np.array([[float(rate)]]),
        kind="scalar",
        smoothing=SmoothingProfile(omega=0.0),
        require_dissipative=False,
    )


def semigroup_apply(gen: Generator, t: float, f: Field) -> Field:
    """e^{At} f; t = 0 returns a copy of f."""
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t}")
    if t == 0:
        return Field(f.grid, f.values.copy())
    return Field(f.grid, gen.apply_multiplier(np.exp(gen.eigenvalues * t), f.values))


def adjoint_check(gen: Generator, weights: np.ndarray, b: Field, f: Field, dual: Optional[Generator] = None) -> float:
    """|(Ab, f)_w - (b, A'f)_w| with A' the dual generator (A itself when omitted)."""
    dual = dual or gen
    left = np.sum(gen.apply(b.values) * f.values * weights)
    right = np.sum(b.values * dual.apply(f.values) * weights)
    return float(abs(left - right))


def gradient_duality_defect(b: Field, f: Field, axis: int = 0) -> float:
    """|(Db, f)_w + (b, Df)_w|; vanishes for periodic integration by parts."""
    grid = b.grid
    left = grid.inner(grid.gradient_components(b.values)[axis], f.values)
    right = grid.inner(b.values, grid.gradient_components(f.values)[axis])
    return float(abs(left + right))


def dual_sup_norm(f: Field, bandwidth: int) -> float:
    """max_j |(f, c_j)_w| over unit-L1 Fejer probes c_j centred at the nodes (1-D torus)."""
    grid = f.grid
    if not isinstance(grid, TorusGrid) or grid.dimension != 1:
        raise DomainError("dual sup norm probes are defined on the 1-D torus")
    k = np.fft.fftfreq(grid.points, d=1.0 / grid.points)
    taper = np.clip(1.0 - np.abs(k) / (bandwidth + 1), 0.0, None)
    # Fejer smoothing equals pairing with every translate of the positive unit-mass kernel
    paired = np.fft.ifft(np.fft.fft(f.values) * taper).real
    return float(np.max(np.abs(paired)))


class SmoothingEstimate(NamedTuple):
    omega_hat: float
    kappa_hat: float
    residual: float
    times: np.ndarray
    operator_norms: np.ndarray
    probe_norms: np.ndarray
    seed: int
    fitted: str = "operator_norm:sup"


def gradient_operator_norms(gen: Generator, times: Sequence[float], integral: bool = False) -> np.ndarray:
    """Exact nodal operator norms of grad e^{At} (sup->sup, or L1->L1 when `integral`).

    Columns are impulse responses; for translation-invariant generators one impulse suffices.
    The sup norm is the largest absolute row sum, attained by the sign pattern of that row.
    """
    grid = gen.grid
    n = grid.node_count
    if gen.translation_invariant:
        probes = np.zeros((1,) + grid.shape)
        probes.reshape(1, -1)[0, 0] = 1.0
    else:
        probes = np.eye(n).reshape((n,) + grid.shape)
    norms = []
    for t in times:
        smoothed = gen.apply_multiplier(np.exp(gen.eigenvalues * t), probes)
        total = 0.0
        for component in grid.gradient_components(smoothed):
            columns = component.reshape(component.shape[0], -1)
            if gen.translation_invariant:
                total += float(np.sum(np.abs(columns[0])))
            elif integral:
                # L1 -> L1: largest weighted column sum per unit mass of the impulse
                w = grid.weights.reshape(-1)
                total += float(np.max(np.sum(np.abs(columns) * w[None, :], axis=1) / w))
            else:
                total += float(np.max(np.sum(np.abs(columns), axis=0)))
        norms.append(total)
    return np.asarray(norms)


def fit_power_law(times: np.ndarray, values: np.ndarray) -> Tuple[float, float, float]:
    """Least-squares line through (log t, log value): returns (slope, constant, rms residual)."""
    if np.any(values <= 0) or np.any(np.diff(values) > 0):
        raise FitUnreliableError("fit unreliable: norms are not positive and non-increasing in t", float("nan"))
    log_t, log_v = np.log(times), np.log(values)
    slope, intercept = np.polyfit(log_t, log_v, 1)
    residual = float(np.sqrt(np.mean((log_v - (slope * log_t + intercept)) ** 2)))
    if residual > FIT_RESIDUAL_LIMIT:
        raise FitUnreliableError(f"fit unreliable: rms log residual {residual:.3f}", residual)
    return float(slope), float(math.exp(intercept)), residual


def estimate_smoothing_exponent(
    gen: Generator,
    norm_pair: Tuple[NormKind, NormKind] = (NormKind.SUP, NormKind.SUP),
    times: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> SmoothingEstimate:
    """Fit |grad e^{At}| ~ kappa t^{-omega} over t in [1e-3, 1e-1].

    The fitted norm is the exact nodal operator norm in the source/target norm pair (sup->sup or
    L1->L1); the seeded random +-1 probe is evaluated alongside and reported.
    """
    source, target = (NormKind(kind) for kind in norm_pair)
    if source.is_integral != target.is_integral:
        raise DomainError("smoothing fits compare norms of the same triple")
    if not gen.dissipative:
        raise DomainError("smoothing fit needs a dissipative generator")
    times = np.asarray(SMOOTHING_FIT_TIMES if times is None else times, dtype=float)
    operator_norms = gradient_operator_norms(gen, times, integral=source.is_integral)
    rng = np.random.default_rng(seed)
    probe = rng.choice([-1.0, 1.0], size=gen.grid.shape)
    probe_norm = norm_values(gen.grid, probe, source)
    probe_norms = np.array(
        [
            sum(
                float(norm_values(gen.grid, c, source))
                for c in gen.grid.gradient_components(gen.apply_multiplier(np.exp(gen.eigenvalues * t), probe))
            )
            / float(probe_norm)
            for t in times
        ]
    )
    slope, constant, residual = fit_power_law(times, operator_norms)
    logger.info(f"smoothing fit for {gen.kind}: omega_hat={-slope:.4f}, kappa_hat={constant:.4f}, residual={residual:.2e}")
    return SmoothingEstimate(
        -slope, constant, residual, times, operator_norms, probe_norms, seed, fitted=f"operator_norm:{source.value}"
    )


def smoothness_preservation(gen: Generator, f: Field, times: Sequence[float], kind: NormKind = NormKind.C1) -> float:
    """max_t |e^{At} f| / |f| in a derivative norm; bounded by M1 e^{m1 t} for smoothness-preserving semigroups."""
    base = norm(f, kind)
    if base == 0:
        return 0.0
    return max(norm(semigroup_apply(gen, t, f), kind) / base for t in times)


class CommutatorReport(NamedTuple):
    max_norm: float
    times: np.ndarray
    norms: np.ndarray


def commutator_probes(grid: SpatialGrid, modes: int = 8) -> np.ndarray:
    """Sup-normalized cos/sin probes of harmonics 1..modes along the first axis."""
    coordinate = grid.coordinates()[0]
    period = getattr(grid, "length", 2.0 * math.pi)
    phase = 2.0 * math.pi * coordinate / period
    probes = []
    for k in range(1, modes + 1):
        probes.append(np.cos(k * phase))
        probes.append(np.sin(k * phase))
    probes = np.asarray(probes)
    scale = np.max(np.abs(probes.reshape(len(probes), -1)), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    return probes / scale.reshape((-1,) + (1,) * grid.dimension)


def commutator_norm(gen: Generator, t_values: Sequence[float], modes: int = 8) -> CommutatorReport:
    """Estimate sup over probes of |[D, e^{At}] f|_sup / |f|_sup for each t."""
    grid = gen.grid
    probes = commutator_probes(grid, modes)
    sup = np.max(np.abs(probes.reshape(len(probes), -1)), axis=1)
    sup = np.where(sup > 0, sup, 1.0)
    norms = []
    for t in t_values:
        if t < 0:
            raise DomainError(f"commutator time must be nonnegative, got {t}")
        multiplier = np.exp(gen.eigenvalues * t)
        worst = 0.0
        for axis in range(grid.dimension):
            left = grid.derivative(gen.apply_multiplier(multiplier, probes), axis)
            right = gen.apply_multiplier(multiplier, grid.derivative(probes, axis))
            diff = np.max(np.abs((left - right).reshape(len(probes), -1)), axis=1)
            worst = max(worst, float(np.max(diff / sup)))
        norms.append(worst)
    norms = np.asarray(norms)
    return CommutatorReport(float(np.max(norms)) if norms.size else 0.0, np.asarray(t_values, dtype=float), norms)
