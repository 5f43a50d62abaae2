"""Mild solvers: the damped Picard engine, product-integration Volterra maps for the classical and
fractional forward equations, the time-reflected backward problem, anticipating equations and an
independent Caputo-Dzherbashyan residual check.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import DomainError, IterationCeilingError, NoContractionError
from .mlop import SubordinationPlan, build_plan, ml_multiplier, step_kernel_multiplier
from .operators import Field, Generator, NormKind, SpatialGrid, norm_values
from .specfun import FractionalOrder, growth_factor

logger = logging.getLogger(__name__)

MIN_STEPS = 8
CONTRACTION_WINDOW = 5
ITERATION_CEILING_FLAG = "iteration ceiling"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform nodes t_j = a + j (T - a) / steps."""

    a: float
    T: float
    steps: int

    def __post_init__(self):
        if not self.a < self.T:
            raise DomainError(f"time grid needs a < T, got a={self.a}, T={self.T}")
        if int(self.steps) != self.steps or self.steps < MIN_STEPS:
            raise DomainError(f"time grid needs at least {MIN_STEPS} steps, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def step(self) -> float:
        return (self.T - self.a) / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return self.a + np.arange(self.steps + 1) * self.step

    @property
    def midpoints(self) -> np.ndarray:
        return self.a + (np.arange(self.steps) + 0.5) * self.step

    def with_horizon(self, T: float, keep_step: bool = False) -> "TimeGrid":
        """Same start on a new horizon; keep_step rescales the step count to the current step."""
        steps = max(MIN_STEPS, int(round((T - self.a) / self.step))) if keep_step else self.steps
        return TimeGrid(self.a, T, steps)


@dataclass(frozen=True, eq=False)
class Curve:
    """Fields on one spatial grid sampled at every node of a time grid."""

    time_grid: TimeGrid
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.time_grid.steps + 1,) + self.grid.shape
        if values.shape != expected:
            raise DomainError(f"curve has shape {values.shape}, expected {expected}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, time_grid: TimeGrid, f: Field) -> "Curve":
        return cls(time_grid, f.grid, np.broadcast_to(f.values, (time_grid.steps + 1,) + f.grid.shape))

    def field(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    def node_norms(self, kind: NormKind) -> np.ndarray:
        return norm_values(self.grid, self.values, kind)

    def norm(self, kind: NormKind = NormKind.C1) -> float:
        """Curve norm: the largest spatial norm over the time nodes."""
        return float(np.max(self.node_norms(kind)))

    def distance(self, other: "Curve", kind: NormKind = NormKind.C1) -> float:
        return self.with_values(self.values - other.values).norm(kind)

    def with_values(self, values: np.ndarray) -> "Curve":
        return Curve(self.time_grid, self.grid, values)

    def reversed(self) -> "Curve":
        """Reflection s -> a + T - s on the same time grid."""
        return self.with_values(self.values[::-1])

    def midpoint_values(self) -> np.ndarray:
        return 0.5 * (self.values[:-1] + self.values[1:])


@dataclass(frozen=True)
class PicardConfig:
    tol: float = 1e-8
    max_iterations: int = 200
    damping: float = 1.0
    min_damping: float = 0.125
    norm: NormKind = NormKind.C1
    norm_ceiling: float = 1e8
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError(f"Picard tolerance must be positive, got {self.tol}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if not 0.0 < self.damping <= 1.0 or not 0.0 < self.min_damping <= self.damping:
            raise DomainError(f"damping must satisfy 0 < min_damping <= damping <= 1, got {self.min_damping}, {self.damping}")
        object.__setattr__(self, "norm", NormKind(self.norm))


@dataclass
class PicardReport:
    iterations: int
    final_residual: float
    residual_history: List[float] = field(default_factory=list)
    apriori_bound: float = math.nan
    lipschitz_estimate: float = math.nan
    damping: float = 1.0
    monotone: bool = True
    converged: bool = True
    bound_satisfied: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _singular_weights(nodes: np.ndarray, omega: float) -> np.ndarray:
    """W with (W g)_n = int_a^{t_n} (t_n - s)^{-omega} g(s) ds for piecewise-linear g."""
    n = nodes.size
    weights = np.zeros((n, n))
    for k in range(1, n):
        u_hi = nodes[k] - nodes[:k]
        u_lo = nodes[k] - nodes[1 : k + 1]
        h = u_hi - u_lo
        p0 = (u_hi ** (1.0 - omega) - u_lo ** (1.0 - omega)) / (1.0 - omega)
        p1 = (u_hi ** (2.0 - omega) - u_lo ** (2.0 - omega)) / (2.0 - omega)
        slope = (p1 - u_lo * p0) / h
        weights[k, :k] += slope
        weights[k, 1 : k + 1] += p0 - slope
    return weights


def _growth_check(
    solution: Curve, image: Curve, reference: Curve, reference_image: Curve, cfg: PicardConfig, omega: float, residual: float
) -> Tuple[float, float, bool]:
    """Measured Lipschitz constant, a-priori bound and whether |b* - Y| stays below it at every node.

    L is the largest ratio |Phi(b*) - Phi(Y)| / int (t - s)^{-omega} |b* - Y| ds over the nodes. The
    check accepts the closed-form bound c E_{1-omega}(L Gamma(1-omega) (t-a)^{1-omega}) or its discrete
    comparison sequence on the same quadrature, whichever is larger.
    """
    g = norm_values(solution.grid, solution.values - reference.values, cfg.norm)
    c = np.maximum.accumulate(norm_values(solution.grid, reference_image.values - reference.values, cfg.norm))
    numerator = norm_values(solution.grid, image.values - reference_image.values, cfg.norm)
    nodes = solution.time_grid.nodes
    weights = _singular_weights(nodes, omega)
    integral = weights @ g
    scale = max(1.0, float(np.max(g)))
    usable = integral > 1e-14 * scale
    lipschitz = float(np.max(numerator[usable] / integral[usable])) if np.any(usable) else 0.0
    order = 1.0 - omega
    elapsed = nodes - nodes[0]
    closed = c * np.array([growth_factor(order, lipschitz * math.gamma(order) * tau**order) for tau in elapsed])
    slack = residual + 1e-12 * scale
    discrete = np.empty_like(g)
    for n in range(nodes.size):
        diagonal = 1.0 - lipschitz * weights[n, n]
        history = lipschitz * float(weights[n, :n] @ discrete[:n])
        discrete[n] = (c[n] + slack + history) / diagonal if diagonal > 0 else math.inf
    bound = np.maximum(closed, discrete)
    satisfied = bool(np.all(g <= bound * (1.0 + 1e-9) + slack))
    return lipschitz, float(np.max(closed)), satisfied


def picard_solve(
    mapping: Callable[[Curve], Curve], initial: Curve, cfg: PicardConfig, omega: float = 0.0
) -> Tuple[Curve, PicardReport]:
    """Damped fixed-point iteration b <- (1 - d) b + d Phi(b) in the sup-over-time curve norm.

    Returns the first iterate with |Phi(b) - b| <= tol. The damping is halved (down to
    min_damping) after two residual increases. `omega` is the kernel singularity used for the
    a-priori growth check of the converged curve.
    """
    b = initial
    damping = cfg.damping
    history: List[float] = []
    increases = 0
    first_image: Optional[Curve] = None
    for iteration in range(cfg.max_iterations + 1):
        image = mapping(b)
        if first_image is None:
            first_image = image
        residual = b.distance(image, cfg.norm)
        size = image.norm(cfg.norm)
        history.append(residual)
        logger.debug(f"picard iteration {iteration}: residual {residual:.3e}, damping {damping}")
        if not math.isfinite(size) or size > cfg.norm_ceiling:
            raise IterationCeilingError(
                f"no contraction detected: iterate norm {size:.3e} exceeds the ceiling {cfg.norm_ceiling:.1e}",
                history,
                {"reason": "norm_ceiling", "contracting": False, "iterations": iteration},
            )
        if residual <= cfg.tol:
            monotone = bool(np.all(np.diff(history[1:]) <= 0.0))
            if not monotone:
                logger.info("picard residuals were not monotone after the first iteration")
            lipschitz, bound, satisfied = _growth_check(b, image, initial, first_image, cfg, omega, residual)
            if not satisfied:
                logger.warning(f"growth bound violated: measured L={lipschitz:.4g}, bound {bound:.4g}")
            return b, PicardReport(iteration, residual, history, bound, lipschitz, damping, monotone, True, satisfied)
        if iteration == cfg.max_iterations:
            break
        if history[0] > 0 and residual > cfg.divergence_factor * history[0]:
            raise NoContractionError(
                f"no contraction detected: residual grew from {history[0]:.3e} to {residual:.3e}",
                history,
                {"reason": "divergence", "contracting": False, "iterations": iteration},
            )
        if len(history) > 1 and residual > history[-2]:
            increases += 1
            if increases >= 2 and damping > cfg.min_damping:
                damping = max(0.5 * damping, cfg.min_damping)
                increases = 0
                logger.info(f"picard residual increased twice, damping lowered to {damping}")
        b = b.with_values((1.0 - damping) * b.values + damping * image.values) if damping < 1.0 else image
    ratios = np.asarray(history[-CONTRACTION_WINDOW:])
    contracting = bool(ratios.size > 1 and np.all(ratios[1:] < ratios[:-1]))
    error = NoContractionError(
        f"no contraction detected: residual {history[-1]:.3e} above tol {cfg.tol:.1e} after {cfg.max_iterations} iterations",
        history,
        {"reason": "max_iterations", "contracting": contracting, "iterations": cfg.max_iterations},
    )
    error.last_iterate = b
    raise error


class MildSolution(NamedTuple):
    curve: Curve
    report: PicardReport


class VolterraTables:
    """Mode-wise multipliers of the mild map on one time grid.

    homogeneous[n] = E_beta(A (t_n - a)^beta) and lag[l] integrates the kernel
    beta u^{beta-1} E'_beta(A u^beta) exactly over u in [l h, (l + 1) h].
    """

    def __init__(self, gen: Generator, plan: SubordinationPlan, time_grid: TimeGrid):
        self.gen = gen
        self.plan = plan
        self.time_grid = time_grid
        h = time_grid.step
        elapsed = time_grid.nodes - time_grid.a
        self.homogeneous = np.stack([ml_multiplier(plan, gen.eigenvalues, tau) for tau in elapsed])
        self.lag = np.stack(
            [step_kernel_multiplier(plan, gen.eigenvalues, l * h, (l + 1) * h) for l in range(time_grid.steps)]
        )

    def evolve(self, initial_values: np.ndarray, source_values: np.ndarray) -> np.ndarray:
        """Nodal values of E(A(t-a)^beta) Y + sum over steps of kernel integrals against the source samples."""
        gen = self.gen
        steps = self.time_grid.steps
        initial_modes = gen.to_modes(initial_values)
        source_modes = gen.to_modes(source_values)
        modes = self.homogeneous * initial_modes[None, ...]
        for n in range(1, steps + 1):
            modes[n] = modes[n] + np.sum(self.lag[n - 1 :: -1] * source_modes[:n], axis=0)
        return gen.from_modes(modes)


class MildOperator:
    """Curve map Phi(b)(t) = E(A(t-a)^beta) Y + int beta (t-s)^{beta-1} E'(A(t-s)^beta) H(s, b(s), Db(s), par) ds.

    The source is sampled at step midpoints; Phi(b)(a) = Y exactly.
    """

    def __init__(self, tables: VolterraTables, source: Callable, Y: Field):
        if not Y.grid.same_as(tables.gen.grid):
            raise DomainError("initial datum and generator live on different grids")
        self.tables = tables
        self.source = source
        self.Y = Y

    def source_values(self, curve: Curve, par: Any = None) -> np.ndarray:
        grid = curve.grid
        mid = curve.midpoint_values()
        grads = tuple(grid.gradient_components(mid))
        values = np.asarray(self.source(self.tables.time_grid.midpoints, mid, grads, par), dtype=float)
        return np.broadcast_to(values, mid.shape)

    def __call__(self, curve: Curve, par: Any = None) -> Curve:
        values = self.tables.evolve(self.Y.values, self.source_values(curve, par))
        values[0] = self.Y.values
        return curve.with_values(values)


def effective_omega(gen: Generator, source: Callable, order: FractionalOrder) -> float:
    """Kernel singularity of the mild map: 1 - beta (1 - omega_gen) for gradient-coupled sources."""
    omega_gen = gen.smoothing.omega if getattr(source, "gradient_coupled", True) else 0.0
    return 1.0 - order.beta * (1.0 - omega_gen)


def _zero_source(t, values, grads, par=None):
    return np.zeros_like(values)


_zero_source.gradient_coupled = False


def _check_grids(gen: Generator, *fields: Field) -> None:
    for f in fields:
        if not f.grid.same_as(gen.grid):
            raise DomainError(f"field on {f.grid!r} does not match generator grid {gen.grid!r}")


def solve_forward_fractional(
    gen: Generator,
    H: Optional[Callable],
    Y: Field,
    par: Any,
    order: FractionalOrder,
    plan: SubordinationPlan,
    tg: TimeGrid,
    cfg: PicardConfig,
    initial: Optional[Curve] = None,
) -> MildSolution:
    """Fixed point of the fractional mild equation with initial datum Y."""
    _check_grids(gen, Y)
    if plan.order != order:
        raise DomainError(f"plan for beta={plan.order.beta} used with beta={order.beta}")
    source = H or _zero_source
    operator = MildOperator(VolterraTables(gen, plan, tg), source, Y)
    start = initial if initial is not None else Curve.constant(tg, Y)
    curve, report = picard_solve(lambda b: operator(b, par), start, cfg, effective_omega(gen, source, order))
    logger.info(f"forward mild solve (beta={order.beta}) converged in {report.iterations} iterations")
    return MildSolution(curve, report)


def solve_forward_classical(
    gen: Generator,
    H: Optional[Callable],
    Y: Field,
    par: Any,
    tg: TimeGrid,
    cfg: PicardConfig,
    initial: Optional[Curve] = None,
) -> MildSolution:
    """beta = 1: b(t) = e^{A(t-a)} Y + int e^{A(t-s)} H ds."""
    order = FractionalOrder(1.0)
    return solve_forward_fractional(gen, H, Y, par, order, build_plan(order), tg, cfg, initial)


def solve_backward_fractional(
    gen: Generator,
    Hb: Optional[Callable],
    Z: Field,
    coupling: Any,
    order: FractionalOrder,
    plan: SubordinationPlan,
    tg: TimeGrid,
    cfg: PicardConfig,
    initial: Optional[Curve] = None,
) -> MildSolution:
    """Terminal-value problem f(T) = Z solved forward in reflected time s -> a + T - s.

    Hb receives original times and the `coupling` object (typically the frozen forward curve) as
    its parameter and enters with a plus sign.
    """
    source = Hb or _zero_source

    def reflected(s, values, grads, par=None):
        return source(tg.a + tg.T - np.asarray(s, dtype=float), values, grads, coupling)

    reflected.gradient_coupled = getattr(source, "gradient_coupled", True)
    start = initial.reversed() if initial is not None else None
    solution = solve_forward_fractional(gen, reflected, Z, None, order, plan, tg, cfg, start)
    return MildSolution(solution.curve.reversed(), solution.report)


def solve_anticipating(
    gen: Generator,
    H: Callable,
    u_functional: Callable[[Curve], np.ndarray],
    Y: Field,
    order: FractionalOrder,
    plan: SubordinationPlan,
    tg: TimeGrid,
    cfg: PicardConfig,
    initial: Optional[Curve] = None,
) -> MildSolution:
    """Forward mild equation whose parameter path u(b) may read the whole current curve.

    u_functional returns nodal values of shape (steps + 1, ...); the source receives their step
    midpoint averages as `par`.
    """
    _check_grids(gen, Y)
    operator = MildOperator(VolterraTables(gen, plan, tg), H, Y)

    def mapping(curve: Curve) -> Curve:
        path = np.asarray(u_functional(curve), dtype=float)
        return operator(curve, 0.5 * (path[:-1] + path[1:]))

    start = initial if initial is not None else Curve.constant(tg, Y)
    curve, report = picard_solve(mapping, start, cfg, effective_omega(gen, H, order))
    logger.info(f"anticipating solve on [{tg.a}, {tg.T}] converged in {report.iterations} iterations")
    return MildSolution(curve, report)


def cd_residual(curve: Curve, order: FractionalOrder, gen: Generator, H: Optional[Callable] = None, par: Any = None) -> Curve:
    """D^beta b - A b - H(t, b, Db, par) at the interior nodes.

    The left Caputo-Dzherbashyan derivative is the boundary term (b(t) - b(a)) / (Gamma(1-beta)(t-a)^beta)
    plus the singular integral of (b(t - z) - b(t)) z^{-1-beta} / Gamma(-beta), integrated exactly
    against the piecewise-linear interpolant of the curve. beta = 1 uses central differences.
    """
    tg = curve.time_grid
    if tg.steps < MIN_STEPS + 2:
        raise DomainError(f"cd residual needs at least {MIN_STEPS + 2} steps, got {tg.steps}")
    h = tg.step
    b = curve.values
    interior = np.arange(1, tg.steps)
    if order.is_classical:
        derivative = (b[2:] - b[:-2]) / (2.0 * h)
    else:
        beta = order.beta
        derivative = np.empty((interior.size,) + curve.grid.shape)
        for row, n in enumerate(interior):
            m = np.arange(n)
            z_lo, z_hi = m * h, (m + 1) * h
            later = b[n - m]
            earlier = b[n - m - 1]
            d0 = (later - b[n]).reshape(n, -1)
            d1 = ((earlier - later) / h).reshape(n, -1)
            j1 = (z_hi ** (1.0 - beta) - z_lo ** (1.0 - beta)) / (1.0 - beta)
            j0 = np.zeros(n)
            j0[1:] = (z_lo[1:] ** (-beta) - z_hi[1:] ** (-beta)) / beta
            shifted = (d0 - d1 * z_lo[:, None]) * j0[:, None]
            shifted[0] = 0.0
            integral = np.sum(shifted + d1 * j1[:, None], axis=0).reshape(curve.grid.shape)
            boundary = (b[n] - b[0]) / (math.gamma(1.0 - beta) * (n * h) ** beta)
            derivative[row] = integral / special.gamma(-beta) + boundary
    nodal = b[interior]
    residual = derivative - gen.apply(nodal)
    if H is not None:
        grads = tuple(curve.grid.gradient_components(nodal))
        residual = residual - np.broadcast_to(np.asarray(H(tg.nodes[interior], nodal, grads, par), dtype=float), nodal.shape)
    inner_grid = TimeGrid(tg.a + h, tg.T - h, tg.steps - 2)
    return Curve(inner_grid, curve.grid, residual)


def perturbation_constants(solve: Callable[[float], Curve], sizes: Sequence[float], kind: NormKind = NormKind.C1) -> np.ndarray:
    """K_i = |solve(eps_i) - solve(0)| / eps_i for a unit-norm perturbation scaled by eps_i."""
    base = solve(0.0)
    return np.array([solve(eps).distance(base, kind) / eps for eps in sizes])


class HorizonEstimate(NamedTuple):
    t0: float
    flag: str
    probes: List[Tuple[float, bool]]


def is_horizon_failure(error: NoContractionError) -> bool:
    """False when the run only hit max_iterations while its residuals were still falling."""
    return not (error.details.get("reason") == "max_iterations" and error.details.get("contracting", False))


def attempt_succeeded(attempt: Callable[[], Any]) -> bool:
    """Run one solve; a run stopped at max_iterations while still contracting counts as success."""
    try:
        attempt()
    except NoContractionError as e:
        return not is_horizon_failure(e)
    return True


def bisect_horizon(
    attempt: Callable[[float], bool],
    horizon: float,
    rel_width: float = 0.05,
    max_halvings: int = 12,
    start: float = 0.0,
    horizon_failed: bool = False,
) -> HorizonEstimate:
    """Bracket the largest horizon in (start, horizon] at which `attempt` succeeds.

    Success is assumed monotone in the horizon; the bracket is bisected until its relative width is
    below rel_width and its midpoint is returned. With horizon_failed the caller has already seen
    `horizon` fail and it is not solved again.
    """
    probes: List[Tuple[float, bool]] = []

    def probe(T: float) -> bool:
        ok = bool(attempt(T))
        probes.append((T, ok))
        logger.info(f"horizon probe T={T:.6g}: {'success' if ok else 'failure'}")
        return ok

    if horizon_failed:
        probes.append((horizon, False))
    elif probe(horizon):
        return HorizonEstimate(horizon, "no failure observed", probes)
    hi = horizon
    lo = None
    T = horizon
    for _ in range(max_halvings):
        T = start + 0.5 * (T - start)
        if probe(T):
            lo = T
            break
        hi = T
    if lo is None:
        return HorizonEstimate(start, "no success observed", probes)
    while (hi - lo) / hi > rel_width:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return HorizonEstimate(0.5 * (lo + hi), "bracketed", probes)
