"""Coupled forward-backward systems.

The outer unknown is the forward (density) curve. Each outer step solves the backward HJB
equation given the current forward curve, forms the feedback control u(t, x, Df) and applies the
forward McKean-Vlasov mild map once; the composite is iterated by the damped Picard engine.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import DomainError, NoContractionError
from .manifold import CircleMetric, build_lb_generator
from .mild import (
    ITERATION_CEILING_FLAG,
    Curve,
    HorizonEstimate,
    MildOperator,
    MildSolution,
    PicardConfig,
    TimeGrid,
    VolterraTables,
    attempt_succeeded,
    bisect_horizon,
    effective_omega,
    is_horizon_failure,
    picard_solve,
    solve_backward_fractional,
)
from .mlop import SubordinationPlan, build_plan
from .models import (
    BackwardCoupling,
    ControlMap,
    ControlSet,
    DriftSpec,
    HamiltonianSpec,
    build_control_map,
    build_coupling,
    build_drift,
    build_hamiltonian,
    control_eval,
    coupling_field,
    drift_source,
    hamiltonian_source,
)
from .operators import Field, Generator, NormKind, TorusGrid, adjoint_check, build_torus_generator
from .specfun import DEFAULT_QUADRATURE, FractionalOrder, QuadratureSpec

logger = logging.getLogger(__name__)

OUTER_DAMPING = 0.5
DUAL_DEFECT_LIMIT = 1e-10


@dataclass(frozen=True, eq=False)
class FBProblem:
    forward_gen: Generator
    backward_gen: Generator
    drift: DriftSpec
    hamiltonian: HamiltonianSpec
    controls: ControlSet
    control_map: ControlMap
    Y: Field
    Z: Field
    time_grid: TimeGrid
    order: FractionalOrder
    coupling: BackwardCoupling = field(default_factory=BackwardCoupling)
    quad: QuadratureSpec = DEFAULT_QUADRATURE
    forward_norm: NormKind = NormKind.W1
    backward_norm: NormKind = NormKind.C1

    def __post_init__(self):
        grid = self.backward_gen.grid
        if not self.forward_gen.grid.same_as(grid):
            raise DomainError("forward and backward generators live on different grids")
        for name, f in (("Y", self.Y), ("Z", self.Z)):
            if not f.grid.same_as(grid):
                raise DomainError(f"{name} does not live on the generator grid")

    @property
    def grid(self):
        return self.backward_gen.grid

    @property
    def plan(self) -> SubordinationPlan:
        return build_plan(self.order, self.quad)

    def with_horizon(self, T: float) -> "FBProblem":
        return replace(self, time_grid=self.time_grid.with_horizon(T))

    def dual_defect(self) -> float:
        """|(A b, f) - (b, A* f)| on the initial and terminal data."""
        return adjoint_check(self.backward_gen, self.grid.weights, self.Y, self.Z, dual=self.forward_gen)


@dataclass
class FBReport:
    outer_iterations: int
    converged: bool
    residuals: Dict[str, float] = field(default_factory=dict)
    detected_T0: Optional[float] = None
    horizon_flag: Optional[str] = None
    stop_reason: Optional[str] = None
    mass_drift: float = math.nan
    dual_defect: float = math.nan
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class FBSolution:
    forward_curve: Optional[Curve]
    backward_curve: Optional[Curve]
    report: FBReport


def _backward_source(prob: FBProblem):
    hamiltonian = hamiltonian_source(prob.hamiltonian, prob.controls, prob.grid)
    nodes = prob.time_grid.nodes

    def source(t, values, grads, forward: Optional[Curve] = None):
        out = hamiltonian(t, values, grads)
        if forward is not None and prob.coupling.kind != "none":
            out = out + coupling_field(prob.coupling, t, nodes, forward.values, prob.grid)
        return out

    source.gradient_coupled = hamiltonian.gradient_coupled
    return source


def _cfg_with_norm(cfg: PicardConfig, kind: NormKind, damping: Optional[float] = None) -> PicardConfig:
    damping = cfg.damping if damping is None else damping
    return replace(cfg, norm=kind, damping=damping, min_damping=min(cfg.min_damping, damping))


def solve_backward_given_forward(
    prob: FBProblem, b_curve: Curve, cfg: PicardConfig, initial: Optional[Curve] = None
) -> MildSolution:
    """Backward HJB solve with the forward curve frozen; it enters only through values at s >= t."""
    if b_curve.time_grid != prob.time_grid:
        raise DomainError("forward curve is not on the problem's time grid")
    return solve_backward_fractional(
        prob.backward_gen,
        _backward_source(prob),
        prob.Z,
        b_curve,
        prob.order,
        prob.plan,
        prob.time_grid,
        _cfg_with_norm(cfg, prob.backward_norm),
        initial,
    )


def control_path(prob: FBProblem, f_curve: Curve) -> np.ndarray:
    """Nodal feedback u(t, x, Df(t, x)) along the backward curve."""
    grid = prob.grid
    p = grid.gradient_components(f_curve.values)[0]
    t = prob.time_grid.nodes.reshape((-1,) + (1,) * grid.dimension)
    x = np.broadcast_to(grid.coordinates()[0], p.shape)
    return np.broadcast_to(control_eval(prob.control_map, t, x, p), p.shape)


class _OuterMap:
    """Forward curve -> forward mild map under the control induced by the backward solve."""

    def __init__(self, prob: FBProblem, cfg: PicardConfig):
        self.prob = prob
        self.cfg = cfg
        self.source = drift_source(prob.drift, prob.grid)
        self.forward = MildOperator(VolterraTables(prob.forward_gen, prob.plan, prob.time_grid), self.source, prob.Y)
        self.backward: Optional[MildSolution] = None

    def __call__(self, g_curve: Curve) -> Curve:
        start = self.backward.curve if self.backward is not None else None
        self.backward = solve_backward_given_forward(self.prob, g_curve, self.cfg, start)
        u = control_path(self.prob, self.backward.curve)
        return self.forward(g_curve, 0.5 * (u[:-1] + u[1:]))


def _solve_outer(prob: FBProblem, cfg: PicardConfig, initial: Optional[Curve] = None):
    outer = _OuterMap(prob, cfg)
    start = initial if initial is not None else Curve.constant(prob.time_grid, prob.Y)
    outer_cfg = _cfg_with_norm(cfg, prob.forward_norm, damping=min(cfg.damping, OUTER_DAMPING))
    omega = effective_omega(prob.forward_gen, outer.source, prob.order)
    curve, report = picard_solve(outer, start, outer_cfg, omega)
    return curve, report, outer.backward


def solve_fb(
    prob: FBProblem, cfg: PicardConfig, detect_horizon: bool = True, initial: Optional[Curve] = None
) -> FBSolution:
    """Outer fixed point on the forward curve; non-contraction is reported with a horizon estimate."""
    dual = prob.dual_defect()
    if dual > DUAL_DEFECT_LIMIT:
        logger.warning(f"forward and backward generators are not dual on the data: defect {dual:.3e}")
    try:
        forward, report, backward = _solve_outer(prob, cfg, initial)
    except NoContractionError as e:
        logger.warning(f"forward-backward solve on [{prob.time_grid.a}, {prob.time_grid.T}]: {e.message}")
        fb_report = FBReport(
            outer_iterations=int(e.details.get("iterations", len(e.residual_history))),
            converged=False,
            dual_defect=dual,
            history=list(e.residual_history),
            stop_reason=e.details.get("reason"),
        )
        if not is_horizon_failure(e):
            fb_report.horizon_flag = ITERATION_CEILING_FLAG
            logger.warning(
                f"outer iteration still contracting after {fb_report.outer_iterations} iterations; raise max_iterations"
            )
        elif detect_horizon:
            estimate = horizon_search(prob, cfg, horizon_failed=True)
            fb_report.detected_T0 = estimate.t0
            fb_report.horizon_flag = estimate.flag
        return FBSolution(getattr(e, "last_iterate", None), None, fb_report)
    mass = prob.grid.integrate(forward.values)
    fb_report = FBReport(
        outer_iterations=report.iterations,
        converged=True,
        residuals={"forward": report.final_residual, "backward": backward.report.final_residual},
        mass_drift=float(np.max(np.abs(mass - mass[0]))),
        dual_defect=dual,
        history=list(report.residual_history),
    )
    logger.info(
        f"forward-backward solve converged after {report.iterations} outer iterations, mass drift {fb_report.mass_drift:.3e}"
    )
    return FBSolution(forward, backward.curve, fb_report)


def horizon_search(
    prob: FBProblem, cfg: PicardConfig, rel_width: float = 0.05, horizon_failed: bool = False
) -> HorizonEstimate:
    """Bisect the horizon between the largest succeeding and the smallest failing T.

    A run that stops at max_iterations while still contracting counts as a success, as in solve_fb.
    """

    def attempt(T: float) -> bool:
        return attempt_succeeded(lambda: _solve_outer(prob.with_horizon(T), cfg))

    start = prob.time_grid.a
    estimate = bisect_horizon(attempt, prob.time_grid.T, rel_width=rel_width, start=start, horizon_failed=horizon_failed)
    logger.info(f"horizon search: T0 ~ {estimate.t0:.6g} ({estimate.flag}) after {len(estimate.probes)} probes")
    return estimate


# built-in instances


def torus_demo_problem(
    points: int = 128,
    alpha: float = 1.5,
    beta: float = 0.8,
    T: float = 0.1,
    steps: int = 64,
    drift_strength: float = 0.5,
    coupling_strength: float = 0.5,
    control_count: int = 21,
) -> FBProblem:
    """Fractional Laplacian forward-backward system on the circle of length 2 pi."""
    grid = TorusGrid(points)
    gen = build_torus_generator(grid, "fractional_laplacian", alpha)
    x = grid.nodes
    controls = ControlSet.uniform(-1.0, 1.0, control_count)
    return FBProblem(
        forward_gen=gen,
        backward_gen=gen,
        drift=build_drift("mean-attraction", strength=drift_strength),
        hamiltonian=build_hamiltonian("lq", controls),
        controls=controls,
        control_map=build_control_map("clamp", controls.bounds),
        Y=Field(grid, (1.0 + 0.5 * np.cos(x)) / (2.0 * math.pi)),
        Z=Field(grid, 0.2 * np.cos(x)),
        time_grid=TimeGrid(0.0, T, steps),
        order=FractionalOrder(beta),
        coupling=build_coupling("local-density", coupling_strength),
    )


def manifold_demo_problem(
    points: int = 64,
    beta: float = 0.8,
    T: float = 0.05,
    steps: int = 32,
    metric: Optional[CircleMetric] = None,
    drift_strength: float = 0.5,
    coupling_strength: float = 0.5,
) -> FBProblem:
    """Laplace-Beltrami forward-backward system on the circle with metric 1 + 0.3 sin(theta)."""
    metric = metric or CircleMetric(1.0, [(1, 0.0, 0.3)])
    gen = build_lb_generator(metric, points)
    grid = gen.grid
    theta = grid.theta
    controls = ControlSet.uniform(-1.0, 1.0, 21)
    density = 1.0 + 0.5 * np.cos(theta)
    return FBProblem(
        forward_gen=gen,
        backward_gen=gen,
        drift=build_drift("mean-attraction", strength=drift_strength),
        hamiltonian=build_hamiltonian("lq", controls),
        controls=controls,
        control_map=build_control_map("clamp", controls.bounds),
        Y=Field(grid, density / float(grid.integrate(density))),
        Z=Field(grid, 0.2 * np.cos(theta)),
        time_grid=TimeGrid(0.0, T, steps),
        order=FractionalOrder(beta),
        coupling=build_coupling("local-density", coupling_strength),
    )
