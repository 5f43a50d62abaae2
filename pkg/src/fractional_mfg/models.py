"""Nonlinearities: HJB/Isaacs Hamiltonians over finite control sets, integral-functional drifts of
McKean-Vlasov type, the Lipschitz control map coupling the backward to the forward equation, and
sampling audits of their Lipschitz budgets.

Sources handed to the mild solvers share one signature, ``source(t, values, grads, par)``: ``t``
holds the sample times, ``values`` and every entry of ``grads`` carry one leading axis over those
times, and ``par`` is the run parameter (a control path, a parameter vector, or None).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DomainError
from .operators import Field, NormKind, SpatialGrid, norm_values

logger = logging.getLogger(__name__)

Source = Callable[[np.ndarray, np.ndarray, Tuple[np.ndarray, ...], Any], np.ndarray]

AUDIT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite discretization of the compact control set U (scalar controls)."""

    values: np.ndarray
    refinement: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size == 0:
            raise DomainError("control set must be nonempty")
        if not np.all(np.isfinite(values)):
            raise DomainError("control values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int, refinement: int = 0) -> "ControlSet":
        if count < 1 or hi < lo:
            raise DomainError(f"uniform control set needs count >= 1 and lo <= hi, got ({lo}, {hi}, {count})")
        return cls(np.linspace(lo, hi, count), refinement)

    @property
    def bounds(self) -> Tuple[float, float]:
        return float(np.min(self.values)), float(np.max(self.values))

    @property
    def gap(self) -> float:
        """Largest distance between neighbouring controls."""
        ordered = np.sort(self.values)
        return float(np.max(np.diff(ordered))) if ordered.size > 1 else 0.0

    def __len__(self) -> int:
        return int(self.values.size)


class LipschitzBudget(NamedTuple):
    L_H: float = 0.0
    L_H_prime: float = 0.0
    L_H_par: float = 0.0


def _zero(t, x, u):
    return np.zeros(np.broadcast(t, x, u).shape)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H(t,x,p) = sup_u [J(t,x,u) + g(t,x,u) p].

    In ``supinf-separated`` mode the adversary term inf_v [J2(t,x,v) + g2(t,x,v) p] and the base
    cost J0(t,x) are added.
    """

    running_cost: Callable
    drift_coeff: Callable
    mode: str = "sup"
    adversary_cost: Callable = _zero
    adversary_coeff: Callable = _zero
    adversary_controls: Optional[ControlSet] = None
    base_cost: Optional[Callable] = None
    budget: LipschitzBudget = field(default_factory=LipschitzBudget)
    name: str = "custom"

    def __post_init__(self):
        if self.mode not in ("sup", "supinf-separated"):
            raise DomainError(f"unknown Hamiltonian mode {self.mode!r}")


def _candidates(cost: Callable, coeff: Callable, controls: np.ndarray, t, x, p) -> np.ndarray:
    t = np.asarray(t, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)[..., None]
    return cost(t, x, controls) + coeff(t, x, controls) * np.asarray(p, dtype=float)[..., None]


def hamiltonian_field(spec: HamiltonianSpec, ctrl: ControlSet, t, x, p) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized H and maximizing control over broadcast (t, x, p) arrays.

    Ties resolve to the lowest control index.
    """
    p = np.asarray(p, dtype=float)
    x = np.broadcast_to(np.asarray(x, dtype=float), p.shape)
    values = _candidates(spec.running_cost, spec.drift_coeff, ctrl.values, t, x, p)
    index = np.argmax(values, axis=-1)
    total = np.take_along_axis(values, index[..., None], axis=-1)[..., 0]
    if spec.mode == "supinf-separated":
        adversary = spec.adversary_controls or ctrl
        total = total + np.min(_candidates(spec.adversary_cost, spec.adversary_coeff, adversary.values, t, x, p), axis=-1)
        if spec.base_cost is not None:
            total = total + np.broadcast_to(spec.base_cost(np.asarray(t, dtype=float), x), total.shape)
    return total, ctrl.values[index]


def hamiltonian_eval(spec: HamiltonianSpec, ctrl: ControlSet, t: float, x: float, p: float) -> Tuple[float, float]:
    """Exact maximum over the finite control set and its lowest-index maximizer."""
    value, maximizer = hamiltonian_field(spec, ctrl, t, np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    return float(value), float(maximizer)


class InterchangeDefect(NamedTuple):
    sup_inf: float
    inf_sup: float
    defect: float


def interchange_defect(payoff: Callable[[np.ndarray, np.ndarray], np.ndarray], ctrl_u: ControlSet, ctrl_v: ControlSet) -> InterchangeDefect:
    """Brute-force sup_u inf_v and inf_v sup_u of payoff(u, v) over two finite sets."""
    table = np.asarray(payoff(ctrl_u.values[:, None], ctrl_v.values[None, :]), dtype=float)
    table = np.broadcast_to(table, (ctrl_u.values.size, ctrl_v.values.size))
    sup_inf = float(np.max(np.min(table, axis=1)))
    inf_sup = float(np.min(np.max(table, axis=0)))
    return InterchangeDefect(sup_inf, inf_sup, inf_sup - sup_inf)


def isaacs_interchange(spec: HamiltonianSpec, ctrl: ControlSet, t: float, x: float, p: float) -> InterchangeDefect:
    """Interchange defect of the payoff J + g p + J2 + g2 p built from a separated spec."""
    adversary = spec.adversary_controls or ctrl

    def payoff(u, v):
        return (
            spec.running_cost(t, x, u)
            + spec.drift_coeff(t, x, u) * p
            + spec.adversary_cost(t, x, v)
            + spec.adversary_coeff(t, x, v) * p
        )

    return interchange_defect(payoff, ctrl, adversary)


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Drift h(x, m, u) with m = integral of observable(x) f(x) against the volume weights."""

    observable: Callable[[np.ndarray], np.ndarray]
    interaction: Callable
    L_h: float = 0.0
    L_hu: float = 0.0
    name: str = "custom"


def mean_functional(spec: DriftSpec, grid: SpatialGrid, values: np.ndarray) -> np.ndarray:
    """m = sum_j w_j g_obs(x_j) f_j, batched over leading axes."""
    weighted = spec.observable(grid.coordinates()[0]) * grid.weights
    return np.sum(np.asarray(values, dtype=float) * weighted, axis=grid.spatial_axes)


def drift_eval(spec: DriftSpec, x, f: Field, weights: np.ndarray, u=0.0):
    """h(x, m) for the field f; weights are the volume weights of f's grid."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != f.grid.shape:
        raise DomainError(f"weights have shape {weights.shape}, field grid is {f.grid.shape}")
    m = float(np.sum(weights * spec.observable(f.grid.coordinates()[0]) * f.values))
    result = spec.interaction(np.asarray(x, dtype=float), m, u)
    return float(result) if np.ndim(result) == 0 else result


@dataclass(frozen=True, eq=False)
class ControlMap:
    """Feedback u(t, x, p) with declared Lipschitz constant in p; bounds clamp the output."""

    function: Callable
    L_u: float
    bounds: Optional[Tuple[float, float]] = None
    name: str = "custom"


def control_eval(cmap: ControlMap, t, x, p):
    """u(t, x, p) projected onto the control bounds; projections are logged."""
    raw = np.asarray(cmap.function(t, np.asarray(x, dtype=float), np.asarray(p, dtype=float)), dtype=float)
    if cmap.bounds is not None:
        lo, hi = cmap.bounds
        outside = int(np.count_nonzero((raw < lo) | (raw > hi)))
        if outside:
            logger.info(f"control map {cmap.name}: projected {outside} values onto [{lo}, {hi}]")
            raw = np.clip(raw, lo, hi)
    return float(raw) if raw.ndim == 0 else raw


@dataclass(frozen=True)
class BackwardCoupling:
    """How the frozen forward curve enters the backward Hamiltonian.

    ``future-mass`` adds strength times the integral of the forward mass over [t, T];
    ``local-density`` adds strength times the forward value at (t, x).
    """

    kind: str = "none"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "future-mass", "local-density"):
            raise ConfigurationError(f"unknown backward coupling {self.kind!r}")


def coupling_field(coupling: BackwardCoupling, times: np.ndarray, nodes: np.ndarray, forward: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Coupling term at `times` from the forward curve sampled at `nodes`; only values at s >= t are read."""
    times = np.asarray(times, dtype=float)
    shape = times.shape + grid.shape
    if coupling.kind == "none" or coupling.strength == 0.0:
        return np.zeros(shape)
    index = np.clip(np.searchsorted(nodes, times, side="right") - 1, 0, nodes.size - 2)
    theta = ((times - nodes[index]) / (nodes[index + 1] - nodes[index])).reshape((-1,) + (1,) * grid.dimension)
    if coupling.kind == "local-density":
        local = (1.0 - theta) * forward[index] + theta * forward[index + 1]
        return coupling.strength * local.reshape(shape)
    mass = grid.integrate(forward)
    steps = np.diff(nodes)
    tail = np.concatenate([np.cumsum((0.5 * steps * (mass[1:] + mass[:-1]))[::-1])[::-1], [0.0]])
    theta = theta.reshape(-1)
    mass_t = (1.0 - theta) * mass[index] + theta * mass[index + 1]
    remaining = tail[index + 1] + 0.5 * (nodes[index + 1] - times) * (mass_t + mass[index + 1])
    return coupling.strength * np.broadcast_to(remaining.reshape((-1,) + (1,) * grid.dimension), shape).copy()


def hamiltonian_source(spec: HamiltonianSpec, ctrl: ControlSet, grid: SpatialGrid) -> Source:
    """H(t, x, df/dx) as a mild-solver source; the derivative along the first axis plays p."""
    x = grid.coordinates()[0]

    def source(t, values, grads, par=None):
        t = np.asarray(t, dtype=float).reshape((-1,) + (1,) * grid.dimension)
        value, _ = hamiltonian_field(spec, ctrl, t, np.broadcast_to(x, grads[0].shape), grads[0])
        return value

    source.gradient_coupled = spec.name != "zero"
    return source


def drift_source(spec: DriftSpec, grid: SpatialGrid) -> Source:
    """h(x, m(f), u) times df/dx; `par` carries the control path sampled like `values` (or None)."""
    x = grid.coordinates()[0]

    def source(t, values, grads, par=None):
        m = mean_functional(spec, grid, values).reshape((-1,) + (1,) * grid.dimension)
        u = 0.0 if par is None else par
        return spec.interaction(x, m, u) * grads[0]

    source.gradient_coupled = spec.name != "zero"
    return source


# catalogs


def build_hamiltonian(kind: str, controls: ControlSet, **params) -> HamiltonianSpec:
    umax = float(np.max(np.abs(controls.values)))
    if kind == "zero":
        _reject_params(kind, params, ())
        return HamiltonianSpec(_zero, _zero, name="zero")
    if kind == "lq":
        _reject_params(kind, params, ("cost",))
        cost = float(params.get("cost", 1.0))
        return HamiltonianSpec(
            lambda t, x, u: -0.5 * cost * u**2,
            lambda t, x, u: u + 0.0 * x,
            budget=LipschitzBudget(L_H=umax),
            name="lq",
        )
    if kind == "bang-bang":
        _reject_params(kind, params, ("cost",))
        cost = float(params.get("cost", 0.0))
        return HamiltonianSpec(
            lambda t, x, u: -cost * np.abs(u) + 0.0 * x,
            lambda t, x, u: u + 0.0 * x,
            budget=LipschitzBudget(L_H=umax),
            name="bang-bang",
        )
    if kind == "isaacs-separated":
        _reject_params(kind, params, ("cost", "adversary_cost", "base"))
        cost = float(params.get("cost", 1.0))
        adversary_cost = float(params.get("adversary_cost", 1.0))
        base = float(params.get("base", 0.0))
        return HamiltonianSpec(
            lambda t, x, u: -0.5 * cost * u**2,
            lambda t, x, u: u + 0.0 * x,
            mode="supinf-separated",
            adversary_cost=lambda t, x, v: 0.5 * adversary_cost * v**2,
            adversary_coeff=lambda t, x, v: v + 0.0 * x,
            base_cost=lambda t, x: base * np.cos(x),
            budget=LipschitzBudget(L_H=2.0 * umax),
            name="isaacs-separated",
        )
    raise ConfigurationError(f"unknown hamiltonian kind {kind!r}", {"kind": kind})


def build_drift(kind: str, **params) -> DriftSpec:
    if kind == "zero":
        _reject_params(kind, params, ())
        return DriftSpec(np.ones_like, lambda x, m, u: 0.0 * m + 0.0 * x, name="zero")
    if kind == "constant":
        _reject_params(kind, params, ("value",))
        value = float(params.get("value", 0.0))
        return DriftSpec(np.ones_like, lambda x, m, u: value + 0.0 * m + 0.0 * x, name="constant")
    if kind == "mean-field":
        _reject_params(kind, params, ("strength",))
        strength = float(params.get("strength", 1.0))
        return DriftSpec(np.cos, lambda x, m, u: strength * m + 0.0 * x, L_h=abs(strength), name="mean-field")
    if kind == "mean-attraction":
        _reject_params(kind, params, ("strength", "control_weight"))
        strength = float(params.get("strength", 0.5))
        weight = float(params.get("control_weight", 1.0))
        return DriftSpec(
            np.cos,
            lambda x, m, u: strength * np.tanh(m) + weight * u + 0.0 * x,
            L_h=abs(strength),
            L_hu=abs(weight),
            name="mean-attraction",
        )
    raise ConfigurationError(f"unknown drift kind {kind!r}", {"kind": kind})


def build_control_map(kind: str, bounds: Optional[Tuple[float, float]] = None, **params) -> ControlMap:
    if kind == "constant":
        _reject_params(kind, params, ("value",))
        value = float(params.get("value", 0.0))
        return ControlMap(lambda t, x, p: value + 0.0 * p, 0.0, bounds, name="constant")
    if kind == "linear":
        _reject_params(kind, params, ("gain",))
        gain = float(params.get("gain", 1.0))
        return ControlMap(lambda t, x, p: gain * p, abs(gain), bounds, name="linear")
    if kind == "clamp":
        _reject_params(kind, params, ("gain",))
        gain = float(params.get("gain", 1.0))
        lo, hi = bounds if bounds is not None else (-1.0, 1.0)
        return ControlMap(lambda t, x, p: np.clip(gain * p, lo, hi), abs(gain), (lo, hi), name="clamp")
    raise ConfigurationError(f"unknown control map kind {kind!r}", {"kind": kind})


def build_coupling(kind: str, strength: float = 0.0) -> BackwardCoupling:
    return BackwardCoupling(kind, float(strength))


def _reject_params(kind: str, params: Dict[str, Any], allowed: Sequence[str]) -> None:
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown parameters for {kind!r}: {unknown}", {"kind": kind, "unknown": unknown})


# Lipschitz audits


@dataclass(frozen=True, eq=False)
class ControlChain:
    """Composite x -> u(t, x, df/dx(x)) as a map of the field f in the C1 norm."""

    control_map: ControlMap
    grid: SpatialGrid


class AuditReport(NamedTuple):
    name: str
    declared: float
    observed: float
    samples: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        return {**self._asdict(), "passed": self.passed}


def _distinct_pairs(rng: np.random.Generator, lo: float, hi: float, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    a = rng.uniform(lo, hi, samples)
    b = rng.uniform(lo, hi, samples)
    same = np.abs(a - b) < 1e-9
    b[same] = a[same] + 1e-3
    return a, b


def lipschitz_audit(
    spec: Union[HamiltonianSpec, DriftSpec, ControlMap, ControlChain],
    rng: Optional[np.random.Generator] = None,
    samples: int = 1000,
    ctrl: Optional[ControlSet] = None,
) -> AuditReport:
    """Largest sampled difference quotient against the declared budget; violations are counted."""
    rng = rng if rng is not None else np.random.default_rng(0)
    t = rng.uniform(0.0, 1.0, samples)
    x = rng.uniform(0.0, 2.0 * math.pi, samples)
    if isinstance(spec, HamiltonianSpec):
        if ctrl is None:
            raise ConfigurationError("Hamiltonian audit needs the control set")
        p1, p2 = _distinct_pairs(rng, -5.0, 5.0, samples)
        h1, _ = hamiltonian_field(spec, ctrl, t, x, p1)
        h2, _ = hamiltonian_field(spec, ctrl, t, x, p2)
        ratio = np.abs(h1 - h2) / np.abs(p1 - p2)
        envelope = np.max(np.abs(spec.drift_coeff(t[:, None], x[:, None], ctrl.values[None, :])), axis=1)
        if spec.mode == "supinf-separated":
            adversary = spec.adversary_controls or ctrl
            envelope = envelope + np.max(np.abs(spec.adversary_coeff(t[:, None], x[:, None], adversary.values[None, :])), axis=1)
        declared = spec.budget.L_H if spec.budget.L_H > 0 else float(np.max(envelope))
        bound = np.minimum(envelope, declared)
        name = f"hamiltonian:{spec.name}"
    elif isinstance(spec, DriftSpec):
        m1, m2 = _distinct_pairs(rng, -3.0, 3.0, samples)
        u = rng.uniform(-1.0, 1.0, samples)
        ratio = np.abs(spec.interaction(x, m1, u) - spec.interaction(x, m2, u)) / np.abs(m1 - m2)
        declared = bound = spec.L_h
        name = f"drift:{spec.name}"
    elif isinstance(spec, ControlMap):
        p1, p2 = _distinct_pairs(rng, -5.0, 5.0, samples)
        ratio = np.abs(control_eval(spec, t, x, p1) - control_eval(spec, t, x, p2)) / np.abs(p1 - p2)
        declared = bound = spec.L_u
        name = f"control:{spec.name}"
    elif isinstance(spec, ControlChain):
        ratio, declared = _chain_ratios(spec, rng, samples)
        bound = declared
        name = f"chain:{spec.control_map.name}"
    else:
        raise ConfigurationError(f"no Lipschitz audit for {type(spec).__name__}")
    ratio = np.asarray(ratio, dtype=float)
    violations = int(np.count_nonzero(ratio > np.asarray(bound) * (1.0 + AUDIT_SLACK) + AUDIT_SLACK))
    report = AuditReport(name, float(declared), float(np.max(ratio)), int(samples), violations)
    if violations:
        logger.warning(f"Lipschitz audit {name}: {violations} of {samples} samples exceed {declared:.4g}")
    return report


def _chain_ratios(chain: ControlChain, rng: np.random.Generator, samples: int) -> Tuple[np.ndarray, float]:
    grid = chain.grid
    x = grid.coordinates()[0]
    modes = np.arange(1, 5).reshape((-1,) + (1,) * x.ndim)

    def random_fields():
        a = rng.normal(size=(samples, 4)).reshape((samples, 4) + (1,) * x.ndim)
        b = rng.normal(size=(samples, 4)).reshape((samples, 4) + (1,) * x.ndim)
        return np.sum(a * np.cos(modes * x) + b * np.sin(modes * x), axis=1) / 4.0

    f1, f2 = random_fields(), random_fields()
    p1, p2 = grid.derivative(f1, 0), grid.derivative(f2, 0)
    t = rng.uniform(0.0, 1.0, samples).reshape((-1,) + (1,) * x.ndim)
    u1 = control_eval(chain.control_map, t, x, p1)
    u2 = control_eval(chain.control_map, t, x, p2)
    axes = tuple(range(1, f1.ndim))
    distance = norm_values(grid, f1 - f2, NormKind.C1)
    gradient_bound = np.max(np.abs(p1 - p2), axis=axes) / distance
    ratio = np.max(np.abs(u1 - u2), axis=axes) / distance
    declared = chain.control_map.L_u * float(np.max(gradient_bound))
    return ratio, declared
