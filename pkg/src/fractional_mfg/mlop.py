"""Operator Mittag-Leffler calculus by subordination.

E_beta(A tau^beta) is a mixture of semigroup times tau^beta x_i with weights from the stable
density; every generator is applied in its eigen-representation, so one plan serves every
tau, every field and every generator.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError
from .operators import Field, Generator
from .specfun import DEFAULT_QUADRATURE, FractionalOrder, QuadratureSpec, subordination_table

logger = logging.getLogger(__name__)

MASS_DEFECT_LIMIT = 1e-8


@dataclass(frozen=True, eq=False)
class SubordinationPlan:
    """Mixture E_beta(s) = sum_i exp(log_weights_i + s x_i) and E'_beta(s) = sum_i exp(log_prime_weights_i + s x_i)."""

    order: FractionalOrder
    quad: QuadratureSpec
    nodes: np.ndarray
    log_weights: np.ndarray
    log_prime_weights: np.ndarray
    mass_defect: float

    @property
    def size(self) -> int:
        return int(self.nodes.size)


@lru_cache(maxsize=32)
def build_plan(order: FractionalOrder, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> SubordinationPlan:
    """Precompute nodes and weights for one (beta, quadrature) pair; beta = 1 is the single node x = 1."""
    if order.is_classical:
        one = np.ones(1)
        return SubordinationPlan(order, quad, one, np.zeros(1), np.zeros(1), 0.0)
    beta = order.beta
    table = subordination_table(beta, quad)
    log_weights = table.log_weights - math.log(beta) - table.y / beta + table.log_density
    keep = np.isfinite(log_weights)
    nodes = np.exp(table.y[keep])
    log_weights = log_weights[keep]
    log_prime_weights = log_weights + table.y[keep]
    mass_defect = abs(float(np.exp(special.logsumexp(log_weights))) - 1.0)
    if mass_defect > MASS_DEFECT_LIMIT:
        logger.warning(f"subordination plan for beta={beta} has mass defect {mass_defect:.2e}")
    logger.debug(f"subordination plan beta={beta}: {nodes.size} active nodes, mass defect {mass_defect:.2e}")
    return SubordinationPlan(order, quad, nodes, log_weights, log_prime_weights, mass_defect)


def _log_exprel(z: np.ndarray) -> np.ndarray:
    """log((e^z - 1)/z), stable for large positive and negative z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 50.0
    out[small] = np.log(special.exprel(z[small]))
    big = ~small
    out[big] = z[big] - np.log(z[big]) + np.log1p(-np.exp(-z[big]))
    return out


def _on_unique(eigenvalues: np.ndarray, evaluate) -> np.ndarray:
    unique, inverse = np.unique(eigenvalues, return_inverse=True)
    return evaluate(unique)[inverse].reshape(eigenvalues.shape)


def ml_multiplier(plan: SubordinationPlan, eigenvalues: np.ndarray, tau: float, prime: bool = False) -> np.ndarray:
    """Mode-wise E_beta(lambda tau^beta) (or E'_beta) for every eigenvalue lambda."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if tau < 0:
        raise DomainError(f"Mittag-Leffler time must be nonnegative, got {tau}")
    if tau == 0:
        if prime:
            raise DomainError("E'_beta(A tau^beta) is evaluated at tau > 0 only; the kernel endpoint belongs to product integration")
        return np.ones(eigenvalues.shape)
    scaled = tau**plan.order.beta
    log_weights = plan.log_prime_weights if prime else plan.log_weights

    def evaluate(unique):
        exponents = log_weights[None, :] + (unique[:, None] * scaled) * plan.nodes[None, :]
        return np.exp(special.logsumexp(exponents, axis=1))

    return _on_unique(eigenvalues, evaluate)


def step_kernel_multiplier(plan: SubordinationPlan, eigenvalues: np.ndarray, tau_lo: float, tau_hi: float) -> np.ndarray:
    """Exact int_{tau_lo}^{tau_hi} beta u^{beta-1} E'_beta(lambda u^beta) du per eigenvalue.

    With v = u^beta every mixture component integrates in closed form:
    sum_i c'_i Delta exp(lambda x_i v_lo) exprel(lambda x_i Delta), Delta = v_hi - v_lo.
    """
    if not 0 <= tau_lo < tau_hi:
        raise DomainError(f"kernel step needs 0 <= tau_lo < tau_hi, got ({tau_lo}, {tau_hi})")
    beta = plan.order.beta
    v_lo = tau_lo**beta
    delta = tau_hi**beta - v_lo
    log_delta = math.log(delta)

    def evaluate(unique):
        rates = unique[:, None] * plan.nodes[None, :]
        exponents = plan.log_prime_weights[None, :] + log_delta + rates * v_lo + _log_exprel(rates * delta)
        return np.exp(special.logsumexp(exponents, axis=1))

    return _on_unique(np.asarray(eigenvalues, dtype=float), evaluate)


def _check_order(plan: SubordinationPlan, order: Optional[FractionalOrder]) -> None:
    if order is not None and order != plan.order:
        raise ConfigurationError(
            f"subordination plan built for beta={plan.order.beta} used with beta={order.beta}",
            {"plan_beta": plan.order.beta, "beta": order.beta},
        )


def ml_operator_apply(
    gen: Generator, tau: float, plan: SubordinationPlan, f: Field, order: Optional[FractionalOrder] = None
) -> Field:
    """E_beta(A tau^beta) f; tau = 0 returns a copy of f."""
    _check_order(plan, order)
    if tau == 0:
        return Field(f.grid, f.values.copy())
    return Field(f.grid, gen.apply_multiplier(ml_multiplier(plan, gen.eigenvalues, tau), f.values))


def ml_prime_operator_apply(
    gen: Generator, tau: float, plan: SubordinationPlan, f: Field, order: Optional[FractionalOrder] = None
) -> Field:
    """E'_beta(A tau^beta) f for tau > 0."""
    _check_order(plan, order)
    if not tau > 0:
        raise DomainError(f"E'_beta(A tau^beta) needs tau > 0, got {tau}")
    return Field(f.grid, gen.apply_multiplier(ml_multiplier(plan, gen.eigenvalues, tau, prime=True), f.values))
