"""Scalar special functions: Mittag-Leffler E_beta and E'_beta, the one-sided stable density
G_beta(1, x) and the Mellin identity that validates the subordination quadrature."""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import (
    DegenerateSubordinatorError,
    DomainError,
    MellinDivergenceError,
    SeriesBudgetError,
    TruncationTooSmallError,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
SERIES_TERM_BUDGET = 50_000

# -ln(1e-16): the Fourier envelope exp(-p^beta cos(pi beta/2)) is cut where it reaches 1e-16
_ENVELOPE_LOG = 16.0 * math.log(10.0)
# positive-integral regime below the point where (1-beta) beta^{beta/(1-beta)} w reaches this value
_POSITIVE_SWITCH = 5.0
# log-density floor: G is below exp(-1e4) there
_UNDERFLOW_EXPONENT = 1.0e4
_TAIL_SERIES_TERMS = 80
# radians of oscillation the Fourier regime accepts per oscillatory subinterval
_OSCILLATIONS_PER_NODE = 500.0


@dataclass(frozen=True)
class FractionalOrder:
    """Order beta of the time derivative; beta = 1 is the classical branch."""

    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or not 0.0 < beta <= 1.0:
            raise DomainError(f"fractional order beta must lie in (0, 1], got {self.beta}", {"beta": self.beta})
        object.__setattr__(self, "beta", beta)

    @property
    def is_classical(self) -> bool:
        return self.beta == 1.0


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre panel rule in the log subordination variable.

    node_count is the order of the rule on each panel, domain_cut truncates y = log x to
    [-domain_cut, domain_cut] and oscillatory_node_count bounds the adaptive subdivision of the
    Fourier density integral. tail_tol is the largest integrand magnitude accepted at the cut.
    """

    node_count: int = 16
    domain_cut: float = 30.0
    oscillatory_node_count: int = 200
    tail_tol: float = 1e-10

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 16:
            raise DomainError(f"node_count must be an integer >= 16, got {self.node_count}")
        if not self.domain_cut > 0:
            raise DomainError(f"domain_cut must be positive, got {self.domain_cut}")
        if int(self.oscillatory_node_count) != self.oscillatory_node_count or self.oscillatory_node_count < 1:
            raise DomainError(f"oscillatory_node_count must be a positive integer, got {self.oscillatory_node_count}")
        if not self.tail_tol > 0:
            raise DomainError(f"tail_tol must be positive, got {self.tail_tol}")


DEFAULT_QUADRATURE = QuadratureSpec()


class MellinCheck(NamedTuple):
    lhs: float
    rhs: float
    relative_error: float


class SubordinationTable(NamedTuple):
    """Panel nodes y_i, log quadrature weights and log G_beta(1, e^{-y_i/beta})."""

    y: np.ndarray
    log_weights: np.ndarray
    log_density: np.ndarray


# --------------------------------------------------------------------------- series


def _series_terms(beta: float, s: float, tol: float, max_terms: int, derivative: bool):
    """Return (last index, log10 of the largest term) for the truncated power series."""
    k = np.arange(max_terms + 1, dtype=float)
    log_abs_s = math.log(abs(s))
    if derivative:
        k = k[1:]
        log_terms = np.log(k) + (k - 1.0) * log_abs_s - special.gammaln(beta * k + 1.0)
    else:
        log_terms = k * log_abs_s - special.gammaln(beta * k + 1.0)
    peak = int(np.argmax(log_terms))
    threshold = math.log(0.1 * tol)
    ratios = np.diff(log_terms[peak:])
    done = (log_terms[peak:-1] < threshold) & (ratios < math.log(0.5))
    hits = np.nonzero(done)[0]
    if hits.size == 0:
        raise SeriesBudgetError(
            f"series budget exceeded: {max_terms} terms do not reach tol={tol:g} at s={s}",
            {"beta": beta, "s": s, "max_terms": max_terms},
        )
    last = int(k[peak + hits[0]])
    return last, float(log_terms[peak] / math.log(10.0))


def _sum_series(beta: float, s: float, tol: float, max_terms: int, derivative: bool) -> float:
    last, peak_digits = _series_terms(beta, s, tol, max_terms, derivative)
    dps = int(20 + max(0.0, peak_digits) - min(0.0, math.log10(tol)))
    with mpmath.workdps(dps):
        x = mpmath.mpf(s)
        b = mpmath.mpf(beta)
        terms = []
        power = mpmath.mpf(1)
        if derivative:
            for k in range(1, last + 1):
                terms.append(k * power * mpmath.rgamma(b * k + 1))
                power *= x
        else:
            for k in range(last + 1):
                terms.append(power * mpmath.rgamma(b * k + 1))
                power *= x
        return float(mpmath.fsum(terms))


def ml_series(order: FractionalOrder, s: float, tol: float = DEFAULT_TOL, max_terms: int = SERIES_TERM_BUDGET) -> float:
    """E_beta(s) = sum_k s^k / Gamma(beta k + 1), summed at elevated precision.

    The series is truncated past its largest term once terms fall below tol/10 and decay at
    least geometrically with ratio 1/2, so the neglected tail is below tol.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if order.is_classical:
        return math.exp(s)
    if s == 0.0:
        return 1.0
    return _sum_series(order.beta, float(s), tol, max_terms, derivative=False)


def ml_prime_series(order: FractionalOrder, s: float, tol: float = DEFAULT_TOL, max_terms: int = SERIES_TERM_BUDGET) -> float:
    """E'_beta(s) by term-by-term differentiation of the power series."""
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if order.is_classical:
        return math.exp(s)
    if s == 0.0:
        return 1.0 / math.gamma(order.beta + 1.0)
    return _sum_series(order.beta, float(s), tol, max_terms, derivative=True)


def ml_asymptotic(order: FractionalOrder, s: float, prime: bool = False, max_terms: int = 60) -> float:
    """Large negative argument expansion E_beta(s) = -sum_{k>=1} s^{-k} / Gamma(1 - beta k).

    Summed until terms stop decreasing; accurate for s <= -30 and beta < 1.
    """
    if order.is_classical:
        raise DomainError("asymptotic expansion has no algebraic form for beta = 1")
    if not s < 0:
        raise DomainError(f"asymptotic expansion needs s < 0, got {s}")
    x = -float(s)
    total = 0.0
    previous = math.inf
    for k in range(1, max_terms + 1):
        weight = special.rgamma(1.0 - order.beta * k)
        if weight == 0.0:
            continue
        if prime:
            term = (-1.0) ** (k + 1) * k * x ** (-k - 1) * weight
        else:
            term = (-1.0) ** (k + 1) * x ** (-k) * weight
        if abs(term) > previous:
            break
        total += term
        previous = abs(term)
        if abs(term) < 1e-17 * abs(total):
            break
    return total


# --------------------------------------------------------------------------- stable density


def _regime_bounds(beta: float, oscillatory_node_count: int):
    c_positive = (1.0 - beta) * beta ** (beta / (1.0 - beta))
    z_lo = (c_positive / _POSITIVE_SWITCH) ** ((1.0 - beta) / beta)
    z_hi = 2.0 ** (1.0 / beta)
    p_max = (_ENVELOPE_LOG / math.cos(0.5 * math.pi * beta)) ** (1.0 / beta)
    z_fourier = min(z_hi, _OSCILLATIONS_PER_NODE * oscillatory_node_count / p_max)
    return z_lo, z_fourier, z_hi


def _regime(beta: float, z: float, oscillatory_node_count: int) -> str:
    z_lo, z_fourier, z_hi = _regime_bounds(beta, oscillatory_node_count)
    if z >= z_hi:
        return "series"
    if z_lo <= z < z_fourier:
        return "fourier"
    return "positive"


def density_regime(order: FractionalOrder, x: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> str:
    """Name of the representation stable_density uses at x."""
    if order.is_classical:
        raise DegenerateSubordinatorError()
    return _regime(order.beta, float(x), quad.oscillatory_node_count)


def _series_log_density(beta: float, z: float) -> float:
    k = np.arange(1, _TAIL_SERIES_TERMS + 1, dtype=float)
    log_mag = special.gammaln(beta * k + 1.0) - special.gammaln(k + 1.0) - (beta * k + 1.0) * math.log(z)
    signs = (-1.0) ** (k + 1) * np.sin(math.pi * beta * k)
    total = float(np.sum(signs * np.exp(log_mag))) / math.pi
    return math.log(total) if total > 0 else -math.inf


def _quiet_quad(func, lo, hi, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, error = integrate.quad(func, lo, hi, **kwargs)
    if error > 1e-9 * max(1.0, abs(value)):
        logger.debug(f"quadrature on [{lo:g}, {hi:g}] reports error {error:.2e}")
    return value


def _fourier_density(beta: float, z: float, limit: int) -> float:
    """(1/pi) Re int_0^inf exp(ipz - p^beta e^{i pi beta/2}) dp, truncated at the 1e-16 envelope."""
    c = math.cos(0.5 * math.pi * beta)
    s = math.sin(0.5 * math.pi * beta)
    p_max = (_ENVELOPE_LOG / c) ** (1.0 / beta)

    def head(p):
        q = p**beta
        return math.exp(-c * q) * math.cos(z * p - s * q)

    def envelope_cos(p):
        q = p**beta
        return math.exp(-c * q) * math.cos(s * q)

    def envelope_sin(p):
        q = p**beta
        return math.exp(-c * q) * math.sin(s * q)

    total = _quiet_quad(head, 0.0, 1.0, limit=limit, epsabs=1e-14, epsrel=1e-12)
    total += _quiet_quad(envelope_cos, 1.0, p_max, weight="cos", wvar=z, limit=limit, epsabs=1e-14)
    total += _quiet_quad(envelope_sin, 1.0, p_max, weight="sin", wvar=z, limit=limit, epsabs=1e-14)
    return total / math.pi


def _positive_log_a(beta: float, phi: float) -> float:
    ratio = 1.0 / (1.0 - beta)
    return (
        beta * ratio * math.log(math.sin(beta * phi))
        + math.log(math.sin((1.0 - beta) * phi))
        - ratio * math.log(math.sin(phi))
    )


def _positive_log_density(beta: float, z: float, limit: int = 200) -> float:
    """log G_beta(1, z) from the single positive integral over (0, pi) of the one-sided law.

    G = beta/(1-beta) z^{-1/(1-beta)} (1/pi) int A(phi) exp(-A(phi) w) dphi with
    w = z^{-beta/(1-beta)}; the factor exp(-A(0) w) is taken out so small densities keep
    their relative accuracy.
    """
    ratio = 1.0 / (1.0 - beta)
    a0 = (1.0 - beta) * beta ** (beta * ratio)
    log_z = math.log(z)
    w = math.exp(-beta * ratio * log_z)
    if a0 * w > _UNDERFLOW_EXPONENT:
        return -math.inf

    def integrand(phi):
        log_a = _positive_log_a(beta, phi)
        with np.errstate(over="ignore", under="ignore"):
            a = np.exp(log_a)
            return float(np.exp(log_a - (a - a0) * w))

    split = min(0.5 * math.pi, 3.0 / math.sqrt(w))
    value = _quiet_quad(integrand, 0.0, split, limit=limit, epsabs=0.0, epsrel=1e-12)
    value += _quiet_quad(integrand, split, math.pi, limit=limit, epsabs=0.0, epsrel=1e-12)
    if value <= 0.0:
        return -math.inf
    return math.log(beta * ratio) - ratio * log_z - math.log(math.pi) - a0 * w + math.log(value)


def _log_density(beta: float, z: float, quad: QuadratureSpec) -> float:
    regime = _regime(beta, z, quad.oscillatory_node_count)
    if regime == "series":
        return _series_log_density(beta, z)
    if regime == "fourier":
        value = _fourier_density(beta, z, quad.oscillatory_node_count)
        return math.log(value) if value > 0 else -math.inf
    return _positive_log_density(beta, z, quad.oscillatory_node_count)


def stable_density(order: FractionalOrder, x: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """G_beta(1, x), the density at time 1 of the beta-stable subordinator."""
    if order.is_classical:
        raise DegenerateSubordinatorError()
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"stable density needs a finite x > 0, got {x}")
    return math.exp(_log_density(order.beta, x, quad))


def stable_tail_mass(order: FractionalOrder, x: float) -> float:
    """int_x^inf G_beta(1, z) dz from the term-wise integrated large-argument series (x >= 2^{1/beta})."""
    if order.is_classical:
        raise DegenerateSubordinatorError()
    beta = order.beta
    if x < 2.0 ** (1.0 / beta):
        raise DomainError(f"tail series needs x >= 2^(1/beta) = {2.0 ** (1.0 / beta):.4g}, got {x}")
    k = np.arange(1, _TAIL_SERIES_TERMS + 1, dtype=float)
    log_mag = special.gammaln(beta * k + 1.0) - special.gammaln(k + 1.0) - beta * k * math.log(x)
    signs = (-1.0) ** (k + 1) * np.sin(math.pi * beta * k) / (beta * k)
    return float(np.sum(signs * np.exp(log_mag))) / math.pi


def stable_mass(order: FractionalOrder, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Total mass of G_beta(1, .): adaptive quadrature in log z up to 2^{1/beta} plus the analytic tail."""
    if order.is_classical:
        raise DegenerateSubordinatorError()
    beta = order.beta
    z_lo, z_fourier, z_hi = _regime_bounds(beta, quad.oscillatory_node_count)
    a0 = (1.0 - beta) * beta ** (beta / (1.0 - beta))
    # below this point a0 * w exceeds 700 and the density is negligible
    u_min = -((1.0 - beta) / beta) * math.log(700.0 / a0)

    def integrand(u):
        z = math.exp(u)
        return math.exp(_log_density(beta, z, quad) + u)

    breaks = sorted({math.log(b) for b in (z_lo, z_fourier) if math.exp(u_min) < b < z_hi})
    edges = [u_min, *breaks, math.log(z_hi)]
    body = sum(_quiet_quad(integrand, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-11) for lo, hi in zip(edges[:-1], edges[1:]))
    return body + stable_tail_mass(order, z_hi)


# --------------------------------------------------------------------------- Zolotarev quadrature


def _panel_edges(beta: float, cut: float) -> np.ndarray:
    """Fine panels on a core around y = 0 whose width follows the density scale (1-beta), then doubling widths capped at 2."""
    scale = min(1.0, max(1e-4, 10.0 * (1.0 - beta)))
    h0 = 0.25 * scale
    core = min(6.0 * scale, cut)
    inner = np.linspace(-core, core, max(2, int(round(2.0 * core / h0))) + 1)
    outer = [core]
    width = h0
    while outer[-1] < cut:
        width = min(2.0 * width, 2.0)
        outer.append(min(outer[-1] + width, cut))
    outer = np.asarray(outer[1:])
    return np.concatenate([-outer[::-1], inner, outer])


@lru_cache(maxsize=64)
def subordination_table(beta: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> SubordinationTable:
    """Nodes, weights and density factors of the log-substituted subordination integral.

    Densities at the nodes come from the large-argument series and the positive integral, both of
    which keep relative accuracy far into the tails.
    """
    if beta >= 1.0:
        raise DegenerateSubordinatorError()
    xi, omega = np.polynomial.legendre.leggauss(quad.node_count)
    edges = _panel_edges(beta, quad.domain_cut)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    y = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    log_weights = (np.log(half)[:, None] + np.log(omega)[None, :]).ravel()
    z_hi = 2.0 ** (1.0 / beta)
    log_density = np.empty_like(y)
    for i, yi in enumerate(y):
        z = math.exp(-yi / beta)
        log_density[i] = _series_log_density(beta, z) if z >= z_hi else _positive_log_density(beta, z)
    logger.debug(f"subordination table for beta={beta}: {y.size} nodes on {edges.size - 1} panels")
    for array in (y, log_weights, log_density):
        array.setflags(write=False)
    return SubordinationTable(y, log_weights, log_density)


def _endpoint_log_density(beta: float, y: float) -> float:
    z = math.exp(-y / beta)
    return _series_log_density(beta, z) if z >= 2.0 ** (1.0 / beta) else _positive_log_density(beta, z)


def _check_tail(beta: float, quad: QuadratureSpec, log_integrand) -> None:
    cut = quad.domain_cut
    tail = 0.0
    for y in (-cut, cut):
        with np.errstate(over="ignore"):
            value = float(np.exp(log_integrand(y, _endpoint_log_density(beta, y))))
        tail = max(tail, value)
    if tail > quad.tail_tol:
        raise TruncationTooSmallError(tail, cut, quad.tail_tol)


def _subordinated_sum(order: FractionalOrder, quad: QuadratureSpec, power: float, s: float) -> float:
    """(1/beta) int exp(s e^y) e^{y power} G(e^{-y/beta}) dy over the panel rule."""
    beta = order.beta
    table = subordination_table(beta, quad)

    def log_integrand(y, log_g):
        return s * math.exp(y) + power * y - math.log(beta) + log_g

    _check_tail(beta, quad, log_integrand)
    log_terms = table.log_weights + s * np.exp(table.y) + power * table.y - math.log(beta) + table.log_density
    return float(np.exp(special.logsumexp(log_terms)))


def ml_zolotarev(order: FractionalOrder, s: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E_beta(s) = (1/beta) int_0^inf e^{sx} x^{-1-1/beta} G_beta(1, x^{-1/beta}) dx with x = e^y."""
    if order.is_classical:
        return math.exp(s)
    return _subordinated_sum(order, quad, -1.0 / order.beta, float(s))


def ml_prime_zolotarev(order: FractionalOrder, s: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E'_beta(s) = (1/beta) int_0^inf e^{sx} x^{-1/beta} G_beta(1, x^{-1/beta}) dx."""
    if order.is_classical:
        return math.exp(s)
    return _subordinated_sum(order, quad, 1.0 - 1.0 / order.beta, float(s))


def mellin_check(order: FractionalOrder, omega: float, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> MellinCheck:
    """Compare (1/beta) int x^{-omega} G_beta(1, x^{-1/beta}) dx with Gamma(1-omega+1/beta)/(beta Gamma(beta-beta omega+1))."""
    if order.is_classical:
        raise DegenerateSubordinatorError()
    beta = order.beta
    if omega >= 1.0 + 1.0 / beta:
        raise MellinDivergenceError(
            f"Mellin divergence: omega={omega} must be below 1 + 1/beta = {1.0 + 1.0 / beta:.6g}",
            {"beta": beta, "omega": omega},
        )
    lhs = _subordinated_sum(order, quad, 1.0 - omega, 0.0)
    rhs = float(special.gamma(1.0 - omega + 1.0 / beta) / (beta * special.gamma(beta - beta * omega + 1.0)))
    return MellinCheck(lhs, rhs, abs(lhs - rhs) / abs(rhs))


def ml_reference(order: FractionalOrder, s: float, prime: bool = False, tol: float = DEFAULT_TOL) -> float:
    """Oracle value for E_beta (or E'_beta) valid on the whole real line.

    beta = 1/2 uses the identity E_{1/2}(s) = exp(s^2) erfc(-s); otherwise the power series for
    |s| <= 30 and the asymptotic expansion below -30.
    """
    if order.is_classical:
        return math.exp(s)
    if order.beta == 0.5:
        with mpmath.workdps(30):
            x = mpmath.mpf(s)
            value = mpmath.exp(x * x) * mpmath.erfc(-x)
            if prime:
                value = 2 * x * value + 2 / mpmath.sqrt(mpmath.pi)
            return float(value)
    if abs(s) <= 30.0:
        return ml_prime_series(order, s, tol) if prime else ml_series(order, s, tol)
    if s < 0:
        return ml_asymptotic(order, s, prime=prime)
    raise DomainError(f"no reference value for s={s} > 30")


@lru_cache(maxsize=256)
def growth_factor(order: float, argument: float) -> float:
    """E_order(argument) for the a-priori growth bound; infinite when the argument leaves the series range."""
    if argument <= 0:
        return 1.0
    if order == 1.0:
        return math.exp(argument) if argument < 700 else math.inf
    if argument > 30.0:
        return math.inf
    return ml_series(FractionalOrder(order), argument)
