"""Tests for Mittag-Leffler functions of generators."""

import numpy as np
import pytest

from src.fractional_mfg.errors import ConfigurationError, DomainError
from src.fractional_mfg.mlop import (
    MASS_DEFECT_LIMIT,
    build_plan,
    ml_multiplier,
    ml_operator_apply,
    ml_prime_operator_apply,
    step_kernel_multiplier,
)
from src.fractional_mfg.operators import Field, semigroup_apply
from src.fractional_mfg.specfun import FractionalOrder, ml_reference


class TestSubordinationPlan:
    """Precomputed mixture nodes and weights."""

    @pytest.mark.parametrize("beta", [0.5, 0.8])
    def test_mass_defect_below_limit(self, beta):
        """The mixture weights sum to E_beta(0) = 1."""
        assert build_plan(FractionalOrder(beta)).mass_defect <= MASS_DEFECT_LIMIT

    def test_plans_are_cached(self):
        """The same (beta, quadrature) pair returns the same plan."""
        assert build_plan(FractionalOrder(0.5)) is build_plan(FractionalOrder(0.5))

    def test_classical_plan_is_single_node(self, classical_plan):
        """beta = 1 is the Dirac mixture at x = 1."""
        assert classical_plan.size == 1
        assert classical_plan.nodes[0] == 1.0


class TestScalarMultipliers:
    """Mode factors against the scalar oracle."""

    @pytest.mark.parametrize("beta", [0.5, 0.8])
    def test_multiplier_matches_reference(self, beta):
        """E_beta(lambda tau^beta) per eigenvalue to 1e-6."""
        order = FractionalOrder(beta)
        plan = build_plan(order)
        eigenvalues = -np.arange(0, 33, dtype=float) ** 2
        for tau in (0.01, 0.1, 1.0):
            factors = ml_multiplier(plan, eigenvalues, tau)
            expected = [ml_reference(order, lam * tau**beta) for lam in eigenvalues]
            assert np.max(np.abs(factors - expected)) <= 1e-6

    def test_prime_multiplier_matches_reference(self, plan_half):
        """E'_{1/2} factors against the erfc identity."""
        eigenvalues = np.array([0.0, -1.0, -4.0, -9.0])
        factors = ml_multiplier(plan_half, eigenvalues, 0.25, prime=True)
        expected = [ml_reference(FractionalOrder(0.5), lam * 0.5, prime=True) for lam in eigenvalues]
        assert np.allclose(factors, expected, atol=1e-6)

    def test_classical_multiplier_is_exponential(self, classical_plan):
        """beta = 1 gives exp(lambda tau)."""
        eigenvalues = np.array([0.0, -1.0, -2.5])
        assert np.allclose(ml_multiplier(classical_plan, eigenvalues, 0.4), np.exp(0.4 * eigenvalues), rtol=1e-14)

    def test_identity_at_zero_time(self, plan_08):
        """tau = 0 gives all-ones factors."""
        assert np.all(ml_multiplier(plan_08, np.array([0.0, -3.0]), 0.0) == 1.0)

    def test_prime_at_zero_time_rejected(self, plan_08):
        """E' is evaluated on tau > 0 only."""
        with pytest.raises(DomainError):
            ml_multiplier(plan_08, np.array([-1.0]), 0.0, prime=True)

    def test_step_kernel_integrates_to_increment(self, plan_half):
        """int beta u^{beta-1} E'(lambda u^beta) du = (E(lambda b^beta) - E(lambda a^beta)) / lambda."""
        lam = np.array([-2.0])
        integral = step_kernel_multiplier(plan_half, lam, 0.1, 0.3)
        increment = (ml_multiplier(plan_half, lam, 0.3) - ml_multiplier(plan_half, lam, 0.1)) / lam
        assert integral[0] == pytest.approx(increment[0], rel=1e-10)

    def test_step_kernel_at_zero_eigenvalue(self, plan_08):
        """For lambda = 0 the kernel integral is (b^beta - a^beta) / Gamma(1 + beta)."""
        from math import gamma

        value = step_kernel_multiplier(plan_08, np.array([0.0]), 0.0, 0.5)[0]
        assert value == pytest.approx(0.5**0.8 / gamma(1.8), rel=1e-7)

    def test_step_kernel_rejects_reversed_interval(self, plan_08):
        """Intervals must be ordered and start at a nonnegative time."""
        with pytest.raises(DomainError):
            step_kernel_multiplier(plan_08, np.array([-1.0]), 0.3, 0.1)


class TestOperatorApply:
    """E_beta(A tau^beta) f on the torus."""

    @pytest.mark.parametrize("beta", [0.5, 0.8])
    def test_mode_factors_on_torus(self, laplacian64, torus64, beta):
        """Each Fourier mode of the output is the input mode times the scalar factor."""
        order = FractionalOrder(beta)
        plan = build_plan(order)
        f = Field(torus64, np.cos(torus64.nodes) + 0.5 * np.cos(4.0 * torus64.nodes) + 1.0)
        tau = 0.1
        out = ml_operator_apply(laplacian64, tau, plan, f, order)
        expected = (
            1.0
            + ml_reference(order, -1.0 * tau**beta) * np.cos(torus64.nodes)
            + 0.5 * ml_reference(order, -16.0 * tau**beta) * np.cos(4.0 * torus64.nodes)
        )
        assert np.max(np.abs(out.values - expected)) <= 1e-6

    def test_identity_at_zero(self, laplacian64, smooth_field, plan_08):
        """tau = 0 returns the input exactly."""
        out = ml_operator_apply(laplacian64, 0.0, plan_08, smooth_field)
        assert np.array_equal(out.values, smooth_field.values)
        assert out.values is not smooth_field.values

    def test_classical_plan_is_semigroup(self, laplacian64, smooth_field, classical_plan):
        """beta = 1 reproduces e^{A tau}."""
        out = ml_operator_apply(laplacian64, 0.3, classical_plan, smooth_field)
        reference = semigroup_apply(laplacian64, 0.3, smooth_field)
        assert np.max(np.abs(out.values - reference.values)) < 1e-12

    def test_order_mismatch_rejected(self, laplacian64, smooth_field, plan_08):
        """A plan is tied to the order it was built for."""
        with pytest.raises(ConfigurationError):
            ml_operator_apply(laplacian64, 0.1, plan_08, smooth_field, FractionalOrder(0.5))

    def test_prime_apply_needs_positive_time(self, laplacian64, smooth_field, plan_08):
        """E'_beta(A tau^beta) is not defined at tau = 0 here."""
        with pytest.raises(DomainError):
            ml_prime_operator_apply(laplacian64, 0.0, plan_08, smooth_field)

    def test_mass_preserved(self, fractional_laplacian128, plan_08):
        """The zero mode has factor E(0) = 1."""
        grid = fractional_laplacian128.grid
        f = Field(grid, 1.0 + 0.5 * np.sin(grid.nodes))
        out = ml_operator_apply(fractional_laplacian128, 0.5, plan_08, f)
        assert float(grid.integrate(out.values)) == pytest.approx(float(grid.integrate(f.values)), rel=1e-8)
