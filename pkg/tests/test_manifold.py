"""Tests for the circle with a metric and its Laplace-Beltrami generator."""

import math

import numpy as np
import pytest
from scipy import integrate

from src.fractional_mfg.errors import ConfigurationError, DomainError
from src.fractional_mfg.manifold import (
    CircleMetric,
    ManifoldGrid,
    build_lb_generator,
    heat_gradient_fit,
    riemannian_gradient_norm,
    spectral_gap,
)
from src.fractional_mfg.operators import (
    Field,
    NormKind,
    adjoint_check,
    commutator_norm,
    gradient_duality_defect,
    semigroup_apply,
)


class TestCircleMetric:
    """Metric coefficients from truncated Fourier data."""

    def test_rejects_nonpositive_metric(self):
        """1 + 1.5 sin(theta) changes sign."""
        with pytest.raises(DomainError):
            CircleMetric(1.0, [(1, 0.0, 1.5)])

    def test_rejects_harmonic_zero(self):
        """The mean is given separately."""
        with pytest.raises(DomainError):
            CircleMetric(1.0, [(0, 0.2, 0.0)])

    def test_derivative(self, circle_metric):
        """d/dtheta (1 + 0.3 sin) = 0.3 cos."""
        theta = np.linspace(0.0, 2.0 * math.pi, 7)
        assert np.allclose(circle_metric.derivative(theta), 0.3 * np.cos(theta))

    def test_equality_and_hash(self, circle_metric):
        """Metrics with equal data compare equal."""
        other = CircleMetric(1.0, [(1, 0.0, 0.3)])
        assert other == circle_metric
        assert hash(other) == hash(circle_metric)
        assert CircleMetric.flat() != circle_metric


class TestManifoldGrid:
    """Volume measure and Riemannian derivatives."""

    def test_volume_matches_quadrature(self, circle_metric):
        """Sum of volume weights is the Riemannian length of the circle."""
        grid = ManifoldGrid(circle_metric, 64)
        exact, _ = integrate.quad(lambda t: math.sqrt(1.0 + 0.3 * math.sin(t)), 0.0, 2.0 * math.pi, epsabs=1e-13)
        assert grid.volume == pytest.approx(exact, rel=1e-10)

    def test_riemannian_gradient_on_scaled_flat_metric(self):
        """g = 4 halves coordinate derivatives."""
        metric = CircleMetric.flat(4.0)
        grid = ManifoldGrid(metric, 32)
        f = Field(grid, np.sin(grid.theta))
        assert np.allclose(riemannian_gradient_norm(f, metric).values, 0.5 * np.abs(np.cos(grid.theta)), atol=1e-12)

    def test_rejects_odd_point_count(self, circle_metric):
        """Spectral derivatives need an even node count."""
        with pytest.raises(DomainError):
            ManifoldGrid(circle_metric, 33)


class TestLaplaceBeltrami:
    """Conservation, self-adjointness and spectrum of the generator."""

    def test_minimum_resolution(self, circle_metric):
        """Fewer than 32 nodes are rejected."""
        with pytest.raises(DomainError):
            build_lb_generator(circle_metric, 16)

    def test_constants_preserved(self, lb_generator):
        """S_t 1 = 1 to 1e-10."""
        grid = lb_generator.grid
        ones = Field(grid, np.ones(grid.shape))
        for t in (1e-3, 0.1, 1.0):
            assert np.max(np.abs(semigroup_apply(lb_generator, t, ones).values - 1.0)) <= 1e-10

    def test_volume_mass_conserved(self, lb_generator):
        """The volume integral of S_t f equals that of f."""
        grid = lb_generator.grid
        f = Field(grid, 1.0 + 0.5 * np.cos(grid.theta))
        before = float(grid.integrate(f.values))
        for t in (1e-3, 0.1, 1.0):
            assert abs(float(grid.integrate(semigroup_apply(lb_generator, t, f).values)) - before) <= 1e-10

    def test_adjoint_defect(self, lb_generator):
        """The stiffness is symmetric in the volume-weighted inner product."""
        grid = lb_generator.grid
        b = Field(grid, np.cos(grid.theta) + 0.2 * np.sin(3.0 * grid.theta))
        f = Field(grid, np.exp(np.sin(grid.theta)))
        assert adjoint_check(lb_generator, grid.weights, b, f) <= 1e-10

    def test_gradient_duality(self, lb_generator):
        """(grad b, f)_vol = -(b, grad f)_vol on the closed circle."""
        grid = lb_generator.grid
        b = Field(grid, np.cos(grid.theta) + 0.3)
        f = Field(grid, np.exp(np.cos(2.0 * grid.theta)))
        assert gradient_duality_defect(b, f) <= 1e-10

    def test_simple_zero_eigenvalue(self, lb_generator):
        """The kernel is the constants and the rest of the spectrum is negative."""
        gap, multiplicity = spectral_gap(lb_generator)
        assert multiplicity == 1
        assert gap < 0

    def test_flat_circle_gap(self):
        """For g = 1 the first nonzero eigenvalue approaches -1."""
        gap, _ = spectral_gap(build_lb_generator(CircleMetric.flat(), 64))
        assert gap == pytest.approx(-1.0, abs=1e-2)

    def test_commutator_does_not_grow_near_zero(self, lb_generator):
        """[D, e^{At}] stays bounded as t decreases."""
        report = commutator_norm(lb_generator, [1e-3, 1e-2, 1e-1, 1.0])
        assert np.all(np.isfinite(report.norms))
        assert report.norms[0] <= 1.5 * report.norms[1] + 1e-10
        assert report.norms[0] <= report.max_norm


class TestHeatGradientFit:
    """Slope of the Riemannian gradient of the heat semigroup."""

    @pytest.mark.parametrize("kind", [NormKind.SUP, NormKind.L1])
    def test_slope_is_minus_one_half(self, circle_metric, kind):
        """|grad S_t| ~ t^{-1/2} within 15%."""
        gen = build_lb_generator(circle_metric, 256)
        fit = heat_gradient_fit(gen, circle_metric, kind)
        assert abs(fit.slope + 0.5) / 0.5 <= 0.15
        assert fit.norms.shape == fit.times.shape

    def test_metric_must_match_generator(self, lb_generator):
        """The fit refuses a metric other than the generator's."""
        with pytest.raises(ConfigurationError):
            heat_gradient_fit(lb_generator, CircleMetric.flat())
