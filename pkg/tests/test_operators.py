"""Tests for grids, norms, torus generators and their diagnostics."""

import numpy as np
import pytest

from src.fractional_mfg.errors import DomainError, FitUnreliableError
from src.fractional_mfg.operators import (
    Field,
    NormKind,
    PointGrid,
    SmoothingProfile,
    TorusGrid,
    adjoint_check,
    build_torus_generator,
    commutator_norm,
    dual_sup_norm,
    estimate_smoothing_exponent,
    fit_power_law,
    gradient,
    gradient_duality_defect,
    norm,
    scalar_generator,
    semigroup_apply,
    smoothness_preservation,
)


class TestGridsAndFields:
    """Grid construction and field validation."""

    def test_torus_rejects_odd_point_count(self):
        """Spectral grids need an even number of points."""
        with pytest.raises(DomainError):
            TorusGrid(63)

    def test_torus_rejects_three_dimensions(self):
        """Only one- and two-dimensional tori are supported."""
        with pytest.raises(DomainError):
            TorusGrid(16, dimension=3)

    def test_field_shape_must_match_grid(self, torus64):
        """A field carries exactly one value per node."""
        with pytest.raises(DomainError):
            Field(torus64, np.zeros(32))

    def test_field_values_must_be_finite(self, torus64):
        """NaN and inf are rejected at construction."""
        values = np.zeros(64)
        values[3] = np.nan
        with pytest.raises(DomainError):
            Field(torus64, values)

    def test_weights_sum_to_volume(self):
        """Torus weights integrate constants to L^d."""
        grid = TorusGrid(16, length=3.0, dimension=2)
        assert grid.integrate(np.ones(grid.shape)) == pytest.approx(9.0)

    def test_spectral_gradient_of_sine(self, torus64):
        """D sin = cos to machine precision."""
        f = Field(torus64, np.sin(torus64.nodes))
        assert np.max(np.abs(gradient(f).values - np.cos(torus64.nodes))) < 1e-12


class TestNorms:
    """Ordering of the two norm triples."""

    def test_triples_are_ordered(self, smooth_field):
        """sup <= C1 <= C2 and L1 <= W1 <= W2."""
        assert norm(smooth_field, NormKind.SUP) <= norm(smooth_field, NormKind.C1) <= norm(smooth_field, NormKind.C2)
        assert norm(smooth_field, NormKind.L1) <= norm(smooth_field, NormKind.W1) <= norm(smooth_field, NormKind.W2)

    def test_c1_norm_of_cosine(self, torus64):
        """|cos|_C1 = |cos|_sup + |sin|_sup = 2."""
        f = Field(torus64, np.cos(torus64.nodes))
        assert norm(f, NormKind.C1) == pytest.approx(2.0, abs=1e-12)

    def test_l1_norm_of_constant(self, torus64):
        """L1 norm of 1 is the torus length."""
        f = Field(torus64, np.ones(64))
        assert norm(f, NormKind.L1) == pytest.approx(2.0 * np.pi)

    def test_second_order_norm_needs_resolution(self):
        """C2 on fewer than 16 points per axis is refused."""
        grid = TorusGrid(8)
        with pytest.raises(DomainError):
            norm(Field(grid, np.ones(8)), NormKind.C2)

    def test_point_grid_norm(self):
        """On a single node every norm is the absolute value."""
        f = Field(PointGrid(), np.array([-3.0]))
        assert norm(f, NormKind.C1) == pytest.approx(3.0)
        assert norm(f, NormKind.W1) == pytest.approx(3.0)


class TestTorusGenerators:
    """Spectral Laplacian, fractional Laplacian and their semigroups."""

    def test_laplacian_of_cosine(self, laplacian64, torus64):
        """Delta cos = -cos."""
        values = laplacian64.apply(np.cos(torus64.nodes))
        assert np.max(np.abs(values + np.cos(torus64.nodes))) < 1e-12

    def test_fractional_laplacian_symbol(self):
        """-|Delta|^{alpha/2} cos 2x = -2^alpha cos 2x."""
        grid = TorusGrid(64)
        gen = build_torus_generator(grid, "fractional_laplacian", 1.5)
        values = gen.apply(np.cos(2.0 * grid.nodes))
        assert np.max(np.abs(values + 2.0**1.5 * np.cos(2.0 * grid.nodes))) < 1e-11

    @pytest.mark.parametrize("alpha", [1.0, 2.5, None])
    def test_fractional_laplacian_alpha_range(self, torus64, alpha):
        """alpha must lie in (1, 2]."""
        with pytest.raises(DomainError):
            build_torus_generator(torus64, "fractional_laplacian", alpha)

    def test_smoothing_profile_records_one_over_alpha(self, fractional_laplacian128):
        """omega = 1/alpha for the stable generator."""
        assert fractional_laplacian128.smoothing.omega == pytest.approx(2.0 / 3.0)

    def test_smoothing_profile_rejects_omega_one(self):
        """omega lies in [0, 1)."""
        with pytest.raises(DomainError):
            SmoothingProfile(omega=1.0)

    def test_heat_semigroup_on_cosine(self, laplacian64, torus64):
        """e^{t Delta} cos = e^{-t} cos."""
        f = Field(torus64, np.cos(torus64.nodes))
        out = semigroup_apply(laplacian64, 0.3, f)
        assert np.max(np.abs(out.values - np.exp(-0.3) * np.cos(torus64.nodes))) < 1e-12

    def test_semigroup_preserves_constants_and_mass(self, fractional_laplacian128):
        """S_t 1 = 1 and the integral is conserved."""
        grid = fractional_laplacian128.grid
        ones = Field(grid, np.ones(grid.shape))
        assert np.max(np.abs(semigroup_apply(fractional_laplacian128, 0.5, ones).values - 1.0)) < 1e-12
        f = Field(grid, 1.0 + 0.5 * np.cos(grid.nodes))
        moved = semigroup_apply(fractional_laplacian128, 0.5, f)
        assert float(grid.integrate(moved.values)) == pytest.approx(float(grid.integrate(f.values)), abs=1e-12)

    def test_negative_time_rejected(self, laplacian64, smooth_field):
        """The semigroup runs forward only."""
        with pytest.raises(DomainError):
            semigroup_apply(laplacian64, -0.1, smooth_field)

    def test_scalar_generator_allows_growth(self):
        """ODE instances may have a positive rate."""
        gen = scalar_generator(2.0)
        assert gen.eigenvalues[0] == pytest.approx(2.0)
        assert not gen.dissipative


class TestDualityAndCommutators:
    """Numerical versions of the dual-triple properties."""

    def test_adjoint_defect(self, fractional_laplacian128):
        """(A b, f)_w = (b, A f)_w on the torus."""
        grid = fractional_laplacian128.grid
        b = Field(grid, np.sin(grid.nodes) + 0.3 * np.cos(5.0 * grid.nodes))
        f = Field(grid, np.exp(np.cos(grid.nodes)))
        assert adjoint_check(fractional_laplacian128, grid.weights, b, f) <= 1e-10

    def test_gradient_duality(self, torus64, smooth_field):
        """(Db, f)_w = -(b, Df)_w by periodic integration by parts."""
        f = Field(torus64, np.exp(np.sin(torus64.nodes)))
        assert gradient_duality_defect(smooth_field, f) <= 1e-10

    def test_commutator_vanishes_for_translation_invariant_generator(self, fractional_laplacian128):
        """Fourier multipliers commute with D."""
        report = commutator_norm(fractional_laplacian128, [1e-3, 1e-2, 1e-1, 1.0])
        assert report.max_norm <= 1e-10
        assert report.norms.shape == (4,)

    def test_dual_sup_norm_bounded_by_sup(self, smooth_field):
        """Pairing with unit-mass positive probes never exceeds the sup norm."""
        assert dual_sup_norm(smooth_field, 8) <= norm(smooth_field, NormKind.SUP) + 1e-12


class TestSmoothingFits:
    """Fitted smoothing exponents of the torus generators."""

    def test_laplacian_exponent_is_one_half(self):
        """omega_hat within 10% of 1/2 for the heat semigroup."""
        gen = build_torus_generator(TorusGrid(256), "laplacian")
        estimate = estimate_smoothing_exponent(gen, seed=3)
        assert abs(estimate.omega_hat - 0.5) / 0.5 <= 0.1
        assert estimate.seed == 3
        assert estimate.probe_norms.shape == estimate.times.shape

    def test_stable_exponent_is_one_over_alpha(self):
        """omega_hat within 10% of 2/3 for alpha = 1.5."""
        gen = build_torus_generator(TorusGrid(1024), "fractional_laplacian", 1.5)
        estimate = estimate_smoothing_exponent(gen)
        assert abs(estimate.omega_hat - 2.0 / 3.0) / (2.0 / 3.0) <= 0.1

    def test_integral_pair_gives_same_exponent(self):
        """The L1 -> W1 fit of a translation-invariant generator matches the sup fit."""
        gen = build_torus_generator(TorusGrid(256), "laplacian")
        sup = estimate_smoothing_exponent(gen)
        integral = estimate_smoothing_exponent(gen, (NormKind.L1, NormKind.W1))
        assert integral.omega_hat == pytest.approx(sup.omega_hat, rel=1e-8)
        assert sup.fitted == "operator_norm:sup"
        assert integral.fitted == "operator_norm:L1"

    def test_mixed_triples_rejected(self, laplacian64):
        """Source and target norms must come from the same triple."""
        with pytest.raises(DomainError):
            estimate_smoothing_exponent(laplacian64, (NormKind.SUP, NormKind.W1))

    def test_power_law_rejects_increasing_norms(self):
        """Increasing operator norms make the fit unreliable."""
        with pytest.raises(FitUnreliableError):
            fit_power_law(np.array([0.01, 0.1, 1.0]), np.array([1.0, 2.0, 3.0]))

    def test_power_law_recovers_exponent(self):
        """An exact power law is fitted with zero residual."""
        times = np.geomspace(1e-3, 1e-1, 9)
        slope, constant, residual = fit_power_law(times, 2.0 * times**-0.75)
        assert slope == pytest.approx(-0.75)
        assert constant == pytest.approx(2.0)
        assert residual < 1e-12

    def test_heat_semigroup_preserves_c1_bound(self, laplacian64, smooth_field):
        """The heat semigroup contracts both sup and derivative sup."""
        assert smoothness_preservation(laplacian64, smooth_field, [0.01, 0.1, 1.0]) <= 1.0 + 1e-10
