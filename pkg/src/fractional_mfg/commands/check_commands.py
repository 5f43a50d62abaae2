"""Numerical check commands: special functions, operator Mittag-Leffler factors, smoothing fits."""

import numpy as np

from ..errors import FitUnreliableError
from ..manifold import build_lb_generator, heat_gradient_fit
from ..mlop import ml_multiplier, ml_operator_apply
from ..operators import Field, NormKind, TorusGrid, build_torus_generator, estimate_smoothing_exponent
from ..settings import MlopCheckConfig, SmoothingFitConfig, SpecfunCheckConfig
from ..specfun import FractionalOrder, mellin_check, ml_reference, ml_series, ml_zolotarev
from .base_commands import BaseCommands, CommandOutcome

CHECK_HEADER = ["check", "beta", "argument", "value", "reference", "error", "tolerance", "passed"]


class CheckCommands(BaseCommands):
    """Commands that compare numerical routines against independent oracles."""

    def specfun_check(self, cfg: SpecfunCheckConfig) -> CommandOutcome:
        """Zolotarev mixture against the power series, and the Mellin identity."""
        quad = self._quadrature(cfg.quadrature)
        orders = [FractionalOrder(beta) for beta in cfg.betas]
        self.logger.info(f"specfun check: {len(orders)} orders x {len(cfg.s_values)} arguments")

        def series_row(item):
            order, s = item
            value = ml_zolotarev(order, s, quad)
            reference = ml_series(order, s)
            error = abs(value - reference)
            return {
                "check": "zolotarev_vs_series",
                "beta": order.beta,
                "argument": s,
                "value": value,
                "reference": reference,
                "error": error,
                "tolerance": cfg.tol,
                "passed": error <= cfg.tol,
            }

        def mellin_row(pair):
            beta, omega = pair
            result = mellin_check(FractionalOrder(beta), omega, quad)
            return {
                "check": "mellin",
                "beta": beta,
                "argument": omega,
                "value": result.lhs,
                "reference": result.rhs,
                "error": result.relative_error,
                "tolerance": cfg.tol,
                "passed": result.relative_error <= cfg.tol,
            }

        rows = self._map(series_row, [(order, s) for order in orders for s in cfg.s_values])
        rows += self._map(mellin_row, cfg.mellin_pairs)
        self.write_table_csv(rows, CHECK_HEADER, "specfun_check.csv")
        failed = self._failed_rows(rows)
        return CommandOutcome({"success": not failed, "rows": len(rows), "failed": failed}, 4 if failed else 0)

    def mlop_check(self, cfg: MlopCheckConfig) -> CommandOutcome:
        """Per-mode factors of E_beta(A tau^beta) against scalar oracles; tau = 0 is the identity."""
        gen = self._generator(cfg.generator)
        grid = gen.grid
        rng = np.random.default_rng(self.runner.seed)
        f = Field(grid, rng.standard_normal(grid.shape))
        modes = gen.to_modes(f.values)
        active = np.abs(modes) > 1e-8 * float(np.max(np.abs(modes)))
        rows = []
        for beta in cfg.betas:
            order = FractionalOrder(beta)
            plan = self._plan(beta, cfg.quadrature)
            rows.append(
                {
                    "check": "mass_defect",
                    "beta": beta,
                    "argument": 0.0,
                    "value": plan.mass_defect,
                    "reference": 0.0,
                    "error": plan.mass_defect,
                    "tolerance": cfg.tol,
                    "passed": plan.mass_defect <= cfg.tol,
                }
            )
            for tau in cfg.taus:
                out = ml_operator_apply(gen, tau, plan, f, order)
                if tau == 0:
                    error = float(np.max(np.abs(out.values - f.values)))
                    rows.append(self._mlop_row("identity", beta, tau, error, 0.0))
                    continue
                factors = gen.to_modes(out.values)[active] / modes[active]
                eigenvalues = np.broadcast_to(gen.eigenvalues, modes.shape)[active]
                reference = np.array([ml_reference(order, lam * tau**beta) for lam in np.unique(eigenvalues)])
                expected = reference[np.searchsorted(np.unique(eigenvalues), eigenvalues)]
                error = float(np.max(np.abs(factors - expected)))
                direct = float(np.max(np.abs(ml_multiplier(plan, np.unique(eigenvalues), tau) - reference)))
                rows.append(self._mlop_row("mode_factor", beta, tau, max(error, direct), cfg.tol))
        self.write_table_csv(rows, CHECK_HEADER, "mlop_check.csv")
        failed = self._failed_rows(rows)
        return CommandOutcome({"success": not failed, "rows": len(rows), "failed": failed}, 4 if failed else 0)

    @staticmethod
    def _mlop_row(check, beta, tau, error, tol):
        return {
            "check": check,
            "beta": beta,
            "argument": tau,
            "value": error,
            "reference": 0.0,
            "error": error,
            "tolerance": tol,
            "passed": error <= tol,
        }

    def smoothing_fit(self, cfg: SmoothingFitConfig) -> CommandOutcome:
        """Fitted smoothing exponents on the torus and the heat-gradient slope on the metric circle."""
        rows = []
        grid = TorusGrid(cfg.points)
        for alpha in cfg.alphas:
            kind = "laplacian" if alpha == 2.0 else "fractional_laplacian"
            gen = build_torus_generator(grid, kind, alpha)
            expected = 1.0 / alpha
            try:
                estimate = estimate_smoothing_exponent(gen, seed=self.runner.seed)
                value, residual = estimate.omega_hat, estimate.residual
                probe_norms = estimate.probe_norms
            except FitUnreliableError as e:
                self.logger.warning(f"smoothing fit for alpha={alpha}: {e.message}")
                value, residual, probe_norms = float("nan"), e.residual, None
            error = abs(value - expected) / expected
            rows.append(
                {
                    "check": f"omega_hat:{kind}",
                    "fitted": f"operator_norm:{NormKind.SUP.value}",
                    "beta": 1.0,
                    "argument": alpha,
                    "value": value,
                    "reference": expected,
                    "error": error,
                    "tolerance": cfg.relative_tol,
                    "passed": bool(error <= cfg.relative_tol),
                    "fit_residual": residual,
                    "random_probe_norms": probe_norms,
                }
            )
        gen = build_lb_generator(self._metric(cfg.metric), cfg.manifold_points)
        for kind in (NormKind.SUP, NormKind.L1):
            try:
                fit = heat_gradient_fit(gen, gen.grid.metric, kind)
                slope, residual = fit.slope, fit.residual
            except FitUnreliableError as e:
                self.logger.warning(f"heat gradient fit ({kind.value}): {e.message}")
                slope, residual = float("nan"), e.residual
            error = abs(slope + 0.5) / 0.5
            rows.append(
                {
                    "check": f"heat_slope:{kind.value}",
                    "fitted": f"operator_norm:{kind.value}",
                    "beta": 1.0,
                    "argument": 2.0,
                    "value": slope,
                    "reference": -0.5,
                    "error": error,
                    "tolerance": cfg.manifold_tol,
                    "passed": bool(error <= cfg.manifold_tol),
                    "fit_residual": residual,
                }
            )
        self.write_table_csv(rows, CHECK_HEADER + ["fitted", "fit_residual"], "smoothing_fit.csv")
        failed = self._failed_rows(rows)
        return CommandOutcome({"success": not failed, "rows": rows, "failed": failed}, 4 if failed else 0)
