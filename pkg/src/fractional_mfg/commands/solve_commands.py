"""Single-equation solve commands: McKean-Vlasov forward, HJB backward, anticipating."""

import math

import numpy as np

from ..errors import NoContractionError
from ..mild import (
    ITERATION_CEILING_FLAG,
    Curve,
    attempt_succeeded,
    bisect_horizon,
    cd_residual,
    is_horizon_failure,
    solve_anticipating,
    solve_backward_fractional,
    solve_forward_fractional,
)
from ..models import build_drift, build_hamiltonian, drift_source, hamiltonian_source, lipschitz_audit
from ..operators import NormKind
from ..settings import SolveAnticipatingConfig, SolveHJBConfig, SolveMVConfig
from ..specfun import FractionalOrder
from .base_commands import BaseCommands, CommandOutcome


class SolveCommands(BaseCommands):
    """Commands solving one mild equation."""

    def solve_mv(self, cfg: SolveMVConfig) -> CommandOutcome:
        """Forward McKean-Vlasov equation with a constant control."""
        gen = self._generator(cfg.generator)
        grid = gen.grid
        Y = self._field(cfg.Y, grid)
        tg = self._time_grid(cfg.time)
        order = FractionalOrder(cfg.beta)
        plan = self._plan(cfg.beta, cfg.quadrature)
        drift = build_drift(cfg.drift.kind, **cfg.drift.params)
        picard = self._picard(cfg.picard)
        source = drift_source(drift, grid)
        control = np.full((tg.steps,) + grid.shape, cfg.control)

        solution = solve_forward_fractional(gen, source, Y, control, order, plan, tg, picard)
        curve = solution.curve
        mass = grid.integrate(curve.values)
        nodal_control = np.full(curve.values.shape, cfg.control)
        late_residual = None
        if tg.steps >= 10:
            residual = cd_residual(curve, order, gen, source, nodal_control[1:-1])
            late = residual.time_grid.nodes >= 0.5 * (tg.a + tg.T)
            late_residual = float(np.max(residual.node_norms(NormKind.SUP)[late]))
        self.write_curve_csv(curve, "forward.csv")
        report = {
            "success": True,
            "picard": solution.report.to_dict(),
            "mass_drift": float(np.max(np.abs(mass - mass[0]))),
            "cd_residual_late": late_residual,
            "audit": lipschitz_audit(drift, np.random.default_rng(self.runner.seed)).to_dict(),
        }
        return CommandOutcome(report)

    def solve_hjb(self, cfg: SolveHJBConfig) -> CommandOutcome:
        """Backward HJB equation with terminal datum Z."""
        gen = self._generator(cfg.generator)
        grid = gen.grid
        Z = self._field(cfg.Z, grid)
        tg = self._time_grid(cfg.time)
        order = FractionalOrder(cfg.beta)
        plan = self._plan(cfg.beta, cfg.quadrature)
        controls = self._controls(cfg.controls.lo, cfg.controls.hi, cfg.controls.count, cfg.controls.refinement)
        hamiltonian = build_hamiltonian(cfg.hamiltonian.kind, controls, **cfg.hamiltonian.params)
        picard = self._picard(cfg.picard)

        solution = solve_backward_fractional(gen, hamiltonian_source(hamiltonian, controls, grid), Z, None, order, plan, tg, picard)
        self.write_curve_csv(solution.curve, "backward.csv")
        audit = lipschitz_audit(hamiltonian, np.random.default_rng(self.runner.seed), ctrl=controls)
        report = {
            "success": True,
            "picard": solution.report.to_dict(),
            "control_gap": controls.gap,
            "audit": audit.to_dict(),
        }
        return CommandOutcome(report)

    def solve_anticipating(self, cfg: SolveAnticipatingConfig) -> CommandOutcome:
        """Forward equation driven by u(b) read from the whole curve; failures get a horizon estimate."""
        gen = self._generator(cfg.generator)
        grid = gen.grid
        Y = self._field(cfg.Y, grid)
        tg = self._time_grid(cfg.time)
        order = FractionalOrder(cfg.beta)
        plan = self._plan(cfg.beta, cfg.quadrature)
        picard = self._picard(cfg.picard)
        strength = cfg.anticipation.strength

        def u_functional(curve: Curve) -> np.ndarray:
            if cfg.anticipation.kind == "terminal":
                target = curve.values[-1]
            else:
                target = np.mean(curve.midpoint_values(), axis=0)
            return strength * np.broadcast_to(target, curve.values.shape)

        def source(t, values, grads, par):
            return par

        source.gradient_coupled = False

        def solve(time_grid):
            return solve_anticipating(gen, source, u_functional, Y, order, plan, time_grid, picard)

        try:
            solution = solve(tg)
        except NoContractionError as e:
            report = {"success": False, "diagnostic": e.to_diagnostic()}
            if not is_horizon_failure(e):
                report["horizon"] = {"t0": None, "flag": ITERATION_CEILING_FLAG, "probes": []}
            elif cfg.horizon_search:
                estimate = bisect_horizon(
                    lambda T: attempt_succeeded(lambda: solve(tg.with_horizon(T))), tg.T, start=tg.a, horizon_failed=True
                )
                report["horizon"] = {"t0": estimate.t0, "flag": estimate.flag, "probes": estimate.probes}
            return CommandOutcome(report, e.exit_code)
        self.write_curve_csv(solution.curve, "anticipating.csv")
        report = {"success": True, "picard": solution.report.to_dict()}
        if cfg.generator.kind == "scalar" and order.is_classical and cfg.anticipation.kind == "terminal":
            report["closed_form_terminal"] = self._terminal_closed_form(cfg.generator.rate, strength, tg.T - tg.a, float(Y.values[0]))
            report["terminal_value"] = float(solution.curve.values[-1, 0])
        return CommandOutcome(report)

    @staticmethod
    def _terminal_closed_form(rate: float, strength: float, tau: float, y: float) -> float:
        """b(T) for b' = rate b + strength b(T), b(a) = y."""
        growth = math.exp(rate * tau)
        integral = (growth - 1.0) / rate if rate != 0 else tau
        return growth * y / (1.0 - strength * integral)
