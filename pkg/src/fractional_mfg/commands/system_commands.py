"""Forward-backward system commands: the torus demo and the metric-circle demo."""

import numpy as np

from ..fbsolver import FBProblem, solve_fb
from ..manifold import build_lb_generator, riemannian_gradient_norm
from ..models import (
    ControlChain,
    build_control_map,
    build_coupling,
    build_drift,
    build_hamiltonian,
    lipschitz_audit,
)
from ..operators import (
    Field,
    Generator,
    adjoint_check,
    commutator_norm,
    gradient_duality_defect,
    semigroup_apply,
)
from ..settings import ManifoldDemoConfig, SolveFBConfig
from ..specfun import FractionalOrder
from .base_commands import BaseCommands, CommandOutcome

CONSERVATION_TOL = 1e-10
COMMUTATOR_GROWTH = 1.5


class SystemCommands(BaseCommands):
    """Commands solving coupled forward-backward systems."""

    def _problem(self, cfg, gen: Generator, Y: Field) -> FBProblem:
        grid = gen.grid
        controls = self._controls(cfg.controls.lo, cfg.controls.hi, cfg.controls.count, cfg.controls.refinement)
        return FBProblem(
            forward_gen=gen,
            backward_gen=gen,
            drift=build_drift(cfg.drift.kind, **cfg.drift.params),
            hamiltonian=build_hamiltonian(cfg.hamiltonian.kind, controls, **cfg.hamiltonian.params),
            controls=controls,
            control_map=build_control_map(cfg.controls.map.kind, controls.bounds, **cfg.controls.map.params),
            Y=Y,
            Z=self._field(cfg.Z, grid),
            time_grid=self._time_grid(cfg.time),
            order=FractionalOrder(cfg.beta),
            coupling=build_coupling(cfg.coupling.kind, cfg.coupling.strength),
            quad=self._quadrature(cfg.quadrature),
        )

    def _audits(self, prob: FBProblem):
        rng = np.random.default_rng(self.runner.seed)
        return [
            lipschitz_audit(prob.hamiltonian, rng, ctrl=prob.controls).to_dict(),
            lipschitz_audit(prob.drift, rng).to_dict(),
            lipschitz_audit(prob.control_map, rng).to_dict(),
            lipschitz_audit(ControlChain(prob.control_map, prob.grid), rng, samples=200).to_dict(),
        ]

    def _solve(self, prob: FBProblem, cfg, detect_horizon: bool):
        solution = solve_fb(prob, self._picard(cfg.picard), detect_horizon=detect_horizon)
        if solution.report.converged:
            self.write_curve_csv(solution.forward_curve, "forward.csv")
            self.write_curve_csv(solution.backward_curve, "backward.csv")
        return solution

    def solve_fb(self, cfg: SolveFBConfig) -> CommandOutcome:
        """Coupled forward-backward system; non-convergence reports the detected horizon."""
        gen = self._generator(cfg.generator)
        prob = self._problem(cfg, gen, self._field(cfg.Y, gen.grid))
        audits = self._audits(prob)
        solution = self._solve(prob, cfg, cfg.detect_horizon)
        report = {"success": solution.report.converged, "fb": solution.report.to_dict(), "audits": audits}
        return CommandOutcome(report, 0 if solution.report.converged else 3)

    def manifold_demo(self, cfg: ManifoldDemoConfig) -> CommandOutcome:
        """Semigroup checks on the circle with a metric followed by the forward-backward system there."""
        metric = self._metric(cfg.metric)
        gen = build_lb_generator(metric, cfg.points)
        grid = gen.grid
        density = self._field(cfg.Y, grid).values
        Y = Field(grid, density / float(grid.integrate(density)))
        Z = self._field(cfg.Z, grid)

        ones = Field(grid, np.ones(grid.shape))
        rows = []
        for t in cfg.commutator_times:
            constant_error = float(np.max(np.abs(semigroup_apply(gen, t, ones).values - 1.0)))
            mass_error = abs(float(grid.integrate(semigroup_apply(gen, t, Y).values)) - float(grid.integrate(Y.values)))
            rows.append(self._row("constants_preserved", t, constant_error, CONSERVATION_TOL))
            rows.append(self._row("mass_conserved", t, mass_error, CONSERVATION_TOL))
        rows.append(self._row("adjoint_defect", 0.0, adjoint_check(gen, grid.weights, Y, Z), CONSERVATION_TOL))
        rows.append(self._row("gradient_duality_defect", 0.0, gradient_duality_defect(Y, Z), CONSERVATION_TOL))
        commutator = commutator_norm(gen, cfg.commutator_times)
        rows.append(self._commutator_row(commutator.times, commutator.norms))
        self.write_table_csv(rows, ["check", "time", "value", "tolerance", "passed"], "manifold_checks.csv")

        prob = self._problem(cfg, gen, Y)
        solution = self._solve(prob, cfg, detect_horizon=True)
        report = {
            "success": solution.report.converged and not self._failed_rows(rows),
            "checks": rows,
            "commutator_norms": commutator.norms,
            "volume": grid.volume,
            "terminal_gradient_sup": float(np.max(riemannian_gradient_norm(Z, metric).values)),
            "fb": solution.report.to_dict(),
            "audits": self._audits(prob),
        }
        if not solution.report.converged:
            return CommandOutcome(report, 3)
        return CommandOutcome(report, 4 if self._failed_rows(rows) else 0)

    @staticmethod
    def _commutator_row(times: np.ndarray, norms: np.ndarray):
        """Bounded near t = 0: the smallest time may not exceed the next one by more than COMMUTATOR_GROWTH."""
        order = np.argsort(times)
        norms = norms[order]
        passed = bool(np.all(np.isfinite(norms)))
        if norms.size > 1:
            passed = passed and bool(norms[0] <= COMMUTATOR_GROWTH * norms[1] + CONSERVATION_TOL)
        return {
            "check": "commutator_bounded",
            "time": float(times[order][0]) if times.size else 0.0,
            "value": float(np.max(norms)) if norms.size else 0.0,
            "tolerance": COMMUTATOR_GROWTH,
            "passed": passed,
        }

    @staticmethod
    def _row(check: str, t: float, value: float, tol: float):
        return {"check": check, "time": t, "value": value, "tolerance": tol, "passed": value <= tol}
