"""Tests for the runner, the command coordinator and the command line."""

import csv
import json
import math

import numpy as np
import pytest

from src.fractional_mfg.commands import FractionalMFGCommands
from src.fractional_mfg.commands.base_commands import BaseCommands
from src.fractional_mfg.errors import ConfigurationError
from src.fractional_mfg.main import app
from src.fractional_mfg.mild import Curve, TimeGrid
from src.fractional_mfg.operators import Field, TorusGrid, build_torus_generator, semigroup_apply
from src.fractional_mfg.settings import SpecfunCheckConfig


def read_report(runner):
    return json.loads((runner.output_dir / "report.json").read_text())


class TestCoordinator:
    """Subcommand dispatch."""

    def test_all_subcommands_registered(self, runner):
        """Eight subcommands have handlers."""
        commands = FractionalMFGCommands(runner)
        assert sorted(commands.handlers) == sorted(
            [
                "specfun-check",
                "mlop-check",
                "smoothing-fit",
                "solve-mv",
                "solve-hjb",
                "solve-anticipating",
                "solve-fb",
                "manifold-demo",
            ]
        )

    def test_unknown_subcommand(self, runner):
        """Dispatching an unregistered name is a configuration error."""
        with pytest.raises(ConfigurationError):
            FractionalMFGCommands(runner).dispatch("solve-everything", SpecfunCheckConfig())


class TestArtifacts:
    """CSV writers."""

    def test_curve_csv_round_trips_floats(self, runner):
        """One row per time node and grid node; values parse back exactly."""
        grid = TimeGrid(0.0, 0.3, 3)
        values = np.array([[0.1, 1.0 / 3.0], [2.0, -1e-17], [np.pi, 0.0], [1.5, 2.5]])
        path = BaseCommands(runner).write_curve_csv(Curve(grid, TorusGrid(2), values), "curve.csv")
        with path.open() as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 8
        assert [int(row["node"]) for row in rows[:2]] == [0, 1]
        assert float(rows[1]["value"]) == 1.0 / 3.0
        assert float(rows[3]["value"]) == -1e-17
        assert float(rows[4]["time"]) == grid.nodes[2]

    def test_table_csv_keeps_column_order(self, runner):
        """Columns follow the header; non-float cells are written as is."""
        rows = [{"beta": 0.5, "passed": True, "label": "a"}]
        path = BaseCommands(runner).write_table_csv(rows, ["label", "beta", "passed"], "table.csv")
        lines = path.read_text().splitlines()
        assert lines == ["label,beta,passed", "a,0.5,True"]


class TestRunner:
    """report.json and artifacts of single runs."""

    def test_specfun_check_writes_report_and_table(self, runner, write_config):
        """A small check passes and writes both artifacts."""
        path = write_config({"betas": [0.5], "s_values": [-1.0, 0.5], "mellin_pairs": [[0.5, 1.0]]})
        assert runner.run("specfun-check", path) == 0
        report = read_report(runner)
        assert report["success"] is True
        assert report["subcommand"] == "specfun-check"
        assert report["seed"] == 7
        assert report["rows"] == 3
        assert set(report["versions"]) >= {"python", "numpy", "scipy", "mpmath", "fractional_mfg"}
        with (runner.output_dir / "specfun_check.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 3
        assert all(row["passed"] == "True" for row in rows)

    def test_anticipating_matches_closed_form(self, runner):
        """The built-in anticipating demo reproduces the closed-form terminal value."""
        assert runner.run("solve-anticipating") == 0
        report = read_report(runner)
        assert report["terminal_value"] == pytest.approx(report["closed_form_terminal"], rel=1e-6)
        assert (runner.output_dir / "anticipating.csv").exists()

    def test_anticipating_failure_reports_horizon(self, runner, write_config):
        """Beyond the horizon the run exits 3 with a bracketed estimate near ln 2."""
        path = write_config({"time": {"T": 1.0, "steps": 64}})
        assert runner.run("solve-anticipating", path) == 3
        report = read_report(runner)
        assert report["success"] is False
        assert report["horizon"]["flag"] == "bracketed"
        assert report["horizon"]["t0"] == pytest.approx(0.6931, rel=0.1)
        assert not (runner.output_dir / "anticipating.csv").exists()

    def test_solve_hjb_writes_backward_curve(self, runner, write_config):
        """A small HJB solve writes the backward curve."""
        path = write_config({"generator": {"kind": "laplacian", "points": 32}, "time": {"T": 0.05, "steps": 16}})
        assert runner.run("solve-hjb", path) == 0
        report = read_report(runner)
        assert report["picard"]["converged"] is True
        assert report["audit"]["passed"] is True
        with (runner.output_dir / "backward.csv").open() as handle:
            header = next(csv.reader(handle))
        assert header == ["time", "node", "value"]

    def test_solve_mv_without_drift_is_the_heat_semigroup(self, runner, write_config):
        """beta = 1 and a zero drift give e^{At} Y at every node."""
        path = write_config(
            {"generator": {"kind": "laplacian", "points": 32}, "time": {"T": 0.1, "steps": 16}, "beta": 1.0, "drift": {"kind": "zero"}}
        )
        assert runner.run("solve-mv", path) == 0
        report = read_report(runner)
        assert report["picard"]["converged"] is True
        with (runner.output_dir / "forward.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        values = np.array([float(row["value"]) for row in rows]).reshape(17, 32)
        times = np.array([float(row["time"]) for row in rows]).reshape(17, 32)[:, 0]
        grid = TorusGrid(32)
        gen = build_torus_generator(grid, "laplacian")
        Y = Field(grid, (1.0 + 0.5 * np.cos(grid.nodes)) / (2.0 * math.pi))
        expected = np.stack([semigroup_apply(gen, t, Y).values for t in times])
        assert np.max(np.abs(values - expected)) <= 1e-10

    def test_solve_fb_reports_certificate(self, runner, write_config):
        """The coupled demo at T = 0.1 converges and records residuals, audits and both curves."""
        path = write_config({"generator": {"points": 64}, "time": {"T": 0.1, "steps": 32}})
        assert runner.run("solve-fb", path) == 0
        report = read_report(runner)
        fb = report["fb"]
        assert report["success"] is True
        assert fb["converged"] is True
        assert fb["residuals"]["forward"] <= 1e-8
        assert fb["residuals"]["backward"] <= 1e-8
        assert fb["detected_T0"] is None
        assert len(report["audits"]) == 4
        assert (runner.output_dir / "forward.csv").exists()
        assert (runner.output_dir / "backward.csv").exists()

    @pytest.mark.slow
    def test_solve_fb_default_demo(self, runner):
        """The built-in demo reaches both mild residuals below 1e-6."""
        assert runner.run("solve-fb") == 0
        residuals = read_report(runner)["fb"]["residuals"]
        assert max(residuals.values()) <= 1e-6

    def test_manifold_demo_end_to_end(self, runner):
        """Semigroup checks pass and the system on the curved circle converges."""
        assert runner.run("manifold-demo") == 0
        report = read_report(runner)
        assert report["success"] is True
        assert report["fb"]["converged"] is True
        assert all(row["passed"] for row in report["checks"])
        with (runner.output_dir / "manifold_checks.csv").open() as handle:
            assert len(list(csv.DictReader(handle))) == len(report["checks"])
        assert (runner.output_dir / "backward.csv").exists()

    def test_smoothing_fit_end_to_end(self, runner):
        """Fitted exponents and heat slopes pass and name the fitted operator norm."""
        assert runner.run("smoothing-fit") == 0
        report = read_report(runner)
        checks = [row["check"] for row in report["rows"]]
        assert checks == [
            "omega_hat:laplacian",
            "omega_hat:fractional_laplacian",
            "heat_slope:sup",
            "heat_slope:L1",
        ]
        assert [row["fitted"] for row in report["rows"]] == [
            "operator_norm:sup",
            "operator_norm:sup",
            "operator_norm:sup",
            "operator_norm:L1",
        ]
        assert len(report["rows"][0]["random_probe_norms"]) > 0
        with (runner.output_dir / "smoothing_fit.csv").open() as handle:
            assert "fitted" in next(csv.reader(handle))

    def test_invalid_config_writes_nothing(self, runner, write_config, capsys):
        """Validation failures exit 2 with a diagnostic on stderr and no artifacts."""
        path = write_config({"beta": 1.5})
        assert runner.run("solve-mv", path) == 2
        assert not runner.output_dir.exists()
        diagnostic = json.loads(capsys.readouterr().err)
        assert diagnostic["exit_code"] == 2

    def test_unknown_key_writes_nothing(self, runner, write_config):
        """Unknown keys are rejected before any computation."""
        assert runner.run("solve-fb", write_config({"horizon": 1.0})) == 2
        assert not runner.output_dir.exists()


class TestCommandLine:
    """cyclopts entry point."""

    def test_exit_status_is_propagated(self, tmp_path, write_config):
        """The process exits with the runner's status."""
        path = write_config({"betas": [0.5], "s_values": [0.0], "mellin_pairs": [[0.5, 0.0]]})
        out = tmp_path / "cli"
        with pytest.raises(SystemExit) as info:
            app(["specfun-check", "--config", str(path), "--out", str(out), "--seed", "3"])
        assert info.value.code == 0
        assert json.loads((out / "report.json").read_text())["seed"] == 3
