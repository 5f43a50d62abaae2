"""Run driver: parses the configuration, dispatches a subcommand and writes report.json."""

import logging
import sys
import time
from pathlib import Path
from typing import Optional, Union

from .commands import FractionalMFGCommands
from .errors import FractionalMFGError, ValidationError
from .settings import load_run_config, settings


class FractionalMFGRunner:
    """Owns the run directory, seed and thread count of one invocation."""

    def __init__(
        self,
        out_dir: Optional[Union[str, Path]] = None,
        seed: int = 0,
        threads: Optional[int] = None,
    ):
        """Initialize the runner.

        Args:
            out_dir: Artifact directory (default: FRACTIONAL_MFG_OUTPUT_DIR or ``runs``)
            seed: Seed of every random probe drawn during the run
            threads: Worker threads for independent checks (default: FRACTIONAL_MFG_THREADS)
        """
        self.config = settings.runtime
        self.output_dir = Path(out_dir if out_dir is not None else self.config.output_dir)
        self.seed = int(seed)
        self.threads = int(threads if threads is not None else self.config.threads)
        self.logger = logging.getLogger("fractional_mfg.runner")
        self.commands = FractionalMFGCommands(self)

    def run(self, subcommand: str, config_path: Optional[Union[str, Path]] = None) -> int:
        """Execute one subcommand and return its exit status.

        Invalid input prints a diagnostic to stderr and writes nothing. Any other library error is
        recorded in report.json with its diagnostic.
        """
        started = time.perf_counter()
        base = self.commands.check_commands
        try:
            config = load_run_config(subcommand, config_path)
        except ValidationError as e:
            print(base._error_response(e), file=sys.stderr)
            return e.exit_code

        self.logger.info(f"running {subcommand} into {self.output_dir}")
        try:
            outcome = self.commands.dispatch(subcommand, config)
        except ValidationError as e:
            print(base._error_response(e), file=sys.stderr)
            return e.exit_code
        except FractionalMFGError as e:
            self.logger.error(f"{subcommand} failed: {e.message}")
            report = base._envelope(subcommand, config, started, {"success": False, "diagnostic": e.to_diagnostic()})
            base.write_json("report.json", report)
            return e.exit_code

        base.write_json("report.json", base._envelope(subcommand, config, started, outcome.report))
        return outcome.exit_code
