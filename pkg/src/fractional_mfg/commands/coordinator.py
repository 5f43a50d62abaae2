"""Subcommand coordinator for fractional-mfg runs."""

from typing import TYPE_CHECKING, Any, Callable, Dict

from ..errors import ConfigurationError
from .base_commands import CommandOutcome
from .check_commands import CheckCommands
from .solve_commands import SolveCommands
from .system_commands import SystemCommands

if TYPE_CHECKING:
    from ..runner import FractionalMFGRunner


class FractionalMFGCommands:
    """Coordinator for all command categories."""

    def __init__(self, runner: "FractionalMFGRunner"):
        self.runner = runner
        self.check_commands = CheckCommands(runner)
        self.solve_commands = SolveCommands(runner)
        self.system_commands = SystemCommands(runner)
        self.handlers: Dict[str, Callable[[Any], CommandOutcome]] = {
            "specfun-check": self.check_commands.specfun_check,
            "mlop-check": self.check_commands.mlop_check,
            "smoothing-fit": self.check_commands.smoothing_fit,
            "solve-mv": self.solve_commands.solve_mv,
            "solve-hjb": self.solve_commands.solve_hjb,
            "solve-anticipating": self.solve_commands.solve_anticipating,
            "solve-fb": self.system_commands.solve_fb,
            "manifold-demo": self.system_commands.manifold_demo,
        }

    def dispatch(self, subcommand: str, config: Any) -> CommandOutcome:
        """Run one subcommand on its parsed configuration."""
        handler = self.handlers.get(subcommand)
        if handler is None:
            raise ConfigurationError(f"unknown subcommand {subcommand!r}", {"known": sorted(self.handlers)})
        return handler(config)
