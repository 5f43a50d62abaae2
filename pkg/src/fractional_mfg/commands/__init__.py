"""Command package for the fractional-mfg CLI."""

from .base_commands import BaseCommands, CommandOutcome
from .check_commands import CheckCommands
from .solve_commands import SolveCommands
from .system_commands import SystemCommands
from .coordinator import FractionalMFGCommands

__all__ = [
    "BaseCommands",
    "CommandOutcome",
    "CheckCommands",
    "SolveCommands",
    "SystemCommands",
    "FractionalMFGCommands",
]
