#!/usr/bin/env python3

import sys
from typing import Optional

from cyclopts import App

from . import __version__
from .runner import FractionalMFGRunner
from .settings import settings

app = App(
    name="fractional-mfg",
    help="Fractional McKean-Vlasov, HJB and forward-backward mild solvers with numerical checks",
    version=__version__,
)


def _run(subcommand: str, config: Optional[str], out: Optional[str], seed: int, threads: Optional[int]) -> None:
    settings.apply_logging()
    try:
        code = FractionalMFGRunner(out, seed, threads).run(subcommand, config)
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        code = 130
    sys.exit(code)


@app.command(name="specfun-check")
def specfun_check(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Compare the Zolotarev-Pollard Mittag-Leffler values with the power series and check the Mellin identity.

    Parameters
    ----------
    config
        JSON run configuration; omitted runs the built-in demo.
    out
        Artifact directory.
    seed
        Seed of random probes.
    threads
        Worker threads for independent checks.
    """
    _run("specfun-check", config, out, seed, threads)


@app.command(name="mlop-check")
def mlop_check(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Check operator Mittag-Leffler factors per mode against scalar values."""
    _run("mlop-check", config, out, seed, threads)


@app.command(name="smoothing-fit")
def smoothing_fit(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Fit smoothing exponents on the torus and the heat-gradient slope on the metric circle."""
    _run("smoothing-fit", config, out, seed, threads)


@app.command(name="solve-mv")
def solve_mv(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Solve the forward McKean-Vlasov equation."""
    _run("solve-mv", config, out, seed, threads)


@app.command(name="solve-hjb")
def solve_hjb(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Solve the backward HJB equation."""
    _run("solve-hjb", config, out, seed, threads)


@app.command(name="solve-anticipating")
def solve_anticipating(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Solve a forward equation whose control reads the whole trajectory."""
    _run("solve-anticipating", config, out, seed, threads)


@app.command(name="solve-fb")
def solve_fb(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Solve the coupled forward-backward system, reporting the horizon when it fails."""
    _run("solve-fb", config, out, seed, threads)


@app.command(name="manifold-demo")
def manifold_demo(config: Optional[str] = None, out: Optional[str] = None, seed: int = 0, threads: Optional[int] = None):
    """Semigroup checks and the forward-backward system on a circle with a metric."""
    _run("manifold-demo", config, out, seed, threads)


if __name__ == "__main__":
    app()
