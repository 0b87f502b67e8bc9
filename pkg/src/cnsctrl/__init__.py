"""Space-time primal-dual solver for optimal control of the 1D barotropic
compressible Navier-Stokes system, with entropy and conservation diagnostics.

Modules
-------
grid
    Periodic space-time grid and the finite-difference stencils.
physics
    Pressure and viscosity laws, costs, entropy pair, Fisher information.
scheme
    Implicit Lax-Friedrichs residuals, the discrete Lagrangian and its exact
    gradient, implicit forward and adjoint solves.
pdhg
    The primal-dual iteration with an H-norm dual step.
explicit
    Explicit forward Lax-Friedrichs reference solver.
diagnostics
    Mass drift, entropy dissipation, KKT residuals, trajectory comparison.
config, app
    Configuration grammar, presets, run orchestration and the CLI.
"""

__version__ = "0.1.0"

from .grid import Grid, SpaceTimeField  # noqa: E402
from .pdhg import PdhgConfig, solve  # noqa: E402
from .physics import PhysicsSpec, PressureLaw, RunningCostSpec, TerminalCostSpec, ViscosityLaw  # noqa: E402
from .scheme import ControlState, SchemeSpec  # noqa: E402

__all__ = [
    "__version__",
    "Grid",
    "SpaceTimeField",
    "PdhgConfig",
    "solve",
    "PhysicsSpec",
    "PressureLaw",
    "RunningCostSpec",
    "TerminalCostSpec",
    "ViscosityLaw",
    "ControlState",
    "SchemeSpec",
]
