"""Explicit forward Lax-Friedrichs solver for the uncontrolled system.

Used as an independent reference for control solves that should reduce to an
initial-value problem, and for entropy-dissipation runs.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, d_center, div_avg_flux, laplacian
from .physics import PhysicsSpec, entropy_total
from .scheme import SchemeSpec

log = logging.getLogger(__name__)


class PositivityError(RuntimeError):
    def __init__(self, level: int):
        super().__init__(f"density became non-positive at level {level}")
        self.level = level


class CFLError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExplicitRunSpec:
    grid: Grid
    physics: PhysicsSpec
    scheme: SchemeSpec
    cfl_safety: float = 0.9

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass
class ExplicitTrajectory:
    grid: Grid
    rho: np.ndarray
    m: np.ndarray
    min_rho: np.ndarray
    entropy: np.ndarray


def step_explicit(rho, m, spec: ExplicitRunSpec):
    """Advance one forward-Euler step; returns ``(rho_next, m_next)``."""
    dt, dx = spec.grid.dt, spec.grid.dx
    phys, sch = spec.physics, spec.scheme
    vel = m / rho
    mu = phys.viscosity(rho)
    rho_next = rho - dt * (d_center(m, dx) - sch.c * dx * laplacian(rho, dx))
    m_next = m - dt * (
        d_center(m * vel + phys.pressure(rho), dx)
        - phys.beta * div_avg_flux(mu, vel, dx)
        - sch.c_prime * dx * laplacian(m, dx)
    )
    return rho_next, m_next


def check_cfl(rho, m, spec: ExplicitRunSpec):
    """Return ``(max_speed, dt_max)`` from ``|v| + sqrt(P'(rho))``.

    ``dt_max`` is ``inf`` when there is no wave motion at all.
    """
    rho = np.asarray(rho, dtype=float)
    speed = float(np.max(np.abs(m / rho) + np.sqrt(spec.physics.pressure.derivative(rho))))
    if speed == 0:
        return 0.0, math.inf
    return speed, spec.cfl_safety * spec.grid.dx / speed


def diffusion_dt_limit(rho, spec: ExplicitRunSpec) -> float:
    """Forward-Euler bound ``cfl_safety * dx^2 / (2 D)`` from the largest
    diffusion coefficient ``D`` of the two equations (artificial viscosity
    ``c dx``, ``c' dx`` and the physical ``beta mu(rho)/rho``)."""
    rho = np.asarray(rho, dtype=float)
    dx = spec.grid.dx
    visc = spec.physics.beta * float(np.max(spec.physics.viscosity(rho) / rho))
    diff = max(spec.scheme.c * dx, spec.scheme.c_prime * dx + visc)
    if diff == 0:
        return math.inf
    return spec.cfl_safety * dx**2 / (2 * diff)


def stable_dt(rho, m, spec: ExplicitRunSpec) -> float:
    """The smaller of the wave-speed bound of :func:`check_cfl` and
    :func:`diffusion_dt_limit`."""
    return min(check_cfl(rho, m, spec)[1], diffusion_dt_limit(rho, spec))


def run_explicit(spec: ExplicitRunSpec, rho0, m0) -> ExplicitTrajectory:
    """March the explicit scheme over ``spec.grid``.

    Raises :class:`CFLError` if ``dt`` exceeds :func:`stable_dt` at the
    initial state and warns if it does later; raises
    :class:`PositivityError` if the density stops being positive.
    """
    g = spec.grid
    rho = g.zeros()
    m = g.zeros()
    rho[0] = rho0
    m[0] = m0
    if np.any(rho[0] <= 0):
        raise PositivityError(0)
    dt_max = stable_dt(rho[0], m[0], spec)
    if g.dt > dt_max:
        raise CFLError(f"dt={g.dt:.3e} exceeds the stable step {dt_max:.3e} at the initial state")
    warned = False
    for l in range(g.n_t):
        rho[l + 1], m[l + 1] = step_explicit(rho[l], m[l], spec)
        if np.any(~(rho[l + 1] > 0)):
            raise PositivityError(l + 1)
        if not warned and g.dt > stable_dt(rho[l + 1], m[l + 1], spec):
            warnings.warn(f"stable step bound violated at level {l + 1}", RuntimeWarning, stacklevel=2)
            warned = True
    entropy = np.array([entropy_total(rho[l], m[l], g, spec.physics.pressure) for l in range(g.n_t + 1)])
    return ExplicitTrajectory(g, rho, m, rho.min(axis=1), entropy)
