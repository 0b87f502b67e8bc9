"""Constitutive laws, entropy structure and cost functionals of the
barotropic Navier-Stokes control problem, evaluated on grid slices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .grid import Grid, d_center


class DomainError(ValueError):
    """Raised when a density argument is not strictly positive."""


def _positive(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise DomainError("density must be strictly positive")
    return rho


@dataclass(frozen=True)
class PressureLaw:
    """``P(rho) = k_p * rho**gamma``."""

    k_p: float = 0.1
    gamma: float = 2.0

    def __post_init__(self):
        if not self.k_p > 0:
            raise ValueError(f"k_p must be positive, got {self.k_p}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")

    def __call__(self, rho):
        return self.k_p * rho**self.gamma

    def derivative(self, rho):
        return self.k_p * self.gamma * rho ** (self.gamma - 1)

    def potential(self, rho):
        """Internal energy ``k_p rho**gamma / (gamma-1)``; solves
        ``P_hat'' = P'/rho`` with ``P_hat(0) = P_hat'(0) = 0``."""
        return self.k_p * rho**self.gamma / (self.gamma - 1)

    def potential_derivative(self, rho):
        return self.k_p * self.gamma * rho ** (self.gamma - 1) / (self.gamma - 1)

    def potential_second_derivative(self, rho):
        return self.k_p * self.gamma * rho ** (self.gamma - 2)


@dataclass(frozen=True)
class ViscosityLaw:
    """``mu(rho) = rho**alpha``; ``constant=True`` pins ``mu = 1``."""

    alpha: float = 0.0
    constant: bool = False

    def __call__(self, rho):
        rho = np.asarray(rho)
        if self.constant or self.alpha == 0:
            return np.ones_like(rho, dtype=float)
        return rho**self.alpha

    def derivative(self, rho):
        rho = np.asarray(rho)
        if self.constant or self.alpha == 0:
            return np.zeros_like(rho, dtype=float)
        return self.alpha * rho ** (self.alpha - 1)


@dataclass(frozen=True)
class RunningCostSpec:
    """Quadratic momentum functional with weight ``c_f``.

    With ``penalize=True`` (default) the minimized objective gains
    ``+c_f * int m**2``, i.e. ``F(rho, m) = -c_f int m**2`` enters with its
    minus sign. ``penalize=False`` takes ``F = +c_f int m**2`` literally, which
    rewards momentum instead.
    """

    c_f: float = 0.0
    penalize: bool = True

    def __post_init__(self):
        if self.c_f < 0:
            raise ValueError(f"c_f must be non-negative, got {self.c_f}")

    @property
    def objective_weight(self) -> float:
        """Coefficient of ``int m**2`` in the minimized objective."""
        return self.c_f if self.penalize else -self.c_f

    def value(self, m, grid: Grid) -> float:
        """``F(rho, m)`` for one time slice."""
        return -self.objective_weight * grid.dx * float(np.sum(np.asarray(m) ** 2))


@dataclass(frozen=True)
class TerminalCostSpec:
    """``H(rho_1, m_1) = int rho_1 g dx``; independent of ``m_1``."""

    g: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def value(self, rho1, grid: Grid) -> float:
        return grid.dx * float(np.sum(np.asarray(rho1) * self.weights(grid.n_x)))

    def weights(self, n_x: int) -> np.ndarray:
        g = np.asarray(self.g, dtype=float)
        if g.size == 0:
            return np.zeros(n_x)
        if g.shape != (n_x,):
            raise ValueError(f"terminal weight has shape {g.shape}, grid needs ({n_x},)")
        return g


@dataclass(frozen=True)
class PhysicsSpec:
    pressure: PressureLaw = field(default_factory=PressureLaw)
    viscosity: ViscosityLaw = field(default_factory=ViscosityLaw)
    beta: float = 0.1
    running_cost: RunningCostSpec = field(default_factory=RunningCostSpec)
    terminal_cost: TerminalCostSpec = field(default_factory=TerminalCostSpec)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


def pressure_potential(rho, law: PressureLaw):
    return law.potential(_positive(rho))


def entropy_density(rho, m, law: PressureLaw):
    """``G(rho, m) = m**2 / (2 rho) + P_hat(rho)``."""
    rho = _positive(rho)
    return m**2 / (2 * rho) + law.potential(rho)


def entropy_flux_density(rho, m, law: PressureLaw):
    """``Psi(rho, m) = m**3 / (2 rho**2) + P_hat'(rho) m``."""
    rho = _positive(rho)
    return m**3 / (2 * rho**2) + law.potential_derivative(rho) * m


def entropy_hessian(rho, m, law: PressureLaw):
    """Analytic ``(G_rr, G_rm, G_mm)`` of :func:`entropy_density`."""
    return (
        m**2 / rho**3 + law.potential_second_derivative(rho),
        -m / rho**2,
        1.0 / rho,
    )


HessianFn = Callable[[np.ndarray, np.ndarray, PressureLaw], tuple]


def check_entropy_flux_compatibility(
    law: PressureLaw,
    sample_points: Iterable[tuple[float, float]],
    hessian: HessianFn = entropy_hessian,
) -> float:
    """Largest violation of the integrability condition for an entropy flux.

    An entropy ``G`` admits a flux ``Psi`` with ``Psi_rm = Psi_mr`` iff
    ``G_mm (P' - m^2/rho^2) - G_rr - 2 G_rm m/rho = 0``. ``hessian`` supplies
    ``(G_rr, G_rm, G_mm)``; the default is the kinetic-plus-internal entropy.
    """
    pts = np.asarray(list(sample_points), dtype=float)
    if pts.size == 0:
        raise ValueError("need at least one sample point")
    pts = pts.reshape(-1, 2)
    rho = _positive(pts[:, 0])
    m = pts[:, 1]
    g_rr, g_rm, g_mm = hessian(rho, m, law)
    res = g_mm * (law.derivative(rho) - m**2 / rho**2) - g_rr - g_rm * 2 * m / rho
    return float(np.max(np.abs(res)))


def entropy_total(rho, m, grid: Grid, law: PressureLaw) -> float:
    return grid.dx * float(np.sum(entropy_density(rho, m, law)))


def fisher_information(rho, m, grid: Grid, viscosity: ViscosityLaw) -> float:
    """Rectangle-rule ``int |d_x (m/rho)|^2 mu(rho) dx``."""
    rho = _positive(rho)
    dv = d_center(m / rho, grid.dx)
    return grid.dx * float(np.sum(dv**2 * viscosity(rho)))


def hamiltonian_functional(rho, m, phi, psi, grid: Grid, physics: PhysicsSpec) -> float:
    rho = _positive(rho)
    mu = physics.viscosity(rho)
    dphi = d_center(phi, grid.dx)
    dpsi = d_center(psi, grid.dx)
    dv = d_center(m / rho, grid.dx)
    density = (
        0.5 * dpsi**2 * mu
        + m * dphi
        + (m**2 / rho + physics.pressure(rho)) * dpsi
        - physics.beta * dpsi * dv * mu
    )
    return grid.dx * float(np.sum(density)) + physics.running_cost.value(m, grid)


def terminal_dual_conditions(spec: TerminalCostSpec, n_x: int | None = None):
    """Terminal ``(phi_1, psi_1)`` from ``dH/drho_1 + phi_1 = 0``,
    ``dH/dm_1 + psi_1 = 0``."""
    if n_x is None:
        n_x = np.asarray(spec.g).size
    g = spec.weights(n_x)
    return -g.copy(), np.zeros(n_x)
