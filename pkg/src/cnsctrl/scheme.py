"""Implicit Lax-Friedrichs residuals, the discrete Lagrangian and its exact
gradients.

Free unknowns are ``rho, m, a`` on levels ``1..n_t`` and ``phi, psi`` on levels
``0..n_t-1``. The multiplier at level ``l`` pairs with the residual that links
levels ``l`` and ``l+1``, the latter treated implicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .grid import (
    Grid,
    SpaceTimeField,
    d_center,
    div_avg_flux,
    div_avg_flux_coeff_adjoint,
    laplacian,
)
from .physics import DomainError, PhysicsSpec, terminal_dual_conditions

log = logging.getLogger(__name__)

FIELD_NAMES = ("rho", "m", "a", "phi", "psi")


@dataclass(frozen=True)
class SchemeSpec:
    """Discretization parameters.

    ``c`` and ``c_prime`` scale the ``dx * Lap`` artificial viscosity in the
    density and momentum equations. ``control_half`` keeps the 1/2 on the
    control energy ``a^2 mu(rho)``; set it False to drop it.
    """

    grid: Grid
    c: float = 0.5
    c_prime: float = 0.5
    control_half: bool = True

    def __post_init__(self):
        if self.c < 0 or self.c_prime < 0:
            raise ValueError("artificial viscosities must be non-negative")

    @property
    def control_weight(self) -> float:
        return 0.5 if self.control_half else 1.0


@dataclass
class ControlState:
    """One PDHG iterate: every primal and dual field plus the fixed initial data.

    All fields are ``(n_t+1, n_x)`` arrays. Level 0 of ``rho``/``m`` holds the
    initial data, level 0 of ``a`` is unused (zero), and level ``n_t`` of
    ``phi``/``psi`` stores the terminal conditions, which do not enter the
    Lagrangian.
    """

    grid: Grid
    rho: np.ndarray
    m: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    rho0: np.ndarray = field(init=False)
    m0: np.ndarray = field(init=False)

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.grid.shape}")
            setattr(self, name, arr)
        self.rho0 = self.rho[0].copy()
        self.m0 = self.m[0].copy()

    @classmethod
    def initial(cls, grid: Grid, rho0, m0, physics: PhysicsSpec | None = None) -> "ControlState":
        """Constant-in-time primal guess, zero control and zero duals
        (terminal dual levels set from the terminal cost)."""
        rho = np.tile(np.asarray(rho0, dtype=float), (grid.n_t + 1, 1))
        m = np.tile(np.asarray(m0, dtype=float), (grid.n_t + 1, 1))
        state = cls(grid, rho, m, grid.zeros(), grid.zeros(), grid.zeros())
        if physics is not None:
            state.pin_terminal(physics)
        return state

    def pin_terminal(self, physics: PhysicsSpec) -> None:
        phi1, psi1 = terminal_dual_conditions(physics.terminal_cost, self.grid.n_x)
        self.phi[-1] = phi1
        self.psi[-1] = psi1

    def copy(self) -> "ControlState":
        return ControlState(
            self.grid, self.rho.copy(), self.m.copy(), self.a.copy(), self.phi.copy(), self.psi.copy()
        )

    def field(self, name: str) -> SpaceTimeField:
        return SpaceTimeField(self.grid, getattr(self, name))


@dataclass
class LagrangianGradient:
    """Partial derivatives of the discrete Lagrangian, full-shape arrays with
    zeros on the non-free levels."""

    rho: np.ndarray
    m: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    psi: np.ndarray

    def primal(self):
        return self.rho, self.m, self.a

    def dual(self):
        return self.phi, self.psi


def _check_positive(rho):
    if np.any(~(rho > 0)):
        raise DomainError("density must be strictly positive on every free level")


def level_residuals(rho_prev, m_prev, rho, m, a, dt, dx, spec: SchemeSpec, physics: PhysicsSpec):
    """Implicit residuals linking ``(rho_prev, m_prev)`` to ``(rho, m, a)``.

    Works on single slices or on stacks of levels along the first axis.
    """
    vel = m / rho
    mu = physics.viscosity(rho)
    r1 = (rho - rho_prev) / dt + d_center(m, dx) - spec.c * dx * laplacian(rho, dx)
    r2 = (
        (m - m_prev) / dt
        + d_center(m * vel + physics.pressure(rho) + mu * a, dx)
        - physics.beta * div_avg_flux(mu, vel, dx)
        - spec.c_prime * dx * laplacian(m, dx)
    )
    return r1, r2


def residuals(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec):
    """``(R1, R2)`` on levels ``0..n_t-1``, each of shape ``(n_t, n_x)``."""
    g = state.grid
    _check_positive(state.rho)
    return level_residuals(
        state.rho[:-1], state.m[:-1], state.rho[1:], state.m[1:], state.a[1:], g.dt, g.dx, spec, physics
    )


def residual_density(state: ControlState, spec: SchemeSpec) -> np.ndarray:
    g = state.grid
    rho, m = state.rho, state.m
    return (rho[1:] - rho[:-1]) / g.dt + d_center(m[1:], g.dx) - spec.c * g.dx * laplacian(rho[1:], g.dx)


def residual_momentum(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec) -> np.ndarray:
    return residuals(state, spec, physics)[1]


def discrete_lagrangian(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec) -> float:
    g = state.grid
    w = g.cell_weight
    r1, r2 = residuals(state, spec, physics)
    rho1, m1, a1 = state.rho[1:], state.m[1:], state.a[1:]
    control = spec.control_weight * np.sum(a1**2 * physics.viscosity(rho1))
    running = physics.running_cost.objective_weight * np.sum(m1**2)
    terminal = physics.terminal_cost.value(state.rho[-1], g)
    coupling = np.sum(state.phi[:-1] * r1) + np.sum(state.psi[:-1] * r2)
    return float(w * (control + running + coupling) + terminal)


def grad_lagrangian(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec) -> LagrangianGradient:
    """Exact gradient of :func:`discrete_lagrangian` by summation by parts."""
    g = state.grid
    dx, dt, w = g.dx, g.dt, g.cell_weight
    rho1, m1, a1 = state.rho[1:], state.m[1:], state.a[1:]
    _check_positive(rho1)
    phi_l, psi_l = state.phi[:-1], state.psi[:-1]
    h = spec.control_weight
    beta = physics.beta

    vel = m1 / rho1
    mu = physics.viscosity(rho1)
    dmu = physics.viscosity.derivative(rho1)
    dpsi = d_center(psi_l, dx)
    dphi = d_center(phi_l, dx)
    visc_psi = div_avg_flux(mu, psi_l, dx)

    # multiplier at level k (k < n_t) also meets level k through -u^k/dt
    phi_next = np.zeros_like(phi_l)
    phi_next[:-1] = state.phi[1:-1]
    psi_next = np.zeros_like(psi_l)
    psi_next[:-1] = state.psi[1:-1]

    g_rho = (
        h * a1**2 * dmu
        + (phi_l - phi_next) / dt
        - spec.c * dx * laplacian(phi_l, dx)
        + (vel**2 - physics.pressure.derivative(rho1) - dmu * a1) * dpsi
        - beta * (dmu * div_avg_flux_coeff_adjoint(vel, psi_l, dx) - vel / rho1 * visc_psi)
    )
    g_m = (
        (psi_l - psi_next) / dt
        - dphi
        - spec.c_prime * dx * laplacian(psi_l, dx)
        - 2 * vel * dpsi
        - beta * visc_psi / rho1
        + 2 * physics.running_cost.objective_weight * m1
    )
    g_a = 2 * h * a1 * mu - mu * dpsi
    r1, r2 = level_residuals(state.rho[:-1], state.m[:-1], rho1, m1, a1, dt, dx, spec, physics)

    out = LagrangianGradient(*(g.zeros() for _ in FIELD_NAMES))
    out.rho[1:] = w * g_rho
    out.rho[-1] += dx * physics.terminal_cost.weights(g.n_x)
    out.m[1:] = w * g_m
    out.a[1:] = w * g_a
    out.phi[:-1] = w * r1
    out.psi[:-1] = w * r2
    return out


def assemble_control_from_dual(psi, grid: Grid) -> np.ndarray:
    """``a = D_c psi`` at every level (the continuous optimality relation)."""
    return d_center(np.asarray(psi, dtype=float), grid.dx)


# --- implicit forward solve -------------------------------------------------


def _stencil_matrix(op, n):
    # column j holds op(e_j); stencils act along the last axis
    return op(np.eye(n)).T


def level_jacobian(rho, m, a, dt, dx, spec: SchemeSpec, physics: PhysicsSpec):
    """Dense Jacobian of :func:`level_residuals` w.r.t. ``(rho, m)`` of the
    implicit level, as a ``(2n, 2n)`` block matrix."""
    n = rho.size
    eye = np.eye(n)
    dc = _stencil_matrix(lambda u: d_center(u, dx), n)
    lap = _stencil_matrix(lambda u: laplacian(u, dx), n)
    vel = m / rho
    mu = physics.viscosity(rho)
    dmu = physics.viscosity.derivative(rho)
    visc = div_avg_flux(np.broadcast_to(mu, (n, n)), eye, dx).T
    coeff = div_avg_flux(eye, np.broadcast_to(vel, (n, n)), dx).T

    j11 = eye / dt - spec.c * dx * lap
    j12 = dc
    j21 = dc * (-(vel**2) + physics.pressure.derivative(rho) + dmu * a) - physics.beta * (
        coeff * dmu - visc * (vel / rho)
    )
    j22 = eye / dt + dc * (2 * vel) - physics.beta * visc / rho - spec.c_prime * dx * lap
    return np.block([[j11, j12], [j21, j22]])


class ForwardSolveError(RuntimeError):
    pass


def solve_implicit_forward(
    grid: Grid,
    rho0,
    m0,
    spec: SchemeSpec,
    physics: PhysicsSpec,
    a=None,
    tol: float = 1e-13,
    max_newton: int = 30,
):
    """March the implicit scheme with Newton's method at every level.

    Returns ``(rho, m)`` of shape ``(n_t+1, n_x)`` with ``R1 = R2 = 0`` to
    ``tol`` (max-norm, scaled by ``dt``). ``a`` defaults to zero control.
    """
    n = grid.n_x
    dt, dx = grid.dt, grid.dx
    a = grid.zeros() if a is None else np.asarray(a, dtype=float)
    rho = grid.zeros()
    m = grid.zeros()
    rho[0], m[0] = rho0, m0
    for l in range(grid.n_t):
        r, q = rho[l].copy(), m[l].copy()
        for it in range(max_newton):
            r1, r2 = level_residuals(rho[l], m[l], r, q, a[l + 1], dt, dx, spec, physics)
            res = np.concatenate([r1, r2])
            if dt * np.max(np.abs(res)) <= tol:
                break
            step = np.linalg.solve(level_jacobian(r, q, a[l + 1], dt, dx, spec, physics), -res)
            r, q = r + step[:n], q + step[n:]
            if np.any(r <= 0):
                raise ForwardSolveError(f"density lost positivity at level {l + 1}")
        else:
            raise ForwardSolveError(f"Newton did not converge at level {l + 1}")
        rho[l + 1], m[l + 1] = r, q
    return rho, m


def solve_adjoint(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec) -> ControlState:
    """Fill the multipliers so that the ``rho``/``m`` gradients of the
    Lagrangian vanish, marching backward from the terminal conditions.

    Level ``l`` of the primal meets ``(phi, psi)^{l-1}`` only through the
    implicit Jacobian of its own residual, so each level is one dense
    transposed solve. Modifies ``state`` in place and returns it.
    """
    g = state.grid
    n = g.n_x
    state.pin_terminal(physics)
    for l in range(g.n_t, 0, -1):
        state.phi[l - 1] = 0.0
        state.psi[l - 1] = 0.0
        grad = grad_lagrangian(state, spec, physics)
        rhs = np.concatenate([grad.rho[l], grad.m[l]])
        jac = level_jacobian(state.rho[l], state.m[l], state.a[l], g.dt, g.dx, spec, physics)
        lam = np.linalg.solve(g.cell_weight * jac.T, -rhs)
        state.phi[l - 1] = lam[:n]
        state.psi[l - 1] = lam[n:]
    return state


def forward_warm_start(grid: Grid, rho0, m0, spec: SchemeSpec, physics: PhysicsSpec, a=None) -> ControlState:
    """State whose primal solves the implicit scheme under control ``a``
    (zero by default) and whose multipliers solve the matching adjoint
    equations; only the control optimality condition is left unsatisfied."""
    state = ControlState.initial(grid, rho0, m0, physics)
    if a is not None:
        state.a[1:] = np.asarray(a, dtype=float)[1:]
    state.rho[:], state.m[:] = solve_implicit_forward(grid, rho0, m0, spec, physics, a=state.a)
    return solve_adjoint(state, spec, physics)


@dataclass
class ReducedSolveInfo:
    """Outcome of :func:`reduced_warm_start`."""

    iterations: int
    objective: float
    control_residual: float
    message: str


def reduced_warm_start(
    grid: Grid,
    rho0,
    m0,
    spec: SchemeSpec,
    physics: PhysicsSpec,
    max_iters: int = 500,
    gtol: float = 1e-12,
) -> tuple[ControlState, ReducedSolveInfo]:
    """Minimise the cost over the control alone, eliminating ``(rho, m)``.

    Each evaluation runs the implicit forward solve for the current control
    and the adjoint solve for its multipliers; the control block of the
    Lagrangian gradient is then the exact reduced gradient. L-BFGS drives it
    to a stationary point, which is a KKT point of the full problem: the
    returned state satisfies ``R1 = R2 = 0`` and the ``rho``/``m`` optimality
    conditions to solver precision, and the control condition to ``gtol``.
    """
    state = ControlState.initial(grid, rho0, m0, physics)
    shape = (grid.n_t, grid.n_x)
    scale = 1.0 / grid.cell_weight

    def objective(av):
        state.a[1:] = av.reshape(shape)
        try:
            state.rho[:], state.m[:] = solve_implicit_forward(grid, rho0, m0, spec, physics, a=state.a)
        except (ForwardSolveError, DomainError, np.linalg.LinAlgError, FloatingPointError, ValueError):
            return math.inf, np.zeros_like(av)
        solve_adjoint(state, spec, physics)
        value = discrete_lagrangian(state, spec, physics)
        return scale * value, scale * grad_lagrangian(state, spec, physics).a[1:].ravel()

    x0 = np.zeros(grid.n_t * grid.n_x)
    if max_iters == 0:  # L-BFGS-B would still take one step
        x, nit, message = x0, 0, "skipped"
    else:
        res = scipy.optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", options=dict(maxiter=max_iters, gtol=gtol, ftol=0.0)
        )
        x, nit, message = res.x, int(res.nit), str(res.message)
    value, grad = objective(x)
    info = ReducedSolveInfo(nit, value / scale, float(np.max(np.abs(grad))), message)
    return state, info


def lift_forward_solution(state: ControlState, rho, m) -> ControlState:
    """Copy of ``state`` with the primal density and momentum replaced."""
    out = state.copy()
    out.rho[:] = rho
    out.m[:] = m
    return out


def with_grid(spec: SchemeSpec, grid: Grid) -> SchemeSpec:
    return replace(spec, grid=grid)
