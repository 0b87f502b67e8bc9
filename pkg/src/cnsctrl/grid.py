"""Periodic 1D space-time grid and the finite-difference stencils.

All stencils act along the last axis with periodic wrap, so they accept a
single spatial slice of shape ``(n_x,)`` as well as a stack of time levels of
shape ``(n_levels, n_x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidGridError(ValueError):
    """Raised for grids too small or malformed for the three-point stencils."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, x_len) x [0, t_len]``.

    Nodes are ``x_i = i*dx`` for ``i = 0..n_x-1`` and time levels are
    ``t_l = l*dt`` for ``l = 0..n_t``.
    """

    n_x: int
    n_t: int
    x_len: float = 1.0
    t_len: float = 1.0

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 3:
            raise InvalidGridError(f"n_x must be an integer >= 3, got {self.n_x}")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise InvalidGridError(f"n_t must be a positive integer, got {self.n_t}")
        if not (self.x_len > 0 and self.t_len > 0):
            raise InvalidGridError("x_len and t_len must be positive")

    @property
    def dx(self) -> float:
        return self.x_len / self.n_x

    @property
    def dt(self) -> float:
        return self.t_len / self.n_t

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_t + 1, self.n_x)

    @property
    def cell_weight(self) -> float:
        """Quadrature weight ``dx*dt`` of one space-time node."""
        return self.dx * self.dt

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def with_time(self, n_t: int) -> "Grid":
        """Same spatial grid and horizon with a different number of steps."""
        return Grid(self.n_x, n_t, self.x_len, self.t_len)


@dataclass
class SpaceTimeField:
    """Values ``u[l, i] = u(t_l, x_i)`` on a :class:`Grid` (time-major)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise InvalidGridError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def __getitem__(self, level):
        return self.values[level]

    @classmethod
    def zeros(cls, grid: Grid) -> "SpaceTimeField":
        return cls(grid, grid.zeros())


def _check(u):
    if u.shape[-1] < 3:
        raise InvalidGridError(f"periodic stencils need n_x >= 3, got {u.shape[-1]}")


def _forward_diff(u):
    # u_{i+1} - u_i with periodic wrap
    v = np.empty_like(u)
    v[..., :-1] = u[..., 1:] - u[..., :-1]
    v[..., -1] = u[..., 0] - u[..., -1]
    return v


def _backward_diff(u):
    # u_i - u_{i-1} with periodic wrap
    v = np.empty_like(u)
    v[..., 1:] = u[..., 1:] - u[..., :-1]
    v[..., 0] = u[..., 0] - u[..., -1]
    return v


def _shift_next(u):
    # u_{i+1}
    v = np.empty_like(u)
    v[..., :-1] = u[..., 1:]
    v[..., -1] = u[..., 0]
    return v


def d_center(u, dx: float) -> np.ndarray:
    """Centered difference ``(u_{i+1} - u_{i-1}) / (2 dx)``."""
    u = np.asarray(u)
    _check(u)
    v = np.empty_like(u)
    v[..., 1:-1] = u[..., 2:] - u[..., :-2]
    v[..., 0] = u[..., 1] - u[..., -1]
    v[..., -1] = u[..., 0] - u[..., -2]
    return v / (2.0 * dx)


def laplacian(u, dx: float) -> np.ndarray:
    """Second difference ``(u_{i+1} - 2u_i + u_{i-1}) / dx**2``."""
    u = np.asarray(u)
    _check(u)
    fwd = _forward_diff(u)
    return (fwd - _backward_diff(u)) / dx**2


def face_average(a) -> np.ndarray:
    """``(a_{i+1} + a_i) / 2`` stored at index ``i`` (face ``i+1/2``)."""
    return 0.5 * (_shift_next(a) + a)


def div_avg_flux(a, u, dx: float) -> np.ndarray:
    """Conservative variable-coefficient second difference.

    ``[abar_{i+1/2} (u_{i+1}-u_i) - abar_{i-1/2} (u_i-u_{i-1})] / dx**2`` with
    ``abar_{i+1/2} = (a_{i+1}+a_i)/2``.
    """
    a = np.asarray(a)
    u = np.asarray(u)
    _check(u)
    if a.shape != u.shape:
        raise InvalidGridError(f"coefficient shape {a.shape} != field shape {u.shape}")
    flux = face_average(a) * _forward_diff(u)
    return _backward_diff(flux) / dx**2


def div_avg_flux_coeff_adjoint(u, w, dx: float) -> np.ndarray:
    """Gradient of ``sum_i w_i * div_avg_flux(a, u)_i`` with respect to ``a``.

    Summation by parts gives ``-sum_faces abar (du)(dw) / dx**2``; each face
    average splits its weight equally between its two nodes.
    """
    face = _forward_diff(u) * _forward_diff(w)
    # face i+1/2 touches nodes i and i+1
    return -0.5 * (face + np.roll(face, 1, axis=-1)) / dx**2
