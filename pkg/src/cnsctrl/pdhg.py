"""Primal-dual hybrid gradient iteration for the discrete saddle problem.

Primal unknowns ``(rho, m, a)`` take explicit gradient steps on the
Lagrangian evaluated at over-relaxed duals; the duals take an exact
proximal ascent step in a differential-operator norm ``H``, solved
spectrally (or by conjugate gradients).
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.fft
import scipy.sparse.linalg as spla

from .grid import Grid, laplacian
from .physics import PhysicsSpec
from .scheme import ControlState, SchemeSpec, discrete_lagrangian, grad_lagrangian, residuals

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, message: str = "non-finite iterate"):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


class LinearSolverError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"H-norm solve did not converge (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class PdhgConfig:
    """Step sizes, H-norm weights and stopping rules.

    The H-norm is ``c1 |grad v|^2 + c2 |Lap v|^2 + c3 |d_t v|^2`` (plus
    ``eps |v|^2``). ``time_bc`` selects the boundary closure of the time
    second difference: ``"mixed"`` (reflecting at ``l=0``, zero beyond the
    last free level) or ``"neumann"`` (reflecting at both ends).
    ``psi_weights`` optionally gives the momentum multiplier its own
    ``(c1, c2, c3)``. ``augmentation = r > 0`` adds ``(r/2)|dx dt R(z)|^2``,
    measured in the dual ``A_H^{-1}`` norm, to the primal objective: the
    saddle points are unchanged, but the constraint curvature seen by the
    primal step gains a positive semidefinite part. ``residual_tol <= 0``
    disables early stopping.
    """

    tau: float = 0.1
    sigma: float = 0.1
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    psi_weights: tuple | None = None
    max_iters: int = 50_000
    primal_inner_steps: int = 1
    augmentation: float = 0.0
    residual_tol: float = 1e-6
    rho_min: float = 1e-8
    eps: float = 1e-8
    time_bc: str = "mixed"
    solver: str = "spectral"
    cg_rtol: float = 1e-10
    log_stride: int = 1
    deterministic: bool = False

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma > 0):
            raise ValueError("tau and sigma must be positive")
        if min(self.c1, self.c2, self.c3) < 0 or self.c1 + self.c2 + self.c3 == 0:
            raise ValueError("H-norm weights must be non-negative and not all zero")
        if self.psi_weights is not None:
            w = tuple(float(v) for v in self.psi_weights)
            if len(w) != 3 or min(w) < 0 or sum(w) == 0:
                raise ValueError("psi_weights needs three non-negative weights, not all zero")
            object.__setattr__(self, "psi_weights", w)
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.augmentation < 0:
            raise ValueError("augmentation must be non-negative")
        if self.primal_inner_steps < 1:
            raise ValueError("primal_inner_steps must be >= 1")
        if not self.rho_min > 0:
            raise ValueError("rho_min must be positive")
        if self.time_bc not in ("mixed", "neumann"):
            raise ValueError(f"unknown time_bc {self.time_bc!r}")
        if self.solver not in ("spectral", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.log_stride < 1:
            raise ValueError("log_stride must be >= 1")

    def weights(self, dual: str = "phi") -> tuple[float, float, float]:
        if dual == "psi" and self.psi_weights is not None:
            return self.psi_weights
        return (self.c1, self.c2, self.c3)


def fft_workers(deterministic: bool = False) -> int:
    if deterministic:
        return 1
    try:
        return max(1, int(os.environ.get("CNSCTRL_THREADS", "1")))
    except ValueError:
        return 1


def time_second_difference(n_t: int, dt: float, bc: str = "mixed") -> np.ndarray:
    """Matrix of ``-D_tt`` on dual levels ``0..n_t-1``.

    ``"mixed"`` equals ``B^T B / dt^2`` with ``B`` the adjoint of the forward
    time difference on the free primal levels, so it reflects at ``l = 0``
    and vanishes past the pinned terminal level.
    """
    if bc == "mixed":
        b = np.eye(n_t) - np.eye(n_t, k=1)
        return b.T @ b / dt**2
    t = 2 * np.eye(n_t) - np.eye(n_t, k=1) - np.eye(n_t, k=-1)
    t[0, 0] = 1
    t[-1, -1] = 1
    if n_t == 1:
        t[0, 0] = 0
    return t / dt**2


class HNormOperator:
    """``A_H = c1(-Lap_x) + c2 Lap_x^2 + c3(-D_tt) + eps`` on ``(n_t, n_x)``
    dual arrays (levels ``0..n_t-1``)."""

    def __init__(self, grid: Grid, config: PdhgConfig, dual: str = "phi"):
        self.grid = grid
        self.config = config
        self.c1, self.c2, self.c3 = config.weights(dual)
        self.eps = config.eps
        self.time_matrix = time_second_difference(grid.n_t, grid.dt, config.time_bc)
        self.time_eigval, self.time_eigvec = np.linalg.eigh(self.time_matrix)
        k = np.arange(grid.n_x // 2 + 1)
        lam_x = (2 - 2 * np.cos(2 * np.pi * k / grid.n_x)) / grid.dx**2
        self.symbol = (
            self.c1 * lam_x[None, :]
            + self.c2 * lam_x[None, :] ** 2
            + self.c3 * self.time_eigval[:, None]
            + self.eps
        )
        self.workers = fft_workers(config.deterministic)

    @property
    def shape(self):
        return (self.grid.n_t, self.grid.n_x)

    def apply(self, v: np.ndarray) -> np.ndarray:
        dx = self.grid.dx
        lap = laplacian(v, dx)
        return -self.c1 * lap + self.c2 * laplacian(lap, dx) + self.c3 * (self.time_matrix @ v) + self.eps * v

    def solve_spectral(self, rhs: np.ndarray) -> np.ndarray:
        w = self.time_eigvec.T @ rhs
        wh = scipy.fft.rfft(w, axis=-1, workers=self.workers)
        w = scipy.fft.irfft(wh / self.symbol, n=self.grid.n_x, axis=-1, workers=self.workers)
        return self.time_eigvec @ w

    def solve_cg(self, rhs: np.ndarray) -> np.ndarray:
        n = rhs.size
        op = spla.LinearOperator((n, n), matvec=lambda v: self.apply(v.reshape(self.shape)).ravel())
        # Jacobi-free CG; the spectral solve doubles as the preconditioner
        pre = spla.LinearOperator((n, n), matvec=lambda v: self.solve_spectral(v.reshape(self.shape)).ravel())
        x, info = spla.cg(op, rhs.ravel(), rtol=self.config.cg_rtol, atol=0.0, M=pre, maxiter=10 * n)
        rel = np.linalg.norm(op.matvec(x) - rhs.ravel()) / max(np.linalg.norm(rhs), 1e-300)
        if info != 0 and rel > 10 * self.config.cg_rtol:
            raise LinearSolverError(rel)
        return x.reshape(self.shape)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.config.solver == "cg":
            return self.solve_cg(rhs)
        return self.solve_spectral(rhs)


def hnorm_operators(grid: Grid, config: PdhgConfig):
    """``(A_phi, A_psi)``; one shared operator unless ``psi_weights`` is set."""
    op_phi = HNormOperator(grid, config, "phi")
    if config.psi_weights is None:
        return op_phi, op_phi
    return op_phi, HNormOperator(grid, config, "psi")


def weighted_norm(v, grid: Grid) -> float:
    """``dx*dt``-weighted L2 norm."""
    return math.sqrt(grid.cell_weight * float(np.sum(np.square(v))))


def extrapolate(current, previous):
    return 2 * current - previous


def primal_step(
    state: ControlState,
    phi_bar,
    psi_bar,
    config: PdhgConfig,
    spec: SchemeSpec,
    physics: PhysicsSpec,
    operators=None,
):
    """Gradient steps on ``z -> L(z, phi_bar, psi_bar) + |z - z_k|^2 / (2 tau)``.

    Updates ``rho, m, a`` on levels ``1..n_t`` of ``state`` in place and
    clamps the density from below by ``rho_min``.
    """
    z0 = (state.rho[1:].copy(), state.m[1:].copy(), state.a[1:].copy())
    probe = state.copy()
    probe.phi[:] = phi_bar
    probe.psi[:] = psi_bar
    tau = config.tau
    for _ in range(config.primal_inner_steps):
        if config.augmentation > 0:
            # gradient of L + (r/2)|W R|^2 in the dual H^{-1} norm: shift the
            # multipliers by r A_H^{-1}(W R(z))
            op_phi, op_psi = operators or hnorm_operators(state.grid, config)
            r1, r2 = residuals(probe, spec, physics)
            scale = config.augmentation * state.grid.cell_weight
            probe.phi[:-1] = phi_bar[:-1] + op_phi.solve(scale * r1)
            probe.psi[:-1] = psi_bar[:-1] + op_psi.solve(scale * r2)
        grad = grad_lagrangian(probe, spec, physics)
        for name, anchor in zip(("rho", "m", "a"), z0):
            gz = getattr(grad, name)[1:]
            cur = getattr(probe, name)[1:]
            # step tau on L + |z - z_k|^2/(2 tau) lands on z_k - tau*grad L(z)
            cur[:] = anchor - tau * gz
        np.maximum(probe.rho[1:], config.rho_min, out=probe.rho[1:])
    for name in ("rho", "m", "a"):
        getattr(state, name)[1:] = getattr(probe, name)[1:]
    for name in ("rho", "m", "a"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise DivergenceError(-1, f"non-finite {name}")
    return state


def dual_step(state: ControlState, config: PdhgConfig, spec: SchemeSpec, physics: PhysicsSpec, operators=None):
    """Exact proximal ascent on the duals.

    The Lagrangian is linear in ``(phi, psi)``, so the update solves
    ``A_H (phi_new - phi) = sigma * dx*dt * R1`` (and likewise ``psi`` with
    ``R2``). Returns the increments ``(d_phi, d_psi)``.
    """
    op_phi, op_psi = operators or hnorm_operators(state.grid, config)
    r1, r2 = residuals(state, spec, physics)
    scale = config.sigma * state.grid.cell_weight
    d_phi = op_phi.solve(scale * r1)
    d_psi = op_psi.solve(scale * r2)
    state.phi[:-1] += d_phi
    state.psi[:-1] += d_psi
    return d_phi, d_psi


LOG_COLUMNS = ("iter", "L", "r1_norm", "r2_norm", "dprimal", "ddual", "mass_drift", "seconds")


@dataclass
class IterationLog:
    records: list = field(default_factory=list)

    def append(self, **row):
        self.records.append(tuple(row[c] for c in LOG_COLUMNS))

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        j = LOG_COLUMNS.index(name)
        return np.array([r[j] for r in self.records])

    def last(self) -> dict:
        return dict(zip(LOG_COLUMNS, self.records[-1])) if self.records else {}

    def write_csv(self, path, include_time: bool = True):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_COLUMNS)
            for rec in self.records:
                row = [repr(v) if isinstance(v, float) else str(v) for v in rec]
                if not include_time:
                    row[-1] = "0.0"
                writer.writerow(row)


@dataclass
class SolveResult:
    state: ControlState
    log: IterationLog
    status: str
    iterations: int
    residual: float


def combined_residual(state, spec, physics, d_primal=0.0, d_dual=0.0):
    r1, r2 = residuals(state, spec, physics)
    g = state.grid
    return weighted_norm(r1, g) + weighted_norm(r2, g) + d_primal + d_dual


def solve(
    state: ControlState,
    config: PdhgConfig,
    spec: SchemeSpec,
    physics: PhysicsSpec,
    callback=None,
) -> SolveResult:
    """Run the primal-dual iteration from ``state`` (not modified).

    Stops after ``max_iters`` iterations or once ``|R1| + |R2|`` plus the
    primal and dual update norms fall below ``residual_tol``. Status is
    ``"converged"``, ``"iteration-cap"`` or ``"diverged"`` (``"skipped"`` when
    ``max_iters == 0``); on divergence the last finite iterate is returned.
    """
    # divergence is detected from non-finite iterates, not floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _iterate(state, config, spec, physics, callback)


def _iterate(state, config, spec, physics, callback) -> SolveResult:
    g = state.grid
    state = state.copy()
    state.pin_terminal(physics)
    ops = hnorm_operators(g, config)
    log_ = IterationLog()
    mass0 = g.dx * float(np.sum(state.rho[0]))
    phi_bar, psi_bar = state.phi.copy(), state.psi.copy()
    t0 = time.perf_counter()
    status = "iteration-cap"
    resid = combined_residual(state, spec, physics)
    if config.max_iters == 0:
        return SolveResult(state, log_, "skipped", 0, resid)
    k = 0
    for k in range(1, config.max_iters + 1):
        prev = state.copy()
        try:
            primal_step(state, phi_bar, psi_bar, config, spec, physics, ops)
            d_phi, d_psi = dual_step(state, config, spec, physics, ops)
        except (FloatingPointError, DivergenceError, ValueError) as exc:
            log.warning("iteration %d diverged: %s", k, exc)
            return SolveResult(prev, log_, "diverged", k, math.nan)
        if not (np.all(np.isfinite(state.phi)) and np.all(np.isfinite(state.psi))):
            return SolveResult(prev, log_, "diverged", k, math.nan)
        phi_bar = extrapolate(state.phi, prev.phi)
        psi_bar = extrapolate(state.psi, prev.psi)

        dprimal = (
            weighted_norm(state.rho - prev.rho, g) + weighted_norm(state.m - prev.m, g) + weighted_norm(state.a - prev.a, g)
        )
        ddual = weighted_norm(d_phi, g) + weighted_norm(d_psi, g)
        r1, r2 = residuals(state, spec, physics)
        n1, n2 = weighted_norm(r1, g), weighted_norm(r2, g)
        resid = n1 + n2 + dprimal + ddual
        if not math.isfinite(resid):
            return SolveResult(prev, log_, "diverged", k, math.nan)
        last = k == config.max_iters or resid <= config.residual_tol
        if k % config.log_stride == 0 or last or k == 1:
            mass = g.dx * state.rho.sum(axis=1)
            log_.append(
                iter=k,
                L=discrete_lagrangian(state, spec, physics),
                r1_norm=n1,
                r2_norm=n2,
                dprimal=dprimal,
                ddual=ddual,
                mass_drift=float(np.max(np.abs(mass - mass0))),
                seconds=time.perf_counter() - t0,
            )
            if callback is not None:
                callback(k, state)
        if resid <= config.residual_tol:
            status = "converged"
            break
    return SolveResult(state, log_, status, k, resid)


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(PdhgConfig))
