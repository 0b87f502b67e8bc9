"""Run diagnostics: conservation, entropy dissipation, KKT residuals and
trajectory comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import Grid
from .physics import PhysicsSpec, entropy_total, fisher_information
from .scheme import ControlState, SchemeSpec, grad_lagrangian, residual_density


def _wnorm(v, weight):
    return math.sqrt(weight * float(np.sum(np.square(v))))


def mass_drift(rho, grid: Grid) -> np.ndarray:
    """``dx * sum_i rho_i^l - dx * sum_i rho_i^0`` for every level."""
    rho = np.asarray(rho, dtype=float)
    mass = grid.dx * rho.sum(axis=-1)
    return mass - mass[0]


def mass_drift_bound(state: ControlState, spec: SchemeSpec) -> np.ndarray:
    """Per-level bound on |mass drift| implied by the density residual.

    Spatial stencils telescope, so ``dx sum_i rho^{l+1} - dx sum_i rho^l``
    equals ``dt dx sum_i R1^l``; the drift at level ``l`` is bounded by the
    accumulated ``dt * |R1^k|_1`` (with ``|.|_1`` dx-weighted), which in turn
    is at most the accumulated weighted L2 norm on a unit-length domain.
    """
    g = state.grid
    r1 = residual_density(state, spec)
    per_level = g.dt * g.dx * np.abs(r1).sum(axis=-1)
    return np.concatenate([[0.0], np.cumsum(per_level)])


@dataclass
class EntropyReport:
    entropy: np.ndarray
    fisher: np.ndarray
    balance: np.ndarray

    def non_increasing(self, slack: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.entropy) <= slack))

    def write_csv(self, path, grid: Grid):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "t", "entropy", "fisher", "balance"])
            for l in range(self.entropy.size):
                bal = repr(float(self.balance[l])) if l < self.balance.size else ""
                w.writerow([l, repr(float(grid.t[l])), repr(float(self.entropy[l])), repr(float(self.fisher[l])), bal])


def entropy_dissipation_report(rho, m, physics: PhysicsSpec, grid: Grid) -> EntropyReport:
    """Entropy ``G^l``, Fisher information ``I^l`` and the discrete balance
    ``(G^{l+1} - G^l)/dt + beta I^{l+1}`` along a trajectory."""
    n = rho.shape[0]
    ent = np.array([entropy_total(rho[l], m[l], grid, physics.pressure) for l in range(n)])
    fis = np.array([fisher_information(rho[l], m[l], grid, physics.viscosity) for l in range(n)])
    bal = np.diff(ent) / grid.dt + physics.beta * fis[1:]
    return EntropyReport(ent, fis, bal)


KKT_KEYS = ("r_primal_rho", "r_primal_m", "r_dual_rho", "r_dual_m", "r_control")


def kkt_residuals(state: ControlState, spec: SchemeSpec, physics: PhysicsSpec) -> dict:
    """Weighted L2 norms of the five L2-gradient blocks of the Lagrangian.

    Each block is the raw partial derivative divided by ``dx*dt``, so the
    first two coincide with the density and momentum residuals.
    """
    g = state.grid
    w = g.cell_weight
    grad = grad_lagrangian(state, spec, physics)
    blocks = (grad.phi[:-1], grad.psi[:-1], grad.rho[1:], grad.m[1:], grad.a[1:])
    return {k: _wnorm(b / w, w) for k, b in zip(KKT_KEYS, blocks)}


@dataclass
class ComparisonReport:
    """Errors of a coarse trajectory against a fine reference.

    The first four fields compare the final time slice; the ``traj_`` fields
    compare all shared time levels.
    """

    rel_l2_rho: float
    rel_l2_m: float
    linf_rho: float
    linf_m: float
    traj_rel_l2_rho: float
    traj_rel_l2_m: float
    traj_linf_rho: float
    traj_linf_m: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def restrict_in_time(fine, coarse_levels: int):
    """Subsample a fine trajectory onto the shared coarse time levels."""
    fine = np.asarray(fine)
    n_fine = fine.shape[0] - 1
    n_coarse = coarse_levels - 1
    if n_coarse < 1 or n_fine % n_coarse:
        raise ValueError(f"fine steps {n_fine} are not a multiple of coarse steps {n_coarse}")
    return fine[:: n_fine // n_coarse]


def _rel(err, ref):
    nref = np.linalg.norm(ref)
    return float(np.linalg.norm(err) / nref) if nref > 0 else float(np.linalg.norm(err))


def compare_trajectories(coarse_rho, coarse_m, fine_rho, fine_m) -> ComparisonReport:
    """Compare a coarse-in-time trajectory to a finer one on the same spatial grid.

    Arrays are ``(levels, n_x)``; the fine step count must be an integer
    multiple of the coarse one. Relative errors use the fine trajectory as the
    reference; uniform quadrature weights cancel in the ratios.
    """
    coarse_rho, coarse_m = np.asarray(coarse_rho), np.asarray(coarse_m)
    if np.shape(fine_rho)[1:] != coarse_rho.shape[1:] or np.shape(fine_m)[1:] != coarse_m.shape[1:]:
        raise ValueError("spatial grids differ")
    if coarse_rho.shape != coarse_m.shape:
        raise ValueError("coarse density and momentum shapes differ")
    fr = restrict_in_time(fine_rho, coarse_rho.shape[0])
    fm = restrict_in_time(fine_m, coarse_m.shape[0])
    er, em = coarse_rho - fr, coarse_m - fm
    return ComparisonReport(
        rel_l2_rho=_rel(er[-1], fr[-1]),
        rel_l2_m=_rel(em[-1], fm[-1]),
        linf_rho=float(np.max(np.abs(er[-1]))),
        linf_m=float(np.max(np.abs(em[-1]))),
        traj_rel_l2_rho=_rel(er, fr),
        traj_rel_l2_m=_rel(em, fm),
        traj_linf_rho=float(np.max(np.abs(er))),
        traj_linf_m=float(np.max(np.abs(em))),
    )
