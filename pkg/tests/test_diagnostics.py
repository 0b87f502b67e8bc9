import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnsctrl.diagnostics import (
    KKT_KEYS,
    compare_trajectories,
    entropy_dissipation_report,
    kkt_residuals,
    mass_drift,
    mass_drift_bound,
    restrict_in_time,
)
from cnsctrl.grid import Grid
from cnsctrl.physics import PhysicsSpec
from cnsctrl.scheme import ControlState, SchemeSpec, forward_warm_start, residuals

from conftest import random_state


def test_mass_drift_of_constant_field():
    g = Grid(8, 4)
    assert not mass_drift(np.ones(g.shape), g).any()
    rho = np.ones(g.shape)
    rho[2] += 0.5
    np.testing.assert_allclose(mass_drift(rho, g), [0, 0, 0.5, 0, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mass_drift_bounded_by_density_residual(seed):
    g = Grid(12, 5, 1.0, 0.5)
    phys = PhysicsSpec()
    spec = SchemeSpec(g)
    state = random_state(np.random.default_rng(seed), g, phys)
    drift = np.abs(mass_drift(state.rho, g))
    bound = mass_drift_bound(state, spec)
    assert bound[0] == 0 and np.all(np.diff(bound) >= 0)
    assert np.all(drift <= bound * (1 + 1e-12) + 1e-15)


def test_entropy_report_trivial_and_sign():
    g = Grid(16, 3)
    phys = PhysicsSpec()
    rep = entropy_dissipation_report(np.ones(g.shape), np.zeros(g.shape), phys, g)
    np.testing.assert_allclose(rep.entropy, 0.1)
    assert not rep.fisher.any() and not rep.balance.any() and rep.non_increasing()
    rng = np.random.default_rng(1)
    rep = entropy_dissipation_report(rng.uniform(0.5, 2, g.shape), rng.standard_normal(g.shape), phys, g)
    assert np.all(rep.fisher >= 0)


def test_entropy_report_csv(tmp_path):
    g = Grid(8, 2)
    rep = entropy_dissipation_report(np.ones(g.shape), np.zeros(g.shape), PhysicsSpec(), g)
    rep.write_csv(tmp_path / "e.csv", g)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "level,t,entropy,fisher,balance" and len(lines) == 4


class TestKKT:
    def test_primal_blocks_are_residual_norms(self, rng, small_problem):
        g, phys, spec = small_problem
        state = random_state(rng, g, phys)
        k = kkt_residuals(state, spec, phys)
        assert tuple(k) == KKT_KEYS
        r1, r2 = residuals(state, spec, phys)
        w = g.cell_weight
        assert k["r_primal_rho"] == pytest.approx(np.sqrt(w * np.sum(r1**2)), rel=1e-12)
        assert k["r_primal_m"] == pytest.approx(np.sqrt(w * np.sum(r2**2)), rel=1e-12)

    def test_stationary_point(self):
        g = Grid(32, 8, 1.0, 0.2)
        phys, spec = PhysicsSpec(), SchemeSpec(g)
        inside = (g.x > 0.25) & (g.x < 0.75)
        state = forward_warm_start(g, np.where(inside, 2.0, 1.0), np.where(inside, 1.0, 0.5), spec, phys)
        assert max(kkt_residuals(state, spec, phys).values()) <= 1e-8


class TestComparison:
    def test_identical(self):
        rng = np.random.default_rng(0)
        fine = rng.uniform(1, 2, (9, 8))
        rep = compare_trajectories(fine[::2], fine[::2], fine, fine)
        assert all(v == 0 for v in rep.to_dict().values())

    def test_constant_shift_closed_form(self):
        rng = np.random.default_rng(0)
        fine_r, fine_m = rng.uniform(1, 2, (9, 8)), rng.standard_normal((9, 8))
        eps = 1e-3
        rep = compare_trajectories(fine_r[::4] + eps, fine_m[::4] + eps, fine_r, fine_m)
        assert rep.rel_l2_rho == pytest.approx(eps * np.sqrt(8) / np.linalg.norm(fine_r[-1]))
        assert rep.rel_l2_m == pytest.approx(eps * np.sqrt(8) / np.linalg.norm(fine_m[-1]))
        assert rep.linf_rho == pytest.approx(eps) and rep.traj_linf_m == pytest.approx(eps)
        assert rep.traj_rel_l2_rho == pytest.approx(eps * np.sqrt(24) / np.linalg.norm(fine_r[::4]))
        assert json.loads(rep.to_json())["rel_l2_rho"] == rep.rel_l2_rho

    def test_incompatible(self):
        with pytest.raises(ValueError):
            restrict_in_time(np.zeros((10, 4)), 5)  # 9 steps onto 4
        with pytest.raises(ValueError):
            compare_trajectories(np.zeros((3, 4)), np.zeros((3, 4)), np.zeros((5, 5)), np.zeros((5, 5)))
        np.testing.assert_array_equal(restrict_in_time(np.arange(9.0)[:, None], 3)[:, 0], [0, 4, 8])
