import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnsctrl.grid import Grid, d_center
from cnsctrl.physics import DomainError, PhysicsSpec, PressureLaw, TerminalCostSpec, ViscosityLaw
from cnsctrl.scheme import (
    reduced_warm_start,
    ControlState,
    SchemeSpec,
    assemble_control_from_dual,
    discrete_lagrangian,
    forward_warm_start,
    grad_lagrangian,
    level_jacobian,
    level_residuals,
    residual_density,
    residual_momentum,
    residuals,
    solve_implicit_forward,
)

from conftest import random_state

HAND = Grid(4, 1, 1.0, 0.1)  # dx = 0.25, dt = 0.1
HAND_PHYS = PhysicsSpec(PressureLaw(0.1, 2.0), ViscosityLaw(0.0, True), 0.1)


def hand_state(rho1=(1, 2, 1, 0.5)):
    st = ControlState(HAND, np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((2, 4)))
    st.rho[0] = 1.0
    st.rho[1] = rho1
    st.m[1] = [0, 1, 0, -1]
    st.a[1] = [1, 0, -1, 0]
    return st


def loop_residuals(st, c, c_prime, k_p, beta):
    """Node-by-node transcription of the implicit scheme with mu = 1."""
    n, dx, dt = 4, HAND.dx, HAND.dt
    r, m, a = st.rho[1], st.m[1], st.a[1]
    r0, m0 = st.rho[0], st.m[0]
    out1, out2 = [], []
    for i in range(n):
        ip, im = (i + 1) % n, (i - 1) % n
        out1.append((r[i] - r0[i]) / dt + (m[ip] - m[im]) / (2 * dx) - c * dx * (r[ip] - 2 * r[i] + r[im]) / dx**2)
        flux = lambda j: m[j] ** 2 / r[j] + k_p * r[j] ** 2 + a[j]
        v = lambda j: m[j] / r[j]
        out2.append(
            (m[i] - m0[i]) / dt
            + (flux(ip) - flux(im)) / (2 * dx)
            - beta * (v(ip) - 2 * v(i) + v(im)) / dx**2
            - c_prime * dx * (m[ip] - 2 * m[i] + m[im]) / dx**2
        )
    return np.array(out1), np.array(out2)


class TestResiduals:
    def test_density_hand_values(self):
        st = hand_state(rho1=(1, 2, 1, 0))  # R1 needs no positivity
        # (rho1-rho0)/dt = [0,10,0,-10]; Dc m = [4,0,-4,0]; -0.125 Lap rho = [0,4,0,-4]
        np.testing.assert_allclose(residual_density(st, SchemeSpec(HAND, 0.5, 0.5))[0], [4, 14, -4, -14])

    def test_momentum_matches_loop_transcription(self):
        st = hand_state()
        spec = SchemeSpec(HAND, 0.5, 0.5)
        r1, r2 = loop_residuals(st, 0.5, 0.5, 0.1, 0.1)
        np.testing.assert_allclose(residual_density(st, spec)[0], r1, rtol=1e-13)
        np.testing.assert_allclose(residual_momentum(st, spec, HAND_PHYS)[0], r2, rtol=1e-13)

    def test_trivial_states(self):
        g = Grid(8, 3)
        st = ControlState.initial(g, np.full(8, 1.3), np.full(8, 0.4))
        r1, r2 = residuals(st, SchemeSpec(g), PhysicsSpec())
        assert not r1.any() and not r2.any()

    def test_residual_of_known_function(self):
        g = Grid(128, 2)
        st = ControlState.initial(g, np.ones(128), np.sin(2 * np.pi * g.x))
        r1 = residual_density(st, SchemeSpec(g, c=0.0))
        assert np.max(np.abs(r1 - 2 * np.pi * np.cos(2 * np.pi * g.x))) < 2 * (2 * np.pi) ** 3 / 6 / 128**2

    def test_density_positivity_required(self):
        with pytest.raises(DomainError):
            residuals(hand_state(rho1=(1, 2, 1, 0)), SchemeSpec(HAND), HAND_PHYS)

    def test_mass_telescoping(self, rng, small_problem):
        g, phys, spec = small_problem
        st = random_state(rng, g, phys)
        r1 = residual_density(st, spec)
        np.testing.assert_allclose(r1.sum(axis=1), (st.rho[1:] - st.rho[:-1]).sum(axis=1) / g.dt, atol=1e-10)

    def test_control_term_is_centred_difference_of_product(self, rng, small_problem):
        g, phys, spec = small_problem
        st = random_state(rng, g, phys)
        base = residual_momentum(st, spec, phys)
        st2 = st.copy()
        st2.a[:] = 0
        diff = base - residual_momentum(st2, spec, phys)
        np.testing.assert_allclose(diff, d_center(phys.viscosity(st.rho[1:]) * st.a[1:], g.dx), atol=1e-12)


class TestLagrangian:
    def test_trivial_values(self):
        g = Grid(8, 2)
        st = ControlState.initial(g, np.ones(8), np.zeros(8))
        spec, phys = SchemeSpec(g), PhysicsSpec()
        assert discrete_lagrangian(st, spec, phys) == 0.0
        st.a[1:] = np.arange(16.0).reshape(2, 8) / 10
        expect = g.cell_weight * 0.5 * np.sum(st.a[1:] ** 2)
        assert discrete_lagrangian(st, spec, phys) == pytest.approx(expect)
        assert discrete_lagrangian(st, SchemeSpec(g, control_half=False), phys) == pytest.approx(2 * expect)

    def test_hand_composition(self):
        st = hand_state()
        st.phi[0] = [1, 0, -1, 0]
        st.psi[0] = [1, 0, -1, 0]
        r1, r2 = loop_residuals(st, 0.5, 0.5, 0.1, 0.1)
        w = HAND.dx * HAND.dt
        expect = w * (0.5 * np.sum(st.a[1] ** 2) + st.phi[0] @ r1 + st.psi[0] @ r2)
        assert discrete_lagrangian(st, SchemeSpec(HAND, 0.5, 0.5), HAND_PHYS) == pytest.approx(expect, rel=1e-13)

    def test_multiplier_linearity(self, rng, small_problem):
        g, phys, spec = small_problem
        st = random_state(rng, g, phys)
        dphi = rng.standard_normal(g.shape)
        dphi[-1] = 0
        r1, _ = residuals(st, spec, phys)
        st2 = st.copy()
        st2.phi += dphi
        delta = discrete_lagrangian(st2, spec, phys) - discrete_lagrangian(st, spec, phys)
        assert delta == pytest.approx(g.cell_weight * np.sum(dphi[:-1] * r1), rel=1e-9)


def fd_check(state, spec, phys, h=1e-6):
    grad = grad_lagrangian(state, spec, phys)
    worst = 0.0
    levels = {"rho": range(1, state.grid.n_t + 1), "m": range(1, state.grid.n_t + 1), "a": range(1, state.grid.n_t + 1)}
    levels["phi"] = levels["psi"] = range(0, state.grid.n_t)
    for name, lv in levels.items():
        exact = getattr(grad, name)[list(lv)]
        fd = np.zeros_like(exact)
        for j, l in enumerate(lv):
            for i in range(state.grid.n_x):
                arr = getattr(state, name)
                old = arr[l, i]
                arr[l, i] = old + h
                lp = discrete_lagrangian(state, spec, phys)
                arr[l, i] = old - h
                lm = discrete_lagrangian(state, spec, phys)
                arr[l, i] = old
                fd[j, i] = (lp - lm) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-300))
    return worst


class TestGradient:
    def test_zero_multipliers_leave_control_energy_and_terminal_cost(self, rng, small_problem):
        g, phys, spec = small_problem
        phys = PhysicsSpec(phys.pressure, phys.viscosity, phys.beta, terminal_cost=phys.terminal_cost)
        st = random_state(rng, g, phys)
        st.phi[:] = 0
        st.psi[:] = 0
        grad = grad_lagrangian(st, spec, phys)
        w = g.cell_weight
        expect = w * 0.5 * st.a[1:] ** 2 * phys.viscosity.derivative(st.rho[1:])
        expect[-1] += g.dx * phys.terminal_cost.g
        np.testing.assert_allclose(grad.rho[1:], expect, atol=1e-15)
        np.testing.assert_allclose(grad.a[1:], w * st.a[1:] * phys.viscosity(st.rho[1:]), atol=1e-15)

    def test_dual_blocks_are_weighted_residuals(self, rng, small_problem):
        g, phys, spec = small_problem
        st = random_state(rng, g, phys)
        grad = grad_lagrangian(st, spec, phys)
        r1, r2 = residuals(st, spec, phys)
        np.testing.assert_array_equal(grad.phi[:-1], g.cell_weight * r1)
        np.testing.assert_array_equal(grad.psi[:-1], g.cell_weight * r2)
        assert not grad.phi[-1].any() and not grad.rho[0].any() and not grad.a[0].any()

    @pytest.mark.parametrize("alpha,c_prime", [(0.0, 0.5), (1.0, 0.0), (1.5, 0.2)])
    def test_matches_finite_differences(self, rng, alpha, c_prime):
        g = Grid(8, 3, 1.0, 0.3)
        phys = PhysicsSpec(
            PressureLaw(0.1, 2.0), ViscosityLaw(alpha), 0.1, terminal_cost=TerminalCostSpec(np.cos(2 * np.pi * g.x))
        )
        st = random_state(rng, g, phys)
        assert fd_check(st, SchemeSpec(g, 0.4, c_prime), phys) <= 1e-6

    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.booleans())
    def test_finite_differences_property(self, seed, half):
        g = Grid(6, 2, 1.0, 0.2)
        phys = PhysicsSpec(PressureLaw(0.5, 1.4), ViscosityLaw(0.7), 0.2)
        st = random_state(np.random.default_rng(seed), g, phys)
        assert fd_check(st, SchemeSpec(g, 0.3, 0.6, control_half=half), phys) <= 1e-6


class TestForwardSolve:
    def setup_method(self):
        self.g = Grid(32, 8, 1.0, 0.4)
        self.phys = PhysicsSpec(PressureLaw(0.1, 2.0), ViscosityLaw(1.0), 0.1)
        self.spec = SchemeSpec(self.g, 0.5, 0.5)
        x = self.g.x
        self.rho0 = 1 + 0.5 * np.exp(-50 * (x - 0.5) ** 2)
        self.m0 = 0.2 * np.sin(2 * np.pi * x)

    def test_residuals_vanish(self):
        rho, m = solve_implicit_forward(self.g, self.rho0, self.m0, self.spec, self.phys)
        st = ControlState(self.g, rho, m, self.g.zeros(), self.g.zeros(), self.g.zeros())
        r1, r2 = residuals(st, self.spec, self.phys)
        assert np.max(np.abs(r1)) < 1e-10 and np.max(np.abs(r2)) < 1e-10

    def test_level_jacobian_matches_finite_differences(self, rng):
        n = self.g.n_x
        r = self.rho0 * (1 + 0.1 * rng.standard_normal(n))
        q = self.m0 + 0.1 * rng.standard_normal(n)
        a = 0.3 * rng.standard_normal(n)
        args = (self.g.dt, self.g.dx, self.spec, self.phys)
        jac = level_jacobian(r, q, a, *args)
        h = 1e-6
        fd = np.zeros((2 * n, 2 * n))
        for j in range(2 * n):
            e = np.zeros(2 * n)
            e[j] = h
            plus = np.concatenate(level_residuals(self.rho0, self.m0, r + e[:n], q + e[n:], a, *args))
            minus = np.concatenate(level_residuals(self.rho0, self.m0, r - e[:n], q - e[n:], a, *args))
            fd[:, j] = (plus - minus) / (2 * h)
        np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-5)

    def test_uncontrolled_solution_is_stationary(self):
        st = forward_warm_start(self.g, self.rho0, self.m0, self.spec, self.phys)
        assert np.max(np.abs(st.phi)) == 0 and np.max(np.abs(st.psi)) == 0
        grad = grad_lagrangian(st, self.spec, self.phys)
        for block in (grad.rho, grad.m, grad.a, grad.phi, grad.psi):
            assert np.max(np.abs(block)) < 1e-12

    def test_adjoint_zeroes_state_gradients(self, rng):
        phys = PhysicsSpec(
            self.phys.pressure, self.phys.viscosity, 0.1, terminal_cost=TerminalCostSpec(0.1 * np.sin(4 * np.pi * self.g.x))
        )
        a = 0.2 * rng.standard_normal(self.g.shape)
        st = forward_warm_start(self.g, self.rho0, self.m0, self.spec, phys, a=a)
        grad = grad_lagrangian(st, self.spec, phys)
        scale = np.max(np.abs(grad.a))
        assert scale > 1e-6
        assert np.max(np.abs(grad.rho[1:])) < 1e-10 * max(scale, 1)
        assert np.max(np.abs(grad.m[1:])) < 1e-10 * max(scale, 1)


class TestReducedStart:
    def test_returns_kkt_point_and_local_minimum(self, rng, small_problem):
        g, phys, spec = small_problem
        rho0, m0 = 1 + 0.5 * np.sin(2 * np.pi * g.x), 0.2 * np.cos(2 * np.pi * g.x)
        st, info = reduced_warm_start(g, rho0, m0, spec, phys)
        grad = grad_lagrangian(st, spec, phys)
        w = g.cell_weight
        for name in ("rho", "m", "a"):
            assert np.max(np.abs(getattr(grad, name)[1:])) / w < 1e-7, name
        r1, r2 = residuals(st, spec, phys)
        assert max(np.max(np.abs(r1)), np.max(np.abs(r2))) < 1e-10
        assert info.control_residual < 1e-7
        assert info.objective == pytest.approx(discrete_lagrangian(st, spec, phys))
        for _ in range(3):
            a = st.a + 1e-3 * rng.standard_normal(g.shape)
            other = forward_warm_start(g, rho0, m0, spec, phys, a=a)
            assert discrete_lagrangian(other, spec, phys) > info.objective

    def test_zero_iterations_is_forward_start(self, small_problem):
        g, phys, spec = small_problem
        rho0, m0 = np.ones(g.n_x), np.zeros(g.n_x)
        st, info = reduced_warm_start(g, rho0, m0, spec, phys, max_iters=0)
        ref = forward_warm_start(g, rho0, m0, spec, phys)
        assert info.iterations == 0
        np.testing.assert_allclose(st.rho, ref.rho)
        np.testing.assert_allclose(st.psi, ref.psi)


class TestState:
    def test_initial_pins_terminal(self):
        g = Grid(8, 2)
        phys = PhysicsSpec(terminal_cost=TerminalCostSpec(np.arange(8.0)))
        st = ControlState.initial(g, np.ones(8), np.zeros(8), phys)
        np.testing.assert_array_equal(st.phi[-1], -np.arange(8.0))
        np.testing.assert_array_equal(st.rho0, np.ones(8))

    def test_shape_checked(self):
        g = Grid(8, 2)
        with pytest.raises(ValueError):
            ControlState(g, np.ones((2, 8)), g.zeros(), g.zeros(), g.zeros(), g.zeros())

    def test_copy_is_deep(self):
        g = Grid(8, 2)
        st = ControlState.initial(g, np.ones(8), np.zeros(8))
        cp = st.copy()
        cp.rho[1] = 5
        assert st.rho[1, 0] == 1

    def test_control_from_dual(self):
        g = Grid(128, 2)
        assert not assemble_control_from_dual(np.full(g.shape, 3.0), g).any()
        psi = np.tile(np.sin(2 * np.pi * g.x), (3, 1))
        a = assemble_control_from_dual(psi, g)
        assert np.max(np.abs(a - 2 * np.pi * np.cos(2 * np.pi * g.x))) < 1e-2
