import numpy as np
import pytest

from cnsctrl.grid import Grid
from cnsctrl.physics import PhysicsSpec, PressureLaw, RunningCostSpec, TerminalCostSpec, ViscosityLaw
from cnsctrl.scheme import ControlState, SchemeSpec


def random_state(rng, grid, physics, rho_range=(0.5, 2.0), amp=0.3):
    """Smooth random state: a few Fourier modes per field, density in range."""
    x = grid.x[None, :]
    t = grid.t[:, None] / grid.t_len

    def smooth(scale):
        out = np.zeros(grid.shape)
        for k in (1, 2, 3):
            c = rng.standard_normal(4) * scale / k
            out += (c[0] + c[1] * t) * np.sin(2 * np.pi * k * x + c[2]) + c[3] * t
        return out

    lo, hi = rho_range
    rho = (lo + hi) / 2 + (hi - lo) / 2 * np.tanh(smooth(1.0))
    state = ControlState(grid, rho, smooth(amp), smooth(amp), smooth(amp), smooth(amp))
    state.pin_terminal(physics)
    return state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem():
    grid = Grid(16, 8, 1.0, 0.5)
    physics = PhysicsSpec(
        PressureLaw(0.1, 2.0),
        ViscosityLaw(1.0),
        0.1,
        RunningCostSpec(2.0),
        TerminalCostSpec(0.1 * np.sin(4 * np.pi * grid.x)),
    )
    return grid, physics, SchemeSpec(grid, 0.5, 0.3)


ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
