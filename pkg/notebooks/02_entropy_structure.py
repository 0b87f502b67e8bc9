# %% [markdown]
# # Entropy, entropy flux and dissipation
#
# The barotropic system carries the entropy `G = m^2/(2 rho) + Q(rho)` with
# `Q'' = P'/rho`. An entropy flux exists exactly when the integrability
# condition holds; the viscous term then dissipates `G` at the rate
# `beta * I`, where `I` is the generalised Fisher information.

# %%
import numpy as np

from cnsctrl.config import load_preset
from cnsctrl.diagnostics import entropy_dissipation_report
from cnsctrl.explicit import ExplicitRunSpec, run_explicit, stable_dt
from cnsctrl.grid import Grid
from cnsctrl.physics import PressureLaw, check_entropy_flux_compatibility, fisher_information, ViscosityLaw

# %% [markdown]
# ## Compatibility on a sample grid
#
# The residual of the integrability condition is round-off for both pressure
# laws used below; a deliberately wrong Hessian shows the check has teeth.

# %%
pts = [(r, m) for r in np.linspace(0.1, 3, 10) for m in np.linspace(-2, 2, 10)]
for label, law in (("P = 0.1 rho^2", PressureLaw(0.1, 2.0)), ("P = rho^1.4", PressureLaw(1.0, 1.4))):
    print(f"{label:14s} residual {check_entropy_flux_compatibility(law, pts):.1e}")


def wrong_hessian(rho, m, law):
    return 2 * law.derivative(rho) / rho, -m / rho**2, 1 / rho


print("wrong Hessian  residual", f"{check_entropy_flux_compatibility(PressureLaw(0.1, 2.0), pts, wrong_hessian):.2f}")

# %% [markdown]
# ## Fisher information of a sine velocity
#
# With `rho = 1` and `m = sin(2 pi x)` the integral is `2 pi^2`.

# %%
g = Grid(256, 1)
print("I =", fisher_information(np.ones(256), np.sin(2 * np.pi * g.x), g, ViscosityLaw(0.0, True)), "  2 pi^2 =", 2 * np.pi**2)

# %% [markdown]
# ## Entropy decay along an explicit run
#
# Example 2 data (`beta = 0.1`, `mu = 1`). The explicit scheme is only
# stable under the parabolic step limit, so the run uses 10240 steps.

# %%
cfg = load_preset("example2a")
grid = Grid(64, 10240, 1.0, 1.0)
physics = cfg.make_physics()
rho0, m0 = cfg.initial_data(grid)
spec = ExplicitRunSpec(grid, physics, cfg.make_scheme(grid), 0.9)
print(f"dt = {grid.dt:.3e}, largest stable dt = {stable_dt(rho0, m0, spec):.3e}")
traj = run_explicit(spec, rho0, m0)
report = entropy_dissipation_report(traj.rho, traj.m, physics, grid)
for l in (0, 1024, 4096, 10240):
    print(f"t = {grid.t[l]:.3f}   G = {report.entropy[l]:.6f}   I = {report.fisher[l]:.4e}")
print("entropy non-increasing:", report.non_increasing(1e-12))
