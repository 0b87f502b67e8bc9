# %% [markdown]
# # The primal-dual solver on an uncontrolled problem
#
# With no running or terminal cost the optimal control is zero and the
# saddle point is the implicit Lax-Friedrichs solution of the initial value
# problem. Starting from data held constant in time, the primal-dual
# iteration has to find that solution on its own. We compare it with a fine
# explicit run.

# %%
import dataclasses

import numpy as np

from cnsctrl.config import load_preset
from cnsctrl.diagnostics import compare_trajectories, kkt_residuals, mass_drift, mass_drift_bound
from cnsctrl.explicit import ExplicitRunSpec, run_explicit
from cnsctrl.pdhg import solve
from cnsctrl.scheme import ControlState

cfg = load_preset("example1")
grid, physics, spec = cfg.make_grid(), cfg.make_physics(), cfg.make_scheme()
pdhg = dataclasses.replace(cfg.make_pdhg(), log_stride=2000)
print(pdhg)

# %% [markdown]
# ## Iterate
#
# The H-norm preconditioner turns each dual update into one spectral solve
# (FFT in space, eigen-decomposition in time).

# %%
rho0, m0 = cfg.initial_data()
result = solve(ControlState.initial(grid, rho0, m0, physics), pdhg, spec, physics)
log = result.log
for k, r1, r2, lag in zip(log.column("iter"), log.column("r1_norm"), log.column("r2_norm"), log.column("L")):
    print(f"iter {int(k):6d}   |R1| {r1:.2e}   |R2| {r2:.2e}   L {lag: .6e}")
print(result.status, "after", result.iterations, "iterations")

# %% [markdown]
# ## Optimality and conservation

# %%
st = result.state
for k, v in kkt_residuals(st, spec, physics).items():
    print(f"{k:13s} {v:.2e}")
print("max |a|          :", np.abs(st.a).max())
print("max mass drift   :", np.abs(mass_drift(st.rho, grid)).max())
print("drift bound (T)  :", mass_drift_bound(st, spec)[-1])

# %% [markdown]
# ## Against the explicit scheme with 16x more steps

# %%
egrid = cfg.make_explicit_grid()
traj = run_explicit(ExplicitRunSpec(egrid, physics, cfg.make_scheme(egrid)), *cfg.initial_data(egrid))
report = compare_trajectories(st.rho, st.m, traj.rho, traj.m)
print(report.to_json())
