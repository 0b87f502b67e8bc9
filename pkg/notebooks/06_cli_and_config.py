# %% [markdown]
# # Configuration files and the command line
#
# Runs are described by flat `key = value` files. Presets are such files
# shipped with the package; any key can be overridden after a `preset` line.

# %%
import json
import pathlib

from cnsctrl.app import main
from cnsctrl.config import ConfigError, list_presets, parse_config, serialize

for name, desc in list_presets():
    print(f"{name:10s} {desc[:90]}")

# %% [markdown]
# ## Overrides and the complete form
#
# `serialize` writes every key explicitly; parsing it back gives the same
# configuration.

# %%
text = """
preset = example2b
grid.n_t = 16          # coarser in time
pdhg.max_iters = 200
"""
cfg = parse_config(text)
full = serialize(cfg)
print(full[:400], "...")
assert parse_config(full) == cfg

# %% [markdown]
# ## Errors name the line and the key

# %%
for bad in ("grid.n_x = 16\ngrid.nt = 4\n", "preset = example1\ngrid.n_t = 0\n"):
    try:
        parse_config(bad)
    except ConfigError as exc:
        print("ConfigError:", exc)

# %% [markdown]
# ## Running from the command line
#
# `main` is the `cnsctrl` console entry point. Exit code 0 means the solve
# converged; 3 means the iteration cap was reached (the artifacts are still
# written).

# %%
path = pathlib.Path("out/cli.cfg")
path.parent.mkdir(exist_ok=True)
path.write_text(text)
code = main(["run", "--config", str(path), "--out", "out/cli", "--deterministic"])
summary = json.loads(pathlib.Path("out/cli/summary.json").read_text())
print("exit code", code, "| status", summary["status"], "| files", sorted(p.name for p in pathlib.Path("out/cli").iterdir()))
