"""Run configuration: a flat ``key = value`` grammar with dotted sections.

Grammar
-------
One assignment per line::

    # comments start with '#', blank lines are ignored
    preset = example2b            # optional; loads a preset, later keys override it
    mode = control-solve
    grid.n_x = 64
    pdhg.psi_weights = 2, 1, 1    # comma-separated tuple
    initial.rho = gauss(offset=0.1, amplitude=0.9, width=0.1, center=0.5)
    cost.terminal = sine(amplitude=0.1, frequency=2)

Values are typed by the key: integers, floats, booleans (``true``/``false``),
bare words for enumerations, comma tuples, and profile selectors written
``kind(name=value, ...)``. A key may appear only once, and ``preset`` must be
the first assignment. Unknown keys and malformed lines are errors that carry
the line number.

Profile selectors (``x`` is the cell-centre coordinate)::

    riemann(inside, outside, left, right)   inside on (left, right), outside elsewhere
    gauss(amplitude, width, center=0.5, offset=0)
                                            offset + amplitude*exp(-((x-center)/width)**2)
    sine(amplitude, frequency, offset=0)    offset + amplitude*sin(2*pi*frequency*x)
    zero / none                             identically zero
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import Grid
from .pdhg import PdhgConfig
from .physics import PhysicsSpec, PressureLaw, RunningCostSpec, TerminalCostSpec, ViscosityLaw
from .scheme import SchemeSpec


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``line`` is set for parse errors."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


MODES = ("control-solve", "explicit-solve", "diagnose", "compare")
STARTS = ("constant", "forward", "reduced")

_SELECTOR_PARAMS = {
    "riemann": ({"inside", "outside", "left", "right"}, {}),
    "gauss": ({"amplitude", "width"}, {"center": 0.5, "offset": 0.0}),
    "sine": ({"amplitude", "frequency"}, {"offset": 0.0}),
    "zero": (set(), {}),
    "none": (set(), {}),
}


@dataclass(frozen=True)
class Profile:
    """A named 1D profile on the periodic unit cell, see the module notes."""

    kind: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _SELECTOR_PARAMS:
            raise ConfigError(f"unknown profile kind {self.kind!r}; expected one of {sorted(_SELECTOR_PARAMS)}")
        required, optional = _SELECTOR_PARAMS[self.kind]
        given = dict(self.params)
        if len(given) != len(self.params):
            raise ConfigError(f"{self.kind}: repeated parameter")
        missing = required - given.keys()
        if missing:
            raise ConfigError(f"{self.kind}: missing parameter(s) {sorted(missing)}")
        extra = given.keys() - required - optional.keys()
        if extra:
            raise ConfigError(f"{self.kind}: unknown parameter(s) {sorted(extra)}")
        full = {**optional, **{k: float(v) for k, v in given.items()}}
        if self.kind == "gauss" and not full["width"] > 0:
            raise ConfigError("gauss: width must be positive")
        if self.kind == "riemann" and not full["left"] < full["right"]:
            raise ConfigError("riemann: need left < right")
        object.__setattr__(self, "params", tuple(sorted(full.items())))

    def get(self, name: str) -> float:
        return dict(self.params)[name]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = dict(self.params)
        if self.kind == "riemann":
            inside = (x > p["left"]) & (x < p["right"])
            return np.where(inside, p["inside"], p["outside"])
        if self.kind == "gauss":
            return p["offset"] + p["amplitude"] * np.exp(-(((x - p["center"]) / p["width"]) ** 2))
        if self.kind == "sine":
            return p["offset"] + p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * x)
        return np.zeros_like(x)

    def to_text(self) -> str:
        if not self.params:
            return self.kind
        inner = ", ".join(f"{k}={_fmt_float(v)}" for k, v in self.params)
        return f"{self.kind}({inner})"


# --- schema -------------------------------------------------------------------


@dataclass(frozen=True)
class GridParams:
    n_x: int
    n_t: int
    x_len: float = 1.0
    t_len: float = 1.0


@dataclass(frozen=True)
class PhysicsParams:
    k_p: float = 0.1
    gamma: float = 2.0
    alpha: float = 0.0
    mu_const: bool = True
    beta: float = 0.1


@dataclass(frozen=True)
class SchemeParams:
    c: float = 0.5
    c_prime: float = 0.5
    control_half: bool = True


@dataclass(frozen=True)
class CostParams:
    c_f: float = 0.0
    penalize: bool = True
    terminal: Profile = field(default_factory=lambda: Profile("none"))


@dataclass(frozen=True)
class InitialParams:
    rho: Profile
    m: Profile


@dataclass(frozen=True)
class ExplicitParams:
    n_t: int = 0
    cfl_safety: float = 0.9


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI run needs.

    ``start`` chooses the PDHG initial iterate: ``"constant"`` holds the
    initial data constant in time with zero control and multipliers;
    ``"forward"`` uses the uncontrolled implicit forward solution together
    with its adjoint multipliers; ``"reduced"`` first minimises the cost over
    the control alone (L-BFGS on forward plus adjoint solves, at most
    ``start_max_iters`` iterations) and hands that KKT point to the
    primal-dual iteration. ``explicit.n_t = 0`` means "same as ``grid.n_t``".
    """

    grid: GridParams
    initial: InitialParams
    mode: str = "control-solve"
    preset: str = ""
    start: str = "constant"
    start_max_iters: int = 500
    out: str = "out"
    log_stride: int = 100
    deterministic: bool = False
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    scheme: SchemeParams = field(default_factory=SchemeParams)
    cost: CostParams = field(default_factory=CostParams)
    pdhg: PdhgConfig = field(default_factory=PdhgConfig)
    explicit: ExplicitParams = field(default_factory=ExplicitParams)

    # -- derived objects ------------------------------------------------------

    def make_grid(self) -> Grid:
        g = self.grid
        return Grid(g.n_x, g.n_t, g.x_len, g.t_len)

    def make_explicit_grid(self) -> Grid:
        g = self.grid
        return Grid(g.n_x, self.explicit.n_t or g.n_t, g.x_len, g.t_len)

    def make_physics(self) -> PhysicsSpec:
        p, c = self.physics, self.cost
        x = self.make_grid().x
        return PhysicsSpec(
            pressure=PressureLaw(p.k_p, p.gamma),
            viscosity=ViscosityLaw(p.alpha, p.mu_const),
            beta=p.beta,
            running_cost=RunningCostSpec(c.c_f, c.penalize),
            terminal_cost=TerminalCostSpec(c.terminal(x)),
        )

    def make_scheme(self, grid: Grid | None = None) -> SchemeSpec:
        s = self.scheme
        return SchemeSpec(grid or self.make_grid(), s.c, s.c_prime, s.control_half)

    def make_pdhg(self) -> PdhgConfig:
        return dataclasses.replace(self.pdhg, log_stride=self.log_stride, deterministic=self.deterministic)

    def initial_data(self, grid: Grid | None = None):
        x = (grid or self.make_grid()).x
        return self.initial.rho(x), self.initial.m(x)


# key -> (type tag, required). Sections mirror the nested dataclasses.
_PDHG_KEYS = {
    "tau": "float",
    "sigma": "float",
    "c1": "float",
    "c2": "float",
    "c3": "float",
    "psi_weights": "tuple?",
    "max_iters": "int",
    "primal_inner_steps": "int",
    "augmentation": "float",
    "residual_tol": "float",
    "rho_min": "float",
    "eps": "float",
    "time_bc": "word",
    "solver": "word",
    "cg_rtol": "float",
}

SCHEMA: dict[str, str] = {
    "mode": "word",
    "start": "word",
    "start_max_iters": "int",
    "out": "str",
    "log_stride": "int",
    "deterministic": "bool",
    "grid.n_x": "int",
    "grid.n_t": "int",
    "grid.x_len": "float",
    "grid.t_len": "float",
    "physics.k_p": "float",
    "physics.gamma": "float",
    "physics.alpha": "float",
    "physics.mu_const": "bool",
    "physics.beta": "float",
    "scheme.c": "float",
    "scheme.c_prime": "float",
    "scheme.control_half": "bool",
    "cost.c_f": "float",
    "cost.penalize": "bool",
    "cost.terminal": "profile",
    "initial.rho": "profile",
    "initial.m": "profile",
    "explicit.n_t": "int",
    "explicit.cfl_safety": "float",
    **{f"pdhg.{k}": v for k, v in _PDHG_KEYS.items()},
}
REQUIRED = ("grid.n_x", "grid.n_t", "initial.rho", "initial.m")

# (key, predicate, description of the bound)
_BOUNDS = (
    ("grid.n_x", lambda v: v >= 3, ">= 3"),
    ("grid.n_t", lambda v: v >= 1, ">= 1"),
    ("grid.x_len", lambda v: v > 0, "> 0"),
    ("grid.t_len", lambda v: v > 0, "> 0"),
    ("log_stride", lambda v: v >= 1, ">= 1"),
    ("start_max_iters", lambda v: v >= 0, ">= 0"),
    ("physics.k_p", lambda v: v > 0, "> 0"),
    ("physics.gamma", lambda v: v > 1, "> 1"),
    ("physics.alpha", lambda v: v >= 0, ">= 0"),
    ("physics.beta", lambda v: v >= 0, ">= 0"),
    ("scheme.c", lambda v: v >= 0, ">= 0"),
    ("scheme.c_prime", lambda v: v >= 0, ">= 0"),
    ("cost.c_f", lambda v: v >= 0, ">= 0"),
    ("explicit.n_t", lambda v: v >= 0, ">= 0 (0 means grid.n_t)"),
    ("explicit.cfl_safety", lambda v: 0 < v <= 1, "in (0, 1]"),
    ("pdhg.tau", lambda v: v > 0, "> 0"),
    ("pdhg.sigma", lambda v: v > 0, "> 0"),
    ("pdhg.c1", lambda v: v >= 0, ">= 0"),
    ("pdhg.c2", lambda v: v >= 0, ">= 0"),
    ("pdhg.c3", lambda v: v >= 0, ">= 0"),
    ("pdhg.max_iters", lambda v: v >= 0, ">= 0"),
    ("pdhg.primal_inner_steps", lambda v: v >= 1, ">= 1"),
    ("pdhg.augmentation", lambda v: v >= 0, ">= 0"),
    ("pdhg.rho_min", lambda v: v > 0, "> 0"),
    ("pdhg.eps", lambda v: v > 0, "> 0"),
    ("pdhg.cg_rtol", lambda v: v > 0, "> 0"),
)
_CHOICES = {
    "mode": MODES,
    "start": STARTS,
    "pdhg.time_bc": ("mixed", "neumann"),
    "pdhg.solver": ("spectral", "cg"),
}

_LINE = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.*)$")
_CALL = re.compile(r"^([a-z]+)\s*(?:\((.*)\))?$")


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _convert(key: str, raw: str, line: int | None):
    tag = SCHEMA[key]
    raw = raw.strip()
    if raw == "":
        raise ConfigError(f"{key}: empty value", line, key)
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if tag == "bool":
            if raw.lower() not in ("true", "false"):
                raise ValueError
            return raw.lower() == "true"
        if tag == "word":
            if not re.fullmatch(r"[\w-]+", raw):
                raise ValueError
            return raw
        if tag == "str":
            if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
                return raw[1:-1]
            return raw
        if tag == "tuple?":
            if raw.lower() == "none":
                return None
            return tuple(float(p) for p in raw.split(","))
        if tag == "profile":
            return _parse_profile(raw)
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc}", line, key) from None
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {tag.rstrip('?')}", line, key) from None
    raise AssertionError(tag)


def _parse_profile(raw: str) -> Profile:
    m = _CALL.match(raw)
    if not m:
        raise ConfigError(f"malformed profile {raw!r}")
    kind, body = m.group(1), m.group(2)
    params = []
    if body and body.strip():
        for part in body.split(","):
            if "=" not in part:
                raise ConfigError(f"profile arguments must be name=value, got {part.strip()!r}")
            name, value = (s.strip() for s in part.split("=", 1))
            try:
                params.append((name, float(value)))
            except ValueError:
                raise ConfigError(f"profile argument {name} is not a number: {value!r}") from None
    return Profile(kind, tuple(params))


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out).strip()


def parse_assignments(text: str) -> dict:
    """Parse text into an ordered ``{key: typed value}`` mapping (no defaults,
    no cross-field validation)."""
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line)
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        key, raw = m.group(1), m.group(2)
        if key == "preset":
            if values:
                raise ConfigError("'preset' must be the first assignment", lineno, key)
            values["preset"] = raw.strip()
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        values[key] = _convert(key, raw, lineno)
    return values


def _check_bounds(values: dict) -> None:
    for key, ok, bound in _BOUNDS:
        if key in values and values[key] is not None and not ok(values[key]):
            raise ConfigError(f"{key} = {values[key]!r} out of range: must be {bound}", key=key)
    for key, choices in _CHOICES.items():
        if key in values and values[key] not in choices:
            raise ConfigError(f"{key} = {values[key]!r}: expected one of {', '.join(choices)}", key=key)


def _build(values: dict) -> RunConfig:
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required field {key.split('.')[-1]} ({key})", key=key)
    _check_bounds(values)

    def section(prefix):
        n = len(prefix) + 1
        return {k[n:]: v for k, v in values.items() if k.startswith(prefix + ".")}

    top = {k: values[k] for k in ("mode", "start", "start_max_iters", "out", "log_stride", "deterministic", "preset") if k in values}
    try:
        pdhg = PdhgConfig(**section("pdhg"))
    except ValueError as exc:
        raise ConfigError(f"pdhg: {exc}") from None
    try:
        if pdhg.c1 + pdhg.c2 + pdhg.c3 == 0:
            raise ConfigError("pdhg.c1, c2, c3 must not all be zero", key="pdhg.c1")
        cfg = RunConfig(
            grid=GridParams(**section("grid")),
            initial=InitialParams(**section("initial")),
            physics=PhysicsParams(**section("physics")),
            scheme=SchemeParams(**section("scheme")),
            cost=CostParams(**section("cost")),
            pdhg=pdhg,
            explicit=ExplicitParams(**section("explicit")),
            **top,
        )
    except TypeError as exc:  # pragma: no cover - schema and dataclasses agree
        raise ConfigError(str(exc)) from None
    if cfg.explicit.n_t and cfg.explicit.n_t % cfg.grid.n_t:
        raise ConfigError(
            f"explicit.n_t = {cfg.explicit.n_t} must be a multiple of grid.n_t = {cfg.grid.n_t}", key="explicit.n_t"
        )
    return cfg


# --- presets -------------------------------------------------------------------

PRESET_NAMES = ("example1", "example2a", "example2b", "example3a", "example3b")


def _preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}", key="preset")
    return resources.files("cnsctrl").joinpath("presets", f"{name}.cfg").read_text()


def list_presets() -> list[tuple[str, str]]:
    """``(name, description)`` for every preset; the description is the
    preset file's leading ``# description:`` comment."""
    out = []
    for name in PRESET_NAMES:
        desc = ""
        for line in _preset_text(name).splitlines():
            if line.startswith("# description:"):
                desc = line.split(":", 1)[1].strip()
                break
        out.append((name, desc))
    return out


def parse_config(source: str | Path) -> RunConfig:
    """Parse a config file path or inline text into a validated RunConfig.

    A ``str`` containing a newline or an ``=`` is treated as inline text;
    anything else is read as a path.
    """
    if isinstance(source, Path) or ("\n" not in source and "=" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc.strerror or exc}") from None
    else:
        text = source
    values = parse_assignments(text)
    if "preset" in values:
        name = values.pop("preset")
        base = parse_assignments(_preset_text(name))
        base.pop("preset", None)
        base.update(values)
        base["preset"] = name
        values = base
    return _build(values)


def load_preset(name: str) -> RunConfig:
    return parse_config(f"preset = {name}\n")


def _value_text(key: str, value) -> str:
    tag = SCHEMA[key]
    if tag == "float":
        return _fmt_float(value)
    if tag == "bool":
        return "true" if value else "false"
    if tag == "tuple?":
        return "none" if value is None else ", ".join(_fmt_float(v) for v in value)
    if tag == "profile":
        return value.to_text()
    return str(value)


def config_items(cfg: RunConfig) -> dict:
    """Flat ``{dotted key: value}`` view of every schema key."""
    items = {}
    for key in SCHEMA:
        obj = cfg
        for part in key.split("."):
            obj = getattr(obj, part)
        items[key] = obj
    return items


def serialize(cfg: RunConfig) -> str:
    """Complete text form of ``cfg``; ``parse_config(serialize(c)) == c``.

    Every key is written explicitly, so a leading ``preset`` line only
    records provenance: all of its values are overridden.
    """
    lines = []
    if cfg.preset:
        lines.append(f"preset = {cfg.preset}")
    for key, value in config_items(cfg).items():
        lines.append(f"{key} = {_value_text(key, value)}")
    return "\n".join(lines) + "\n"


def config_echo(cfg: RunConfig) -> dict:
    """JSON-friendly echo of the configuration."""
    echo = {"preset": cfg.preset}
    for key, value in config_items(cfg).items():
        if isinstance(value, Profile):
            value = value.to_text()
        elif isinstance(value, tuple):
            value = list(value)
        echo[key] = value
    return echo


__all__ = [
    "ConfigError",
    "Profile",
    "RunConfig",
    "GridParams",
    "PhysicsParams",
    "SchemeParams",
    "CostParams",
    "InitialParams",
    "ExplicitParams",
    "PRESET_NAMES",
    "list_presets",
    "load_preset",
    "parse_config",
    "serialize",
    "config_echo",
]
