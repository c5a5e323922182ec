"""Run configuration: a flat ``key = value`` text format with dotted keys.

Example::

    # predator-prey run
    model.d1 = 1.0
    ...
    domain.cells_x = 128
    solver.dt = 0.01
    solver.max_time = 50

Blank lines and ``#`` comments are ignored.  Every key must be known;
required keys that are missing are reported together.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .grid import Grid, c2alpha_norm_proxy
from .imex import State, StepControl
from .model import InitialDataNorms, ModelParams, coexistence_equilibrium
from .picard import PicardControl

PROFILES = ("constant", "cosine-bump", "equilibrium", "file")
SOLVERS = ("imex", "picard")
MODEL_KEYS = ("d1", "d2", "chi", "xi", "a1", "b1", "a2", "b2", "c1")


class ConfigError(ValueError):
    """Parse or validation failure; carries the offending key and line if known."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.key = key
        self.line = line


def _to_float(text: str) -> float:
    return float(text)


def _to_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _to_optional_float(text: str) -> Optional[float]:
    return None if text.lower() in ("none", "") else float(text)


def _to_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_float_list(text: str) -> tuple[float, ...]:
    text = text.strip().strip("[]")
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _to_str(text: str) -> str:
    return text


@dataclass(frozen=True)
class KeySpec:
    convert: Callable[[str], Any]
    default: Any = None
    required: bool = False
    help: str = ""


_REQ = dict(required=True)

KEYS: dict[str, KeySpec] = {
    **{f"model.{k}": KeySpec(_to_float, help=f"model coefficient {k}", **_REQ) for k in MODEL_KEYS},
    "domain.dim": KeySpec(_to_int, 1, help="1 or 2"),
    "domain.length_x": KeySpec(_to_float, 1.0, help="extent along x"),
    "domain.length_y": KeySpec(_to_float, 1.0, help="extent along y (2D only)"),
    "domain.cells_x": KeySpec(_to_int, help="cells along x (>= 3)", **_REQ),
    "domain.cells_y": KeySpec(_to_int, None, help="cells along y (required in 2D)"),
    "init.profile": KeySpec(_to_str, "constant", help="constant | cosine-bump | equilibrium | file"),
    "init.u0": KeySpec(_to_float, 1.0, help="base predator density"),
    "init.v0": KeySpec(_to_float, 1.0, help="base prey density"),
    "init.amplitude": KeySpec(_to_float, 0.0, help="relative cosine amplitude in [0, 1]"),
    "init.mode": KeySpec(_to_int, 1, help="cosine mode number"),
    "init.file": KeySpec(_to_str, None, help="CSV with columns x[,y],u,v in cell order"),
    "norms.alpha": KeySpec(_to_float, 0.5, help="Hölder exponent in (0, 1)"),
    "norms.u0_c2alpha": KeySpec(_to_optional_float, None, help="C^{2+alpha} bound for u0; proxy if absent"),
    "norms.v0_c2alpha": KeySpec(_to_optional_float, None, help="C^{2+alpha} bound for v0; proxy if absent"),
    "constants.schauder_p": KeySpec(_to_optional_float, None, help="optional placeholder for P"),
    "solver.kind": KeySpec(_to_str, "imex", help="imex | picard"),
    "solver.dt": KeySpec(_to_float, help="time step", **_REQ),
    "solver.max_time": KeySpec(_to_float, help="horizon T", **_REQ),
    "solver.cfl_safety": KeySpec(_to_float, 0.5, help="taxis CFL factor in (0, 1]"),
    "solver.blowup_threshold": KeySpec(_to_optional_float, None, help="sup-norm cap; 1e6*max(sigma^2, sigma) if absent"),
    "solver.max_substeps": KeySpec(_to_int, 1024, help="cap on CFL sub-cycling pieces"),
    "solver.slab_steps": KeySpec(_to_int, 1, help="steps per fixed-point slab (picard)"),
    "solver.fp_tol": KeySpec(_to_float, 1e-10, help="fixed-point tolerance (picard)"),
    "solver.fp_max_iter": KeySpec(_to_int, 50, help="fixed-point iteration cap (picard)"),
    "observers.record_stride": KeySpec(_to_int, 1, help="record norms every N steps"),
    "observers.monitor_bounds": KeySpec(_to_bool, True, help="check the sigma bounds"),
    "observers.bound_slack": KeySpec(_to_float, 0.05, help="relative slack on the sigma bounds"),
    "observers.c2_horizon": KeySpec(_to_optional_float, None, help="reported C^2 proxy horizon"),
    "output.dir": KeySpec(_to_str, None, help="output directory (overridden by --out)"),
    "output.snapshot_times": KeySpec(_to_float_list, (), help="comma-separated times in [0, max_time]"),
}


@dataclass(frozen=True)
class InitSpec:
    profile: str = "constant"
    u0: float = 1.0
    v0: float = 1.0
    amplitude: float = 0.0
    mode: int = 1
    file: Optional[str] = None


@dataclass(frozen=True)
class SolverSpec:
    kind: str
    dt: float
    max_time: float
    cfl_safety: float = 0.5
    blowup_threshold: Optional[float] = None
    max_substeps: int = 1024
    slab_steps: int = 1
    fp_tol: float = 1e-10
    fp_max_iter: int = 50


@dataclass(frozen=True)
class ObserverSpec:
    record_stride: int = 1
    monitor_bounds: bool = True
    bound_slack: float = 0.05
    c2_horizon: Optional[float] = None


@dataclass(frozen=True)
class RunSpec:
    model: ModelParams
    grid: Grid
    init: InitSpec
    solver: SolverSpec
    alpha: float = 0.5
    u0_c2alpha: Optional[float] = None
    v0_c2alpha: Optional[float] = None
    schauder_p: Optional[float] = None
    observers: ObserverSpec = field(default_factory=ObserverSpec)
    output_dir: Optional[str] = None
    snapshot_times: tuple[float, ...] = ()
    base_dir: Optional[str] = field(default=None, compare=False)

    def replace(self, **changes) -> "RunSpec":
        return dataclasses.replace(self, **changes)

    def with_solver(self, **changes) -> "RunSpec":
        return self.replace(solver=dataclasses.replace(self.solver, **changes))

    def with_model(self, **changes) -> "RunSpec":
        return self.replace(model=self.model.replace(**changes))

    def step_control(self) -> StepControl:
        s = self.solver
        common = dict(
            dt=s.dt,
            max_time=s.max_time,
            cfl_safety=s.cfl_safety,
            blowup_threshold=s.blowup_threshold,
            record_stride=self.observers.record_stride,
            max_substeps=s.max_substeps,
        )
        if s.kind == "picard":
            return PicardControl(**common, slab_steps=s.slab_steps, fp_tol=s.fp_tol, fp_max_iter=s.fp_max_iter)
        return StepControl(**common)

    def flat(self) -> dict[str, Any]:
        """Resolved key -> value mapping in the config vocabulary."""
        m, g, i, s, o = self.model, self.grid, self.init, self.solver, self.observers
        out: dict[str, Any] = {f"model.{k}": getattr(m, k) for k in MODEL_KEYS}
        out.update(
            {
                "domain.dim": g.dim,
                "domain.length_x": g.extents[0],
                "domain.cells_x": g.cells[0],
            }
        )
        if g.dim == 2:
            out["domain.length_y"] = g.extents[1]
            out["domain.cells_y"] = g.cells[1]
        out.update(
            {
                "init.profile": i.profile,
                "init.u0": i.u0,
                "init.v0": i.v0,
                "init.amplitude": i.amplitude,
                "init.mode": i.mode,
                "init.file": i.file,
                "norms.alpha": self.alpha,
                "norms.u0_c2alpha": self.u0_c2alpha,
                "norms.v0_c2alpha": self.v0_c2alpha,
                "constants.schauder_p": self.schauder_p,
                "solver.kind": s.kind,
                "solver.dt": s.dt,
                "solver.max_time": s.max_time,
                "solver.cfl_safety": s.cfl_safety,
                "solver.blowup_threshold": s.blowup_threshold,
                "solver.max_substeps": s.max_substeps,
                "solver.slab_steps": s.slab_steps,
                "solver.fp_tol": s.fp_tol,
                "solver.fp_max_iter": s.fp_max_iter,
                "observers.record_stride": o.record_stride,
                "observers.monitor_bounds": o.monitor_bounds,
                "observers.bound_slack": o.bound_slack,
                "observers.c2_horizon": o.c2_horizon,
                "output.dir": self.output_dir,
                "output.snapshot_times": list(self.snapshot_times),
            }
        )
        return out


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(spec: RunSpec) -> str:
    """Serialize ``spec``; ``parse_config`` of the result compares equal to ``spec``."""
    lines = []
    for key, value in spec.flat().items():
        if value is None or value == []:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def tokenize(text: str) -> dict[str, tuple[str, int]]:
    """Split config text into ``key -> (raw value, line number)``."""
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", line=lineno)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", key=key, line=lineno)
        entries[key] = (value, lineno)
    return entries


def _need(cond: bool, key: str, message: str, lines: dict[str, int]) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}", key=key, line=lines.get(key))


def parse_config(text: str, base_dir: Optional[str] = None) -> RunSpec:
    """Parse and validate a run configuration.

    Raises
    ------
    ConfigError
        On malformed lines, unknown or duplicate keys, missing required keys
        (all listed at once) and values that fail validation.
    """
    entries = tokenize(text)
    missing = [k for k, ks in KEYS.items() if ks.required and k not in entries]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing), key=missing[0])
    lines = {k: ln for k, (_, ln) in entries.items()}
    vals: dict[str, Any] = {}
    for key, ks in KEYS.items():
        if key not in entries:
            vals[key] = ks.default
            continue
        raw, lineno = entries[key]
        try:
            vals[key] = ks.convert(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})", key=key, line=lineno) from None
        if isinstance(vals[key], float) and not math.isfinite(vals[key]) and key != "solver.fp_tol":
            raise ConfigError(f"{key}: value must be finite", key=key, line=lineno)

    for name in MODEL_KEYS:
        key = f"model.{name}"
        positive = name in ("d1", "d2", "b1", "b2")
        ok = vals[key] > 0 if positive else vals[key] >= 0
        _need(ok, key, "must be > 0" if positive else "must be >= 0", lines)
    model = ModelParams(**{k: vals[f"model.{k}"] for k in MODEL_KEYS})

    dim = vals["domain.dim"]
    _need(dim in (1, 2), "domain.dim", "must be 1 or 2", lines)
    for axis in ("x", "y")[:dim]:
        _need(vals[f"domain.length_{axis}"] > 0, f"domain.length_{axis}", "must be > 0", lines)
        cells = vals[f"domain.cells_{axis}"]
        _need(cells is not None, f"domain.cells_{axis}", "required for this dimension", lines)
        _need(cells >= 3, f"domain.cells_{axis}", "must be >= 3", lines)
    if dim == 1:
        for key in ("domain.cells_y", "domain.length_y"):
            _need(key not in entries, key, "only valid when domain.dim = 2", lines)
        grid = Grid.interval(vals["domain.length_x"], vals["domain.cells_x"])
    else:
        grid = Grid.rectangle(vals["domain.length_x"], vals["domain.length_y"], vals["domain.cells_x"], vals["domain.cells_y"])

    profile = vals["init.profile"]
    _need(profile in PROFILES, "init.profile", f"must be one of {', '.join(PROFILES)}", lines)
    _need(vals["init.u0"] >= 0, "init.u0", "must be >= 0", lines)
    _need(vals["init.v0"] >= 0, "init.v0", "must be >= 0", lines)
    _need(0 <= vals["init.amplitude"] <= 1, "init.amplitude", "must lie in [0, 1]", lines)
    _need(vals["init.mode"] >= 0, "init.mode", "must be >= 0", lines)
    if profile == "equilibrium":
        _need(coexistence_equilibrium(model) is not None, "init.profile", "model has no coexistence equilibrium", lines)
    if profile == "file":
        _need(vals["init.file"] is not None, "init.file", "required when init.profile = file", lines)
        path = _resolve(vals["init.file"], base_dir)
        _need(path.is_file(), "init.file", f"no such file {str(path)!r}", lines)
    init = InitSpec(profile, vals["init.u0"], vals["init.v0"], vals["init.amplitude"], vals["init.mode"], vals["init.file"])

    _need(0 < vals["norms.alpha"] < 1, "norms.alpha", "must lie in (0, 1)", lines)
    for key in ("norms.u0_c2alpha", "norms.v0_c2alpha", "observers.c2_horizon"):
        _need(vals[key] is None or vals[key] >= 0, key, "must be >= 0", lines)
    for key in ("constants.schauder_p", "solver.blowup_threshold"):
        _need(vals[key] is None or vals[key] > 0, key, "must be > 0", lines)

    kind = vals["solver.kind"]
    _need(kind in SOLVERS, "solver.kind", "must be imex or picard", lines)
    _need(vals["solver.dt"] > 0, "solver.dt", "must be > 0", lines)
    _need(vals["solver.max_time"] >= 0, "solver.max_time", "must be >= 0", lines)
    _need(0 < vals["solver.cfl_safety"] <= 1, "solver.cfl_safety", "must lie in (0, 1]", lines)
    for key in ("solver.max_substeps", "solver.slab_steps", "solver.fp_max_iter", "observers.record_stride"):
        _need(vals[key] >= 1, key, "must be >= 1", lines)
    _need(vals["solver.fp_tol"] > 0, "solver.fp_tol", "must be > 0", lines)
    _need(vals["observers.bound_slack"] >= 0, "observers.bound_slack", "must be >= 0", lines)
    solver = SolverSpec(
        kind,
        vals["solver.dt"],
        vals["solver.max_time"],
        vals["solver.cfl_safety"],
        vals["solver.blowup_threshold"],
        vals["solver.max_substeps"],
        vals["solver.slab_steps"],
        vals["solver.fp_tol"],
        vals["solver.fp_max_iter"],
    )

    snaps = vals["output.snapshot_times"]
    for t in snaps:
        _need(0 <= t <= solver.max_time, "output.snapshot_times", f"time {t!r} outside [0, max_time]", lines)
    observers = ObserverSpec(
        vals["observers.record_stride"],
        vals["observers.monitor_bounds"],
        vals["observers.bound_slack"],
        vals["observers.c2_horizon"],
    )
    return RunSpec(
        model,
        grid,
        init,
        solver,
        vals["norms.alpha"],
        vals["norms.u0_c2alpha"],
        vals["norms.v0_c2alpha"],
        vals["constants.schauder_p"],
        observers,
        vals["output.dir"],
        tuple(sorted(set(snaps))),
        base_dir,
    )


def load_config(path: str | Path) -> RunSpec:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=str(path.parent))


def _resolve(name: str, base_dir: Optional[str]) -> Path:
    path = Path(name)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def read_state_csv(path: str | Path, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Read ``u`` and ``v`` columns from a snapshot-format CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    expected = grid.dim + 2
    if data.shape != (grid.size, expected):
        raise ValueError(f"{path}: expected {grid.size} rows of {expected} columns, got {data.shape}")
    return data[:, -2].reshape(grid.shape), data[:, -1].reshape(grid.shape)


def initial_state(spec: RunSpec) -> State:
    """Build the initial state described by ``spec.init``."""
    grid, init = spec.grid, spec.init
    bump = np.ones(grid.shape)
    if init.amplitude:
        wave = np.ones(grid.shape)
        for axis in range(grid.dim):
            wave = wave * np.cos(init.mode * np.pi * grid.coords[axis] / grid.extents[axis])
        bump = 1.0 + init.amplitude * wave
    if init.profile == "file":
        u, v = read_state_csv(_resolve(init.file, spec.base_dir), grid)
        return State(u, v, 0.0, grid)
    if init.profile == "equilibrium":
        us, vs = coexistence_equilibrium(spec.model)
    else:
        us, vs = init.u0, init.v0
    if init.profile == "constant":
        bump = np.ones(grid.shape)
    return State(us * bump, vs * bump, 0.0, grid)


def initial_norms(spec: RunSpec, s0: State) -> InitialDataNorms:
    """Explicit C^{2+alpha} bounds from the run configuration, else grid proxies of ``s0``."""
    nu = spec.u0_c2alpha
    nv = spec.v0_c2alpha
    if nu is None:
        nu = c2alpha_norm_proxy(s0.u, s0.grid, spec.alpha)
    if nv is None:
        nv = c2alpha_norm_proxy(s0.v, s0.grid, spec.alpha)
    return InitialDataNorms(nu, nv, spec.alpha)


def help_text() -> str:
    """One line per key with its default, for ``--help``."""
    rows = []
    for key, ks in KEYS.items():
        default = "required" if ks.required else f"default {_format_value(ks.default) if ks.default != () else 'empty'}"
        rows.append(f"  {key:<26} {ks.help} ({default})")
    return "configuration keys:\n" + "\n".join(rows)
