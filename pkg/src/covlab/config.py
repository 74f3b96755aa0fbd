"""Scenario configuration files.

Configs are INI files read with :mod:`configparser`::

    [scenario]
    name = shift-trace-restoration
    seed = 20240917

    [grid]
    x_max = 8
    n_points = 256

    [time]
    t_max = 2
    n_steps = 64

    [tolerances]
    trace-restoration = 1e-3

    [solver]
    method = march
    mode = trajectory

    [output]
    format = json
    path = report.json

Only ``[scenario] name`` is required; everything else falls back to the
scenario's defaults.  Keys under ``[scenario]`` other than ``name`` and
``seed`` are passed to the scenario as options.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from covlab.errors import ConfigError
from covlab.grid import ALIGN_RTOL

SCENARIOS = (
    "diffusion-gksl-match",
    "shift-trace-restoration",
    "rank-one-singular",
    "fock-identities",
    "covariance-suite",
    "reconstruction-roundtrip",
)
FORMATS = ("table", "json", "csv")
METHODS = ("march", "dyson")
MODES = ("trajectory", "reference")
DEFAULT_SEED = 20240917

# (x_max, n_points, t_max, n_steps)
_DEFAULTS = {
    "diffusion-gksl-match": (8.0, 32, 0.5, 200),
    "shift-trace-restoration": (8.0, 256, 2.0, 64),
    "rank-one-singular": (8.0, 256, 2.0, 64),
    "fock-identities": (16.0, 512, 1.0, 32),
    "covariance-suite": (16.0, 256, 0.25, 4),
    "reconstruction-roundtrip": (8.0, 256, 2.0, 64),
}

# scenarios whose time step has to be a whole number of grid cells
_SHIFT_ALIGNED = {"shift-trace-restoration", "rank-one-singular", "reconstruction-roundtrip", "covariance-suite"}


@dataclass(frozen=True)
class GridConfig:
    x_max: float
    n_points: int

    @property
    def h(self) -> float:
        return self.x_max / self.n_points


@dataclass(frozen=True)
class TimeConfig:
    t_max: float
    n_steps: int

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps


@dataclass(frozen=True)
class SolverConfig:
    method: str = "march"
    mode: str = "trajectory"
    dyson_order_cap: int = 256
    dyson_tol: float = 1e-14


@dataclass(frozen=True)
class OutputConfig:
    format: str = "table"
    path: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: GridConfig
    time: TimeConfig
    tolerances: dict[str, float] = field(default_factory=dict)
    solver: SolverConfig = SolverConfig()
    output: OutputConfig = OutputConfig()
    seed: int = DEFAULT_SEED
    options: dict[str, str] = field(default_factory=dict)

    @classmethod
    def default(cls, name: str, **overrides) -> "ScenarioConfig":
        if name not in _DEFAULTS:
            raise ConfigError(f"scenario.name: unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
        x_max, n, t_max, k = _DEFAULTS[name]
        cfg = cls(name, GridConfig(x_max, n), TimeConfig(t_max, k))
        cfg = replace(cfg, **overrides)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Raise :class:`ConfigError` listing every invalid field."""
        problems = []
        if self.name not in SCENARIOS:
            problems.append(f"scenario.name: unknown scenario {self.name!r}; choose from {', '.join(SCENARIOS)}")
        for label, v in (
            ("grid.x_max", self.grid.x_max),
            ("grid.n_points", self.grid.n_points),
            ("time.t_max", self.time.t_max),
            ("time.n_steps", self.time.n_steps),
            ("solver.dyson_order_cap", self.solver.dyson_order_cap),
            ("solver.dyson_tol", self.solver.dyson_tol),
        ):
            if not v > 0:
                problems.append(f"{label}: must be positive, got {v}")
        for k, v in self.tolerances.items():
            if not v >= 0:
                problems.append(f"tolerances.{k}: must be non-negative, got {v}")
        if self.solver.method not in METHODS:
            problems.append(f"solver.method: {self.solver.method!r} not in {METHODS}")
        if self.solver.mode not in MODES:
            problems.append(f"solver.mode: {self.solver.mode!r} not in {MODES}")
        if self.output.format not in FORMATS:
            problems.append(f"output.format: {self.output.format!r} not in {FORMATS}")
        if not problems and self.name in _SHIFT_ALIGNED:
            h, dt = self.grid.h, self.time.dt
            cells = dt / h
            if abs(cells - round(cells)) > ALIGN_RTOL * max(1.0, cells) or round(cells) < 1:
                problems.append(
                    f"time.n_steps: step {dt:g} is not a positive multiple of the grid spacing {h:g} "
                    f"(shift-based scenarios need aligned steps)"
                )
            if self.name == "rank-one-singular" and round(cells) != 1:
                problems.append(f"time.n_steps: the scalar renewal path needs step == h, got {dt:g} vs {h:g}")
        if not problems and self.name == "fock-identities":
            cells = self.time.t_max / self.grid.h
            if abs(cells - round(cells)) > ALIGN_RTOL * max(1.0, cells):
                problems.append(f"time.t_max: {self.time.t_max:g} is not a whole number of cells of width {self.grid.h:g}")
        if not problems and self.name in _SHIFT_ALIGNED | {"fock-identities"}:
            if self.time.t_max >= self.grid.x_max:
                problems.append(f"time.t_max: {self.time.t_max} leaves nothing of the grid [0, {self.grid.x_max})")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))

    def tol(self, check: str, default: float) -> float:
        return float(self.tolerances.get(check, default))

    def option(self, key: str, default: str) -> str:
        return self.options.get(key, default)

    def refined(self, factor: int) -> "ScenarioConfig":
        """Same scenario with ``h`` and the time step both divided by ``factor``."""
        return replace(
            self,
            grid=GridConfig(self.grid.x_max, self.grid.n_points * factor),
            time=TimeConfig(self.time.t_max, self.time.n_steps * factor),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output"] = {"format": self.output.format}  # the path is not part of the payload
        return d


def _get(section, key, conv, label, problems, default):
    if section is None or key not in section:
        return default
    raw = section[key]
    try:
        return conv(raw)
    except ValueError:
        problems.append(f"{label}: cannot parse {raw!r} as {conv.__name__}")
        return default


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    known = {"scenario", "grid", "time", "tolerances", "solver", "output"}
    problems = [f"[{s}]: unknown section" for s in cp.sections() if s not in known]
    if not cp.has_section("scenario") or "name" not in cp["scenario"]:
        raise ConfigError(f"{source}: scenario.name is required")
    sc = cp["scenario"]
    name = sc["name"].strip()
    if name not in _DEFAULTS:
        raise ConfigError(f"{source}: scenario.name: unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    x_max, n, t_max, k = _DEFAULTS[name]
    sec = lambda s: cp[s] if cp.has_section(s) else None  # noqa: E731
    grid = GridConfig(
        _get(sec("grid"), "x_max", float, "grid.x_max", problems, x_max),
        _get(sec("grid"), "n_points", int, "grid.n_points", problems, n),
    )
    time = TimeConfig(
        _get(sec("time"), "t_max", float, "time.t_max", problems, t_max),
        _get(sec("time"), "n_steps", int, "time.n_steps", problems, k),
    )
    tols = {}
    if cp.has_section("tolerances"):
        for key in cp["tolerances"]:
            tols[key] = _get(cp["tolerances"], key, float, f"tolerances.{key}", problems, float("nan"))
    d = SolverConfig()
    solver = SolverConfig(
        _get(sec("solver"), "method", str.strip, "solver.method", problems, d.method),
        _get(sec("solver"), "mode", str.strip, "solver.mode", problems, d.mode),
        _get(sec("solver"), "dyson_order_cap", int, "solver.dyson_order_cap", problems, d.dyson_order_cap),
        _get(sec("solver"), "dyson_tol", float, "solver.dyson_tol", problems, d.dyson_tol),
    )
    out = OutputConfig(
        _get(sec("output"), "format", str.strip, "output.format", problems, "table"),
        _get(sec("output"), "path", str.strip, "output.path", problems, None) or None,
    )
    seed = _get(sc, "seed", int, "scenario.seed", problems, DEFAULT_SEED)
    options = {key: sc[key].strip() for key in sc if key not in ("name", "seed")}
    if problems:
        raise ConfigError(f"{source}: invalid configuration:\n  " + "\n  ".join(problems))
    cfg = ScenarioConfig(name, grid, time, tols, solver, out, seed, options)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
