"""Run configuration: JSON ingestion, validation and defaults."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import expr
from .geometry import Grid
from .model import PotentialSpec, parse_potential

TOP_KEYS = {
    "beta", "potential", "domain", "observables", "q", "modes",
    "time", "tolerances", "output", "initial", "spectrum",
}
DEFAULT_N = 2001
DEFAULT_MODES = 32
DEFAULT_DT = 1e-3


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class TimeConfig:
    t_final: float = 10.0
    dt: float = DEFAULT_DT
    checkpoints: int = 101


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "band_limited"  # or "expression"
    modes: int = 8
    amplitude: float = 0.5
    expression: str | None = None


@dataclass(frozen=True)
class RunConfig:
    potential: PotentialSpec
    x_min: float
    x_max: float
    n: int = DEFAULT_N
    observables: tuple[str, ...] = ("x",)
    q: tuple[float, ...] = (0.0,)
    modes: int = DEFAULT_MODES
    time: TimeConfig = field(default_factory=TimeConfig)
    tolerances: dict = field(default_factory=dict)
    tolerance_scale: float = 1.0
    output_dir: str = "."
    initial: InitialConfig = field(default_factory=InitialConfig)
    sample_x: tuple[float, ...] = ()
    parallel: bool = False

    @property
    def beta(self) -> float:
        return self.potential.beta

    def grid(self, n: int | None = None) -> Grid:
        return Grid(self.x_min, self.x_max, self.n if n is None else n)

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default)) * self.tolerance_scale


def _number(value, path: str, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be > 0, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(path, f"must be >= 0, got {value!r}")
    return int(value) if integer else float(value)


def _mapping(value, path: str, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    extra = sorted(set(value) - allowed)
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown key")
    return value


def _potential(raw, beta: float) -> PotentialSpec:
    try:
        if isinstance(raw, str):
            return parse_potential(raw, beta)
        raw = _mapping(raw, "potential", {"kind", "mu", "coefficients", "expr"})
        kind = raw.get("kind")
        if kind == "quadratic":
            mu = _number(raw.get("mu", 1.0), "potential.mu", positive=True)
            return PotentialSpec.quadratic(mu, beta)
        if kind == "polynomial":
            coeffs = raw.get("coefficients")
            if not isinstance(coeffs, list) or not coeffs:
                raise ConfigError("potential.coefficients", "expected a nonempty list")
            return PotentialSpec.polynomial(
                [_number(c, f"potential.coefficients[{i}]") for i, c in enumerate(coeffs)], beta
            )
        if kind == "expression":
            if not isinstance(raw.get("expr"), str):
                raise ConfigError("potential.expr", "expected an expression string")
            return parse_potential(raw["expr"], beta)
        raise ConfigError("potential.kind", f"expected quadratic, polynomial or expression, got {kind!r}")
    except expr.ExpressionError as exc:
        raise ConfigError("potential", str(exc)) from exc


def from_dict(doc: dict[str, Any], *, base: dict[str, Any] | None = None) -> RunConfig:
    """Validate a config document, falling back to ``base`` for missing keys."""
    doc = {**(base or {}), **_mapping(doc, "", TOP_KEYS)}
    beta = _number(doc.get("beta", 1.0), "beta", positive=True)
    if "potential" not in doc:
        raise ConfigError("potential", "required")
    potential = _potential(doc["potential"], beta)

    dom = _mapping(doc.get("domain", {}), "domain", {"min", "max", "n"})
    if potential.kind == "quadratic":
        half = 10.0 * math.sqrt(potential.mu / beta)
        x_min = _number(dom.get("min", -half), "domain.min")
        x_max = _number(dom.get("max", half), "domain.max")
    else:
        for key in ("min", "max"):
            if key not in dom:
                raise ConfigError(f"domain.{key}", "required for non-quadratic potentials")
        x_min = _number(dom["min"], "domain.min")
        x_max = _number(dom["max"], "domain.max")
    if not x_max > x_min:
        raise ConfigError("domain.max", "must exceed domain.min")
    n = _number(dom.get("n", DEFAULT_N), "domain.n", integer=True)
    if n < 3:
        raise ConfigError("domain.n", f"need at least 3 nodes, got {n}")

    observables = doc.get("observables", ["x"])
    if not isinstance(observables, list) or not observables:
        raise ConfigError("observables", "expected a nonempty list of expressions")
    for i, text in enumerate(observables):
        if not isinstance(text, str):
            raise ConfigError(f"observables[{i}]", "expected an expression string")
        try:
            expr.parse(text)
        except expr.ExpressionError as exc:
            raise ConfigError(f"observables[{i}]", str(exc)) from exc

    q = doc.get("q", [0.0] * len(observables))
    if not isinstance(q, list):
        q = [q]
    q = tuple(_number(v, f"q[{i}]") for i, v in enumerate(q))
    if len(q) != len(observables):
        raise ConfigError("q", f"has {len(q)} components but there are {len(observables)} observables")

    modes = _number(doc.get("modes", DEFAULT_MODES), "modes", integer=True)
    if modes < 2:
        raise ConfigError("modes", f"need k >= 2, got {modes}")
    if modes > n:
        raise ConfigError("modes", f"cannot exceed domain.n = {n}")

    tm = _mapping(doc.get("time", {}), "time", {"t_final", "dt", "checkpoints"})
    time = TimeConfig(
        t_final=_number(tm.get("t_final", 10.0), "time.t_final", nonneg=True),
        dt=_number(tm.get("dt", DEFAULT_DT), "time.dt", positive=True),
        checkpoints=_number(tm.get("checkpoints", 101), "time.checkpoints", integer=True, positive=True),
    )

    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances", "expected an object of name -> tolerance")
    tolerances = {k: _number(v, f"tolerances.{k}", positive=True) for k, v in tol.items()}

    out = _mapping(doc.get("output", {}), "output", {"dir"})
    output_dir = out.get("dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError("output.dir", "expected a path string")

    ini = _mapping(doc.get("initial", {}), "initial", {"kind", "modes", "amplitude", "expr"})
    kind = ini.get("kind", "band_limited")
    if kind not in ("band_limited", "expression"):
        raise ConfigError("initial.kind", f"expected band_limited or expression, got {kind!r}")
    initial = InitialConfig(
        kind=kind,
        modes=_number(ini.get("modes", 8), "initial.modes", integer=True, positive=True),
        amplitude=_number(ini.get("amplitude", 0.5), "initial.amplitude", nonneg=True),
        expression=ini.get("expr"),
    )
    if kind == "expression":
        if not isinstance(initial.expression, str):
            raise ConfigError("initial.expr", "required for expression initial states")
        try:
            expr.parse(initial.expression)
        except expr.ExpressionError as exc:
            raise ConfigError("initial.expr", str(exc)) from exc
    if kind == "band_limited":
        if not 2 <= initial.modes <= modes:
            raise ConfigError("initial.modes", f"must lie in [2, modes = {modes}]")
        if initial.amplitude >= 1:
            raise ConfigError("initial.amplitude", "must be < 1 to keep the state positive")

    spec_section = _mapping(doc.get("spectrum", {}), "spectrum", {"sample_x"})
    sample_x = spec_section.get("sample_x", [])
    if not isinstance(sample_x, list):
        raise ConfigError("spectrum.sample_x", "expected a list of positions")
    sample_x = tuple(_number(v, f"spectrum.sample_x[{i}]") for i, v in enumerate(sample_x))

    return RunConfig(
        potential=potential,
        x_min=x_min,
        x_max=x_max,
        n=n,
        observables=tuple(observables),
        q=q,
        modes=modes,
        time=time,
        tolerances=tolerances,
        output_dir=output_dir,
        initial=initial,
        sample_x=sample_x,
    )


GAUSSIAN_PRESET: dict[str, Any] = {
    "beta": 1.0,
    "potential": {"kind": "quadratic", "mu": 1.0},
    "domain": {"n": DEFAULT_N},
    "observables": ["x"],
    "q": [0.5],
    "modes": DEFAULT_MODES,
    "time": {"t_final": 10.0, "dt": DEFAULT_DT, "checkpoints": 101},
    "spectrum": {"sample_x": [-1.0, 0.0, 1.0]},
}

PRESETS = {"gaussian": GAUSSIAN_PRESET}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}")
    return from_dict(PRESETS[name])


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(doc)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply command-line overrides, re-checking the invariants they touch."""
    kw = {k: v for k, v in kw.items() if v is not None}
    time = cfg.time
    if "t_final" in kw:
        if kw["t_final"] < 0:
            raise ConfigError("time.t_final", "must be >= 0")
        time = replace(time, t_final=float(kw.pop("t_final")))
    if "dt" in kw:
        if not kw["dt"] > 0:
            raise ConfigError("time.dt", "must be > 0")
        time = replace(time, dt=float(kw.pop("dt")))
    if "modes" in kw:
        if not 2 <= kw["modes"] <= cfg.n:
            raise ConfigError("modes", f"need 2 <= k <= {cfg.n}")
        if cfg.initial.kind == "band_limited" and cfg.initial.modes > kw["modes"]:
            # a smaller basis narrows the band of the default initial state
            kw["initial"] = replace(cfg.initial, modes=kw["modes"])
    if "q" in kw:
        kw["q"] = tuple(float(v) for v in kw["q"])
        if len(kw["q"]) != len(cfg.observables):
            raise ConfigError("q", f"needs {len(cfg.observables)} components")
    if "tolerance_scale" in kw and not kw["tolerance_scale"] > 0:
        raise ConfigError("tolerance_scale", "must be > 0")
    return replace(cfg, time=time, **kw)
