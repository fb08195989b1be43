"""Experiment configuration: a sectioned key-value text file with unit suffixes.

Grammar (INI-like, parsed with :mod:`configparser`)::

    [system]      preset = rb87 | dimensionless    or    mass = 87 u | 1.44e-25 kg
    [trajectory]  kind = sqrt | linear | sqrt, linear
                  L0, Lf = <number> [m | mm | um | nm]
                  tf     = <number> [s | ms | us]
                  t_end  = <time>            (optional, >= tf, wall held at Lf)
    [evolver]     initial_level = 1 | 1, 2, 3     or    tg_particles = 5
                  n_max, max_levels, samples, population_columns, method,
                  rel_tol, abs_tol, convergence_tol
    [classical]   distribution = uniform | fixed
                  v_low, v_high = <number> [m/s | mm/s | um/s | vmin]
                  particles, seed, x0, stop_threshold
    [sweep]       tf_values = <time>, <time>, ...
                  or  tf_start, tf_stop, tf_points, spacing = log | linear
    [diagnostics] cooling_epsilon, adiabaticity_threshold, target_fraction
    [oracle]      grid_points, grid_steps, tolerance, samples
    [output]      prefix, dimensionless = true | false

Bare numbers are in SI base units for physical systems and in the
hbar = m = L0 = 1 units for the dimensionless preset, where suffixes are
rejected.  Lines starting with ``#`` or ``;`` are comments.  Every
violation in a file is collected before :class:`ConfigError` is raised.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .trajectory import Trajectory, TrajectoryKind
from .units import ATOMIC_MASS, HBAR, PRESETS, PhysicalSystem

LENGTH_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
VELOCITY_UNITS = {"m/s": 1.0, "mm/s": 1e-3, "um/s": 1e-6}
MASS_UNITS = {"kg": 1.0, "u": ATOMIC_MASS}

ALLOWED_KEYS = {
    "system": {"preset", "mass", "label"},
    "trajectory": {"kind", "l0", "lf", "tf", "t_end"},
    "evolver": {"initial_level", "tg_particles", "n_max", "max_levels", "samples",
                "population_columns", "method", "rel_tol", "abs_tol", "convergence_tol"},
    "classical": {"distribution", "v_low", "v_high", "particles", "seed", "x0",
                  "stop_threshold"},
    "sweep": {"tf_values", "tf_start", "tf_stop", "tf_points", "spacing"},
    "diagnostics": {"cooling_epsilon", "adiabaticity_threshold", "target_fraction"},
    "oracle": {"grid_points", "grid_steps", "tolerance", "samples"},
    "output": {"prefix", "dimensionless"},
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")


class ConfigError(ValueError):
    """Raised with every problem found in a configuration."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ClassicalSpec:
    distribution: str
    v_low: float
    v_high: Optional[float]
    particles: int
    seed: int
    x0: float = 0.0
    stop_threshold: float = 0.1


@dataclass(frozen=True)
class OracleSpec:
    grid_points: int = 2000
    grid_steps: int = 2000
    tolerance: float = 1e-3
    samples: int = 11


@dataclass
class ExperimentConfig:
    system: PhysicalSystem
    kinds: Tuple[TrajectoryKind, ...]
    L0: float
    Lf: float
    tf: float
    t_end: Optional[float] = None
    initial_levels: Tuple[int, ...] = ()
    tg_particles: Optional[int] = None
    classical: Optional[ClassicalSpec] = None
    n_max: int = 64
    max_levels: int = 512
    samples: int = 201
    population_columns: int = 10
    method: str = "magnus"
    rel_tol: float = 1e-7
    abs_tol: float = 1e-9
    convergence_tol: float = 1e-3
    sweep_tf: Optional[Tuple[float, ...]] = None
    cooling_epsilon: float = 0.05
    adiabaticity_threshold: float = 0.1
    target_fraction: float = 0.01
    oracle: OracleSpec = field(default_factory=OracleSpec)
    prefix: str = "run"
    dimensionless: bool = False
    source: Optional[str] = None
    sha256: Optional[str] = None

    @property
    def engine(self) -> str:
        if self.tg_particles is not None:
            return "tg"
        if self.classical is not None:
            return "classical"
        return "single"

    def trajectory(self, kind: TrajectoryKind, tf: Optional[float] = None) -> Trajectory:
        tf = self.tf if tf is None else tf
        if kind is TrajectoryKind.LINEAR:
            return Trajectory.linear(self.L0, self.Lf, tf)
        return Trajectory.square_root(self.L0, self.Lf, tf)

    def trajectories(self) -> List[Trajectory]:
        return [self.trajectory(k) for k in self.kinds]


class _Reader:
    """Typed access to a parsed file, accumulating problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser, dimensionless: bool):
        self.parser = parser
        self.dimensionless = dimensionless
        self.problems: List[str] = []

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.parser.has_option(section, key):
            return default
        return self.parser.get(section, key).strip()

    def require(self, section, key):
        if not self.parser.has_option(section, key):
            self.problems.append(f"[{section}] missing required key '{key}'")
            return None
        return self.parser.get(section, key).strip()

    def quantity(self, section, key, units, text=None, extra=None, required=False, default=None):
        text = self.require(section, key) if required else (text if text is not None else self.raw(section, key))
        if text is None:
            return default
        m = _QUANTITY.match(text)
        if not m:
            self.problems.append(f"[{section}] {key}: cannot parse quantity {text!r}")
            return None
        value, suffix = float(m.group(1)), m.group(2)
        if not suffix:
            return value
        if extra and suffix in extra:
            return value * extra[suffix]
        if self.dimensionless:
            self.problems.append(f"[{section}] {key}: unit suffix {suffix!r} not allowed "
                                 "with the dimensionless preset")
            return None
        if suffix not in units:
            self.problems.append(f"[{section}] {key}: unknown unit suffix {suffix!r} "
                                 f"(expected one of {', '.join(sorted(units))})")
            return None
        return value * units[suffix]

    def integer(self, section, key, default=None, minimum=None):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            value = int(text)
        except ValueError:
            self.problems.append(f"[{section}] {key}: expected an integer, got {text!r}")
            return default
        if minimum is not None and value < minimum:
            self.problems.append(f"[{section}] {key} must be >= {minimum} (got {value})")
        return value

    def integers(self, section, key):
        text = self.raw(section, key)
        if text is None:
            return None
        try:
            return tuple(int(part) for part in text.split(","))
        except ValueError:
            self.problems.append(f"[{section}] {key}: expected comma-separated integers, got {text!r}")
            return ()

    def positive(self, section, key, value):
        if value is not None and not (value > 0 and math.isfinite(value)):
            self.problems.append(f"[{section}] {key} must be positive (got {value!r})")

    def boolean(self, section, key, default=False):
        if not self.parser.has_option(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.problems.append(f"[{section}] {key}: expected true/false")
            return default


def _system(r: _Reader) -> Optional[PhysicalSystem]:
    preset = r.raw("system", "preset")
    mass_text = r.raw("system", "mass")
    if preset is not None and mass_text is not None:
        r.problems.append("[system] give either 'preset' or 'mass', not both")
        return None
    if preset is not None:
        key = preset.lower().replace("-", "")
        if key not in PRESETS:
            r.problems.append(f"[system] unknown preset {preset!r} (known: {', '.join(sorted(PRESETS))})")
            return None
        return PRESETS[key]()
    if mass_text is None:
        r.problems.append("[system] missing required key 'preset' or 'mass'")
        return None
    saved = r.dimensionless
    r.dimensionless = False
    mass = r.quantity("system", "mass", MASS_UNITS)
    r.dimensionless = saved
    r.positive("system", "mass", mass)
    if mass is None or not mass > 0:
        return None
    return PhysicalSystem(mass=mass, hbar=HBAR, species_label=r.raw("system", "label", "custom"))


def _sweep(r: _Reader) -> Optional[Tuple[float, ...]]:
    if not r.parser.has_section("sweep"):
        return None
    listed = r.raw("sweep", "tf_values")
    ranged = [r.has("sweep", k) for k in ("tf_start", "tf_stop", "tf_points")]
    if listed is not None and any(ranged):
        r.problems.append("[sweep] give either tf_values or tf_start/tf_stop/tf_points")
        return None
    if listed is not None:
        values = [r.quantity("sweep", "tf_values", TIME_UNITS, text=part) for part in listed.split(",")]
        if any(v is None for v in values):
            return None
    else:
        if not all(ranged):
            r.problems.append("[sweep] needs tf_values or all of tf_start, tf_stop, tf_points")
            return None
        start = r.quantity("sweep", "tf_start", TIME_UNITS)
        stop = r.quantity("sweep", "tf_stop", TIME_UNITS)
        points = r.integer("sweep", "tf_points", minimum=1)
        spacing = r.raw("sweep", "spacing", "log").lower()
        if None in (start, stop, points) or points < 1:
            return None
        if not (0 < start <= stop):
            r.problems.append("[sweep] need 0 < tf_start <= tf_stop")
            return None
        if spacing == "log":
            values = list(np.geomspace(start, stop, points))
        elif spacing == "linear":
            values = list(np.linspace(start, stop, points))
        else:
            r.problems.append(f"[sweep] spacing must be 'log' or 'linear' (got {spacing!r})")
            return None
    for v in values:
        r.positive("sweep", "tf", v)
    return tuple(sorted(float(v) for v in values))


def _classical(r: _Reader, v_min: Optional[float]) -> Optional[ClassicalSpec]:
    if not r.parser.has_section("classical"):
        return None
    dist = (r.require("classical", "distribution") or "").lower()
    extra = {"vmin": v_min} if v_min else None
    v_low = r.quantity("classical", "v_low", VELOCITY_UNITS, extra=extra, required=True)
    v_high = r.quantity("classical", "v_high", VELOCITY_UNITS, extra=extra)
    r.positive("classical", "v_low", v_low)
    if dist not in ("uniform", "fixed"):
        r.problems.append(f"[classical] distribution must be 'uniform' or 'fixed' (got {dist!r})")
    elif dist == "uniform":
        if v_high is None:
            r.problems.append("[classical] uniform distribution needs v_high")
        elif v_low is not None and v_high < v_low:
            r.problems.append("[classical] v_high must not be below v_low")
    particles = r.integer("classical", "particles", default=1, minimum=1)
    seed = r.integer("classical", "seed", default=0, minimum=0)
    x0 = r.quantity("classical", "x0", LENGTH_UNITS, default=0.0)
    if x0 is not None and x0 < 0:
        r.problems.append("[classical] x0 must be non-negative")
    threshold = r.quantity("classical", "stop_threshold", {}, default=0.1)
    r.positive("classical", "stop_threshold", threshold)
    if None in (v_low, particles, seed, x0, threshold):
        return None
    return ClassicalSpec(dist, v_low, v_high, particles, seed, x0, threshold)


def parse_config_text(text: str, source: Optional[str] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None

    problems = []
    for section in parser.sections():
        if section not in ALLOWED_KEYS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in ALLOWED_KEYS[section]:
                problems.append(f"[{section}] unknown key '{key}'")
    for section in ("system", "trajectory"):
        if not parser.has_section(section):
            problems.append(f"missing section [{section}]")
    if problems and any(p.startswith("missing section") for p in problems):
        raise ConfigError(problems)

    preset = parser.get("system", "preset", fallback="").strip().lower()
    r = _Reader(parser, dimensionless=preset == "dimensionless")
    r.problems.extend(problems)
    system = _system(r)

    kinds_text = r.require("trajectory", "kind") or ""
    kinds = []
    for part in filter(None, (p.strip() for p in kinds_text.split(","))):
        try:
            kind = TrajectoryKind.parse(part)
        except ValueError as exc:
            r.problems.append(f"[trajectory] kind: {exc}")
            continue
        if kind is TrajectoryKind.CUSTOM:
            r.problems.append("[trajectory] kind: custom trajectories are available from Python only")
        elif kind not in kinds:
            kinds.append(kind)
    if kinds_text and not kinds and not any("kind" in p for p in r.problems):
        r.problems.append("[trajectory] kind is empty")

    L0 = r.quantity("trajectory", "l0", LENGTH_UNITS, required=True)
    Lf = r.quantity("trajectory", "lf", LENGTH_UNITS, required=True)
    tf = r.quantity("trajectory", "tf", TIME_UNITS, required=True)
    t_end = r.quantity("trajectory", "t_end", TIME_UNITS)
    for key, value in (("L0", L0), ("Lf", Lf), ("tf", tf)):
        r.positive("trajectory", key, value)
    if L0 is not None and Lf is not None and Lf < L0:
        r.problems.append(f"[trajectory] Lf must not be below L0 (L0={L0!r}, Lf={Lf!r})")
    if t_end is not None and tf is not None and t_end < tf:
        r.problems.append("[trajectory] t_end must not precede tf")

    levels = r.integers("evolver", "initial_level")
    tg = r.integer("evolver", "tg_particles", minimum=1)
    v_min = Lf / tf if (Lf and tf and Lf > 0 and tf > 0) else None
    classical = _classical(r, v_min)
    selected = [name for name, on in (("initial_level", levels is not None),
                                      ("tg_particles", tg is not None),
                                      ("classical", parser.has_section("classical"))) if on]
    if len(selected) != 1:
        what = ", ".join(selected) if selected else "none"
        r.problems.append("exactly one of [evolver] initial_level, [evolver] tg_particles or a "
                          f"[classical] section selects the engine (found: {what})")

    n_max = r.integer("evolver", "n_max", 64, minimum=2)
    max_levels = r.integer("evolver", "max_levels", max(512, n_max or 0), minimum=2)
    if n_max is not None and max_levels is not None and max_levels < n_max:
        r.problems.append("[evolver] max_levels must be at least n_max")
    for level in levels or ():
        if not 1 <= level <= (n_max or 0):
            r.problems.append(f"[evolver] initial_level {level} outside [1, n_max]")
    if tg is not None and n_max is not None and tg > n_max:
        r.problems.append("[evolver] tg_particles must not exceed n_max")
    method = (r.raw("evolver", "method", "magnus") or "magnus").lower()
    if method not in ("magnus", "rk"):
        r.problems.append(f"[evolver] method must be 'magnus' or 'rk' (got {method!r})")
    tolerances = {}
    for key, default in (("rel_tol", 1e-7), ("abs_tol", 1e-9), ("convergence_tol", 1e-3)):
        tolerances[key] = r.quantity("evolver", key, {}, default=default)
        r.positive("evolver", key, tolerances[key])

    diag = {}
    for key, default in (("cooling_epsilon", 0.05), ("adiabaticity_threshold", 0.1),
                         ("target_fraction", 0.01)):
        diag[key] = r.quantity("diagnostics", key, {}, default=default)
        r.positive("diagnostics", key, diag[key])
    if diag["cooling_epsilon"] is not None and diag["cooling_epsilon"] >= 1:
        r.problems.append("[diagnostics] cooling_epsilon must be below 1")

    tol = r.quantity("oracle", "tolerance", {}, default=1e-3)
    r.positive("oracle", "tolerance", tol)
    oracle = OracleSpec(grid_points=r.integer("oracle", "grid_points", 2000, minimum=16),
                        grid_steps=r.integer("oracle", "grid_steps", 2000, minimum=1),
                        tolerance=tol or 1e-3,
                        samples=r.integer("oracle", "samples", 11, minimum=2))

    sweep = _sweep(r)
    samples = r.integer("evolver", "samples", 201, minimum=2)
    columns = r.integer("evolver", "population_columns", 10, minimum=1)
    prefix = r.raw("output", "prefix", "run")
    if prefix is not None and not re.fullmatch(r"[A-Za-z0-9_.-]+", prefix):
        r.problems.append(f"[output] prefix {prefix!r} must be a plain file stem")
    dimensionless = r.boolean("output", "dimensionless", False)

    if r.problems:
        raise ConfigError(r.problems)
    return ExperimentConfig(
        system=system, kinds=tuple(kinds), L0=L0, Lf=Lf, tf=tf, t_end=t_end,
        initial_levels=tuple(levels or ()), tg_particles=tg, classical=classical,
        n_max=n_max, max_levels=max_levels, samples=samples, population_columns=columns,
        method=method, sweep_tf=sweep, cooling_epsilon=diag["cooling_epsilon"],
        adiabaticity_threshold=diag["adiabaticity_threshold"],
        target_fraction=diag["target_fraction"], oracle=oracle, prefix=prefix,
        dimensionless=dimensionless, source=source,
        sha256=hashlib.sha256(text.encode()).hexdigest(), **tolerances,
    )


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return parse_config_text(text, source=str(path))
