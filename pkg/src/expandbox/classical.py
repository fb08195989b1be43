"""Event-driven classical point particles between a fixed wall at x = 0 and a moving mirror.

Flights between collisions are exactly linear.  Crossing times with the
moving mirror are solved in closed form: a linear equation for the linear
law, and a quadratic for the square-root law (L**2 is affine in t).  Custom
laws fall back to bracketing on a sampled grid.  After tf the mirror is held
at Lf.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .trajectory import Trajectory, TrajectoryKind

GRAZING_TOL = 1e-12
MAX_BOUNCES = 1_000_000


class Wall(enum.Enum):
    FIXED = "fixed"
    MOVING = "moving"


class CollisionError(RuntimeError):
    """Inconsistent collision request or failed root search."""


@dataclass
class ClassicalParticle:
    x: float
    v: float
    t: float = 0.0


def reflect(v: float, wall_v: float = 0.0, wall: Wall = Wall.MOVING) -> float:
    """Elastic reflection; the moving-wall rule is v' = 2 w - v."""
    if wall is Wall.FIXED:
        if v > 0:
            raise CollisionError(f"particle with v={v} is not approaching the fixed wall")
        return -v
    if v < wall_v:
        raise CollisionError(f"particle with v={v} cannot reach a wall receding at {wall_v}")
    return 2.0 * wall_v - v


def _velocity_scale(traj: Trajectory, v: float) -> float:
    return max(abs(v), traj.Lf / traj.tf)


def _snap(tc: float, t_stop: float) -> float:
    # a catch exactly at the horizon must not be lost to round-off
    return t_stop if abs(tc - t_stop) <= 1e-12 * max(abs(t_stop), 1.0) else tc


def _moving_crossing(p: ClassicalParticle, traj: Trajectory, t_stop: float) -> Optional[float]:
    """Earliest t in (p.t, t_stop] where the particle meets the moving wall while approaching it."""
    if p.t >= t_stop:
        return None
    scale = _velocity_scale(traj, p.v)

    def approaching(tc):
        return p.v - float(traj.velocity(tc)) > GRAZING_TOL * scale

    L_now = float(traj.position(p.t))
    if traj.kind is TrajectoryKind.LINEAR:
        w = traj.speed
        if p.v - w <= GRAZING_TOL * scale:
            return None
        tc = _snap(p.t + (L_now - p.x) / (p.v - w), t_stop)
        return tc if p.t < tc <= t_stop else None

    if traj.kind is TrajectoryKind.SQUARE_ROOT:
        # (x + v s)^2 = L(t)^2 + c1 s  with s = tc - t
        c1 = traj.area_rate
        A = p.v * p.v
        B = 2.0 * p.x * p.v - c1
        Cq = p.x * p.x - L_now * L_now
        roots = []
        if A == 0.0:
            if B != 0.0:
                roots = [-Cq / B]
        else:
            disc = B * B - 4.0 * A * Cq
            if disc >= 0.0:
                q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
                roots = [q / A] + ([Cq / q] if q != 0.0 else [])
        for s in sorted(roots):
            tc = _snap(p.t + s, t_stop)
            s = tc - p.t
            if s <= 0.0 or tc > t_stop or p.x + p.v * s < 0.0 or not approaching(tc):
                continue
            gap = p.x + p.v * s - float(traj.position(tc))
            if abs(gap) <= 1e-9 * traj.Lf:
                return tc
            return _bracket_crossing(p, traj, p.t, t_stop)
        return None

    return _bracket_crossing(p, traj, p.t, t_stop)


def _bracket_crossing(p, traj, t_lo, t_hi, samples=2048) -> Optional[float]:
    def gap(tc):
        return p.x + p.v * (tc - p.t) - float(traj.position(tc))

    grid = np.linspace(t_lo, t_hi, samples + 1)
    values = np.array([gap(tc) for tc in grid])
    tol = 1e-12 * traj.Lf
    for i in range(samples):
        lo, hi = values[i], values[i + 1]
        if lo < -tol and hi >= -tol:
            try:
                return brentq(gap, grid[i], grid[i + 1], xtol=1e-15 * max(t_hi, 1.0), rtol=1e-14)
            except ValueError as exc:
                raise CollisionError(f"root bracketing failed on [{grid[i]}, {grid[i+1]}]") from exc
    return None


def next_collision(p: ClassicalParticle, traj: Trajectory,
                   horizon: Optional[float] = None) -> Optional[Tuple[float, Wall]]:
    """Earliest collision after p.t and no later than the horizon (default tf)."""
    horizon = traj.tf if horizon is None else horizon
    candidates = []
    if p.v < 0:
        tc = p.t - p.x / p.v
        if tc <= horizon:
            candidates.append((tc, Wall.FIXED))
    tc = _moving_crossing(p, traj, min(traj.tf, horizon))
    if tc is not None:
        candidates.append((tc, Wall.MOVING))
    elif horizon > traj.tf and p.v > 0:
        # held wall at Lf
        t0 = max(p.t, traj.tf)
        x0 = p.x + p.v * (t0 - p.t)
        # a particle that caught the wall at tf and still moves outward is
        # turned back by the now static wall at once
        if x0 <= traj.Lf * (1 + GRAZING_TOL):
            tc = max(t0 + (traj.Lf - x0) / p.v, t0)
            if tc <= horizon:
                candidates.append((tc, Wall.MOVING))
    if not candidates:
        return None
    return min(candidates, key=lambda item: item[0])


@dataclass
class ParticleSummary:
    v0: float
    bounce_count: int
    moving_bounces: int
    v_final: float
    last_collision_time: Optional[float]
    x_final: float
    history: List[Tuple[float, float]] = field(default_factory=list)

    def kinetic_energy_ratio(self) -> float:
        return (self.v_final / self.v0) ** 2 if self.v0 != 0 else 1.0


def run_particle(p: ClassicalParticle, traj: Trajectory, horizon: Optional[float] = None,
                 max_bounces: int = MAX_BOUNCES) -> ParticleSummary:
    """Follow one particle through all collisions up to the horizon.

    ``history`` holds (collision time, speed after collision) pairs; kinetic
    energies follow with the caller's mass.
    """
    horizon = traj.tf if horizon is None else horizon
    if horizon < traj.tf:
        raise ValueError("horizon must not end before tf")
    state = ClassicalParticle(p.x, p.v, p.t)
    v0 = p.v
    bounces = moving = 0
    last = None
    history = []
    while True:
        event = next_collision(state, traj, horizon)
        if event is None:
            break
        tc, wall = event
        if wall is Wall.FIXED:
            state = ClassicalParticle(0.0, reflect(state.v, wall=Wall.FIXED), tc)
        else:
            wall_v = float(traj.velocity(tc)) if tc <= traj.tf else 0.0
            if tc >= traj.tf and state.v < wall_v:
                wall_v = 0.0  # second touch at tf: the wall is already held
            state = ClassicalParticle(float(traj.position(tc)), reflect(state.v, wall_v), tc)
            moving += 1
        bounces += 1
        last = tc
        history.append((tc, state.v))
        if bounces > max_bounces:
            raise CollisionError(f"more than {max_bounces} bounces; pathological chatter")
    x_final = state.x + state.v * (horizon - state.t)
    return ParticleSummary(v0=v0, bounce_count=bounces, moving_bounces=moving,
                           v_final=state.v, last_collision_time=last, x_final=x_final,
                           history=history)


@dataclass(frozen=True)
class VelocityDistribution:
    """Initial speeds: ``uniform`` on [low, high] or ``fixed`` at ``low``."""

    kind: str
    low: float
    high: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.kind == "uniform" and (self.high is None or self.high < self.low):
            raise ValueError("uniform distribution needs low <= high")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(n, float(self.low))
        return rng.uniform(self.low, self.high, size=n)


@dataclass
class ClassicalEnsembleResult:
    v0: np.ndarray
    bounce_count: np.ndarray
    v_final: np.ndarray
    last_collision_time: np.ndarray
    mass: float = 1.0
    stop_threshold: float = 0.1

    @property
    def initial_kinetic(self) -> np.ndarray:
        return 0.5 * self.mass * self.v0**2

    @property
    def final_kinetic(self) -> np.ndarray:
        return 0.5 * self.mass * self.v_final**2

    @property
    def mean_initial_kinetic(self) -> float:
        return float(np.mean(self.initial_kinetic))

    @property
    def mean_final_kinetic(self) -> float:
        return float(np.mean(self.final_kinetic))

    @property
    def stopped_fraction(self) -> float:
        """Fraction of particles with |v_final| < stop_threshold * |v0|."""
        return float(np.mean(np.abs(self.v_final) < self.stop_threshold * np.abs(self.v0)))


def run_ensemble(distribution: VelocityDistribution, n: int, seed: int, traj: Trajectory,
                 x0: float = 0.0, horizon: Optional[float] = None, mass: float = 1.0,
                 stop_threshold: float = 0.1) -> ClassicalEnsembleResult:
    if n < 1:
        raise ValueError("ensemble needs at least one particle")
    rng = np.random.default_rng(seed)
    speeds = distribution.sample(n, rng)
    runs = [run_particle(ClassicalParticle(x0, float(v)), traj, horizon) for v in speeds]
    return ClassicalEnsembleResult(
        v0=speeds,
        bounce_count=np.array([r.bounce_count for r in runs]),
        v_final=np.array([r.v_final for r in runs]),
        last_collision_time=np.array([np.nan if r.last_collision_time is None
                                      else r.last_collision_time for r in runs]),
        mass=mass,
        stop_threshold=stop_threshold,
    )
