"""Reference solutions that do not use the instantaneous-basis equations.

* Doescher-Rice modes: exact solutions for a linearly moving wall,
  used to build an exact time evolution of any initial eigenstate.
* A Crank-Nicolson propagator in the scaled coordinate y = x / L(t),
  valid for any built-in trajectory.
* The long-time energy of a linearly expanding mode.

Everything here runs in hbar = m = L0 = 1 units internally; public
functions take a :class:`PhysicalSystem` and return energies in its units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.sparse import diags, identity
from scipy.sparse.linalg import splu

from .evolver import EvolverConfig, evolve
from .trajectory import Trajectory, TrajectoryKind
from .units import PhysicalSystem

OVERLAP_TOL = 1e-6
NORM_TOL = 1e-6
MODE_SUM_TOL = 1e-8


class OracleError(RuntimeError):
    """A reference computation failed its own accuracy checks."""


def _require_linear(traj: Trajectory):
    if traj.kind is not TrajectoryKind.LINEAR:
        raise ValueError(f"only defined for a linear wall, got {traj.kind.value}")


def _dimensionless(system, traj):
    system = system or PhysicalSystem.dimensionless()
    scaling = system.scaling(traj.L0)
    return system, scaling, traj.scaled(scaling.length_unit, scaling.time_unit)


@dataclass(frozen=True)
class BKTrajectoryParams:
    """Coefficients of L(t) = sqrt(a t**2 + 2 b t + c)."""

    a: float
    b: float
    c: float

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "BKTrajectoryParams":
        if traj.kind is TrajectoryKind.LINEAR:
            v = traj.speed
            return cls(a=v * v, b=traj.L0 * v, c=traj.L0**2)
        if traj.kind is TrajectoryKind.SQUARE_ROOT:
            return cls(a=0.0, b=0.5 * traj.area_rate, c=traj.L0**2)
        raise ValueError("custom trajectories have no (a, b, c) form")

    @property
    def invariant(self) -> float:
        """a c - b**2, zero for the linear law."""
        return self.a * self.c - self.b**2

    def position(self, t):
        return np.sqrt(self.a * np.asarray(t) ** 2 + 2.0 * self.b * np.asarray(t) + self.c)


def doescher_rice_mode(n: int, x, t: float, traj: Trajectory,
                       system: Optional[PhysicalSystem] = None):
    """Exact expanding mode phi_n(x, t) of the linearly moving box.

    phi_n = sqrt(2/L) sin(n pi x/L) exp(i m v x**2/(2 hbar L))
            * exp(-i n**2 pi**2 hbar/(2m) int_0^t dt'/L**2)
    """
    _require_linear(traj)
    system = system or PhysicalSystem.dimensionless()
    m, hbar = system.mass, system.hbar
    L = float(traj.position(t))
    v = float(traj.velocity(t))
    x = np.asarray(x, dtype=float)
    chirp = np.exp(1j * m * v * x**2 / (2.0 * hbar * L))
    phase = np.exp(-1j * n**2 * math.pi**2 * hbar / (2.0 * m) * float(traj.phase_integral(t)))
    return math.sqrt(2.0 / L) * np.sin(n * math.pi * x / L) * chirp * phase


def schrodinger_residual(n: int, traj: Trajectory, t: float, points: int = 2048,
                         dt: float = 1e-3) -> float:
    """Max |i d_t phi + (1/2) d_xx phi| of a dimensionless Doescher-Rice mode.

    Fourth-order finite differences in x and t on a ``points``-point grid.
    """
    _require_linear(traj)
    L_min = float(traj.position(max(t - 4 * dt, 0.0)))
    x = np.linspace(0.0, L_min, points)
    h = x[1] - x[0]
    # stay inside [0, tf]: the wall law changes at both ends
    if t < 2 * dt:
        offsets, weights = [0, 1, 2, 3, 4], np.array([-25, 48, -36, 16, -3]) / 12.0
    elif t + 2 * dt > traj.tf:
        offsets, weights = [0, -1, -2, -3, -4], -np.array([-25, 48, -36, 16, -3]) / 12.0
    else:
        offsets, weights = [-2, -1, 1, 2], np.array([1, -8, 8, -1]) / 12.0
    d_t = sum(w * doescher_rice_mode(n, x, t + k * dt, traj) for k, w in zip(offsets, weights)) / dt
    phi = doescher_rice_mode(n, x, t, traj)
    d_xx = (-phi[:-4] + 16 * phi[1:-3] - 30 * phi[2:-2] + 16 * phi[3:-1] - phi[4:]) / (12 * h * h)
    residual = 1j * d_t[2:-2] + 0.5 * d_xx
    return float(np.max(np.abs(residual)))


@dataclass
class ExactModeExpansion:
    """Projections of an initial state onto the t = 0 expanding modes."""

    overlaps: np.ndarray
    points: int
    spacing: float

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.overlaps) ** 2))


def _overlaps(initial_level: int, v: float, points: int, n_modes: int, sign: float = -1.0):
    """int_0^1 u_k(y) exp(sign i v y**2/2) u_n0(y) dy on the unit box."""
    y = np.linspace(0.0, 1.0, points + 1)
    k = np.arange(1, n_modes + 1)[:, None]
    integrand = (2.0 * np.sin(k * math.pi * y) * np.sin(initial_level * math.pi * y)
                 * np.exp(sign * 0.5j * v * y**2))
    return simpson(integrand, x=y, axis=1)


def mode_expansion(initial_level: int, v: float, min_points: int = 1024,
                   sign: float = -1.0) -> ExactModeExpansion:
    """Overlaps c_k, with quadrature doubled until they stabilise and the mode sum truncated."""
    n_modes = int(max(64, 4 * abs(v) + 8 * initial_level + 64))
    points = max(min_points, 16 * n_modes)
    coarse = _overlaps(initial_level, v, points, n_modes, sign)
    while True:
        points *= 2
        fine = _overlaps(initial_level, v, points, n_modes, sign)
        if np.max(np.abs(fine - coarse)) < OVERLAP_TOL * 1e-2:
            break
        if points > 2**22:
            raise OracleError("overlap quadrature did not stabilise")
        coarse = fine
    cumulative = np.cumsum(np.abs(fine) ** 2)
    reached = np.nonzero(cumulative > 1.0 - MODE_SUM_TOL)[0]
    if reached.size == 0:
        raise OracleError(f"mode sum reached only {cumulative[-1]:.10f}")
    # keep every mode up to the truncation point, plus the initial level's neighbours
    keep = max(int(reached[0]) + 1, initial_level + 2)
    return ExactModeExpansion(overlaps=fine[:keep], points=points, spacing=1.0 / points)


def exact_linear_evolution(initial_level: int, traj: Trajectory, sample_times: Sequence[float],
                           system: Optional[PhysicalSystem] = None,
                           points: int = 1024) -> np.ndarray:
    """<E>(t) of an initial box eigenstate under a linear wall, from the exact modes."""
    _require_linear(traj)
    system, scaling, traj_d = _dimensionless(system, traj)
    v = traj_d.speed
    expansion = mode_expansion(initial_level, v, points)
    c = expansion.overlaps
    K = c.size
    k = np.arange(1, K + 1)
    n_grid = max(points, 32 * K)
    y = np.linspace(0.0, 1.0, n_grid + 1)
    S = math.sqrt(2.0) * np.sin(np.outer(k, math.pi * y))
    dS = math.sqrt(2.0) * math.pi * k[:, None] * np.cos(np.outer(k, math.pi * y))
    energies = []
    for t in scaling.to_dimensionless(np.asarray(sample_times, dtype=float), "time"):
        L = float(traj_d.position(t))
        vel = float(traj_d.velocity(t))
        weights = c * np.exp(-0.5j * k**2 * math.pi**2 * float(traj_d.phase_integral(t)))
        f = weights @ S / math.sqrt(L)
        f_y = weights @ dS / math.sqrt(L)
        # d psi/dx up to the common chirp factor: f_y / L + i v y f (v = dL/dt)
        grad = f_y / L + 1j * vel * y * f
        norm = simpson(np.abs(f) ** 2, x=y) * L
        if abs(norm - 1.0) > NORM_TOL:
            raise OracleError(f"exact-mode reconstruction norm {norm:.9f} at t={t:.6g}")
        energies.append(0.5 * simpson(np.abs(grad) ** 2, x=y) * L)
    return np.asarray(energies) * scaling.energy_unit


@dataclass
class GridSpec:
    """Interior grid resolution and Crank-Nicolson step count for :func:`grid_propagate`."""

    points: int = 2000
    steps: int = 2000


@dataclass
class GridResult:
    """Richardson-combined energies from a coarse and a refined run."""

    times: np.ndarray
    energy: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    norm_drift: float
    spec: GridSpec = field(default_factory=GridSpec)

    @property
    def error_estimate(self) -> np.ndarray:
        return np.abs(self.fine - self.coarse) / 3.0


def _crank_nicolson(traj_d: Trajectory, initial_level: int, taus, points: int, steps: int):
    h = 1.0 / points
    y = np.arange(1, points) * h
    y_mid = (np.arange(points) + 0.5) * h
    g0 = float(traj_d.position(0.0)) * float(traj_d.velocity(0.0))
    chi = math.sqrt(2.0) * np.sin(initial_level * math.pi * y) * np.exp(-0.5j * g0 * y**2)
    off = np.full(points - 2, -0.5 / h**2)
    eye = identity(points - 1, format="csc")
    factors = {}

    def step_ops(q, dtau):
        key = (q, dtau)
        if key not in factors:
            H = diags([off, 1.0 / h**2 + 0.5 * q * y**2, off], [-1, 0, 1], format="csc")
            factors.clear()
            factors[key] = (splu((eye + 0.5j * dtau * H).tocsc()), (eye - 0.5j * dtau * H).tocsr())
        return factors[key]

    def curvature(tau):
        t = traj_d.time_at_phase(tau)
        L = float(traj_d.position(t))
        return L**3 * float(traj_d.acceleration(t))

    tau_total = taus[-1]
    energies, norms = [], []
    tau = 0.0
    for target in taus:
        span = target - tau
        if span > 0:
            n_sub = max(1, int(math.ceil(span / tau_total * steps)))
            dtau = span / n_sub
            for _ in range(n_sub):
                lu, rhs = step_ops(curvature(tau + 0.5 * dtau), dtau)
                chi = lu.solve(rhs @ chi)
                tau += dtau
            tau = target
        t = traj_d.time_at_phase(tau)
        L = float(traj_d.position(t))
        g = L * float(traj_d.velocity(t))
        full = np.concatenate([[0.0], chi, [0.0]])
        D = (full[1:] - full[:-1]) / h + 0.5j * g * y_mid * (full[1:] + full[:-1])
        energies.append(0.5 * np.sum(np.abs(D) ** 2) * h / L**2)
        norms.append(np.sum(np.abs(chi) ** 2) * h)
    return np.asarray(energies), np.asarray(norms)


def grid_propagate(system: Optional[PhysicalSystem], traj: Trajectory, initial_level: int,
                   sample_times: Sequence[float], grid_spec: Optional[GridSpec] = None) -> GridResult:
    """<E>(t) from a Crank-Nicolson solution in the scaled frame y = x/L(t).

    With psi = L**-1/2 exp(i m L' x**2 / (2 hbar L)) chi(x/L, t) and phase time
    tau, chi solves a fixed-box problem with potential L**3 L'' y**2 / 2.
    The run is repeated with grid and step count doubled and the two
    energies are Richardson-combined.
    """
    if traj.kind is TrajectoryKind.CUSTOM:
        raise ValueError("grid propagator needs d2L/dt2 and supports built-in trajectories only")
    spec = grid_spec or GridSpec()
    system, scaling, traj_d = _dimensionless(system, traj)
    times = np.asarray(sample_times, dtype=float)
    times_d = scaling.to_dimensionless(times, "time")
    if np.any(times_d > traj_d.tf * (1 + 1e-12)):
        raise ValueError("grid propagator covers the expansion only (t <= tf)")
    taus = np.array([float(traj_d.phase_integral(min(t, traj_d.tf))) for t in times_d])
    if taus[-1] == 0:
        taus = taus + 0.0
    e_coarse, n_coarse = _crank_nicolson(traj_d, initial_level, taus, spec.points, max(spec.steps, 1))
    e_fine, n_fine = _crank_nicolson(traj_d, initial_level, taus, 2 * spec.points, 2 * max(spec.steps, 1))
    drift = float(max(np.max(np.abs(n_coarse - 1.0)), np.max(np.abs(n_fine - 1.0))))
    if drift > NORM_TOL:
        raise OracleError(f"grid propagator norm drift {drift:.3g}")
    combined = (4.0 * e_fine - e_coarse) / 3.0
    to_e = scaling.energy_unit
    return GridResult(times=times, energy=combined * to_e, coarse=e_coarse * to_e,
                      fine=e_fine * to_e, norm_drift=drift, spec=spec)


def asymptotic_residual_energy(n: int, traj: Trajectory,
                               system: Optional[PhysicalSystem] = None) -> float:
    """Long-time energy of the n-th linearly expanding mode, (m v**2/2)(1/3 - 1/(2 n**2 pi**2))."""
    _require_linear(traj)
    if n < 1:
        raise ValueError("mode index starts at 1")
    system = system or PhysicalSystem.dimensionless()
    v = traj.speed
    return 0.5 * system.mass * v * v * (1.0 / 3.0 - 1.0 / (2.0 * n * n * math.pi**2))


def validate_asymptotic_residual(n: int, traj: Trajectory, horizon_factor: float = 100.0,
                                 n_max: int = 64, max_levels: int = 256) -> dict:
    """Compare the closed form with an instantaneous-basis run of the exact mode.

    The wall keeps moving linearly up to ``horizon_factor * tf``; the initial
    state is phi_n(x, 0) expanded in the box eigenbasis.  Dimensionless units.
    """
    _require_linear(traj)
    system, scaling, traj_d = _dimensionless(None, traj)
    v = traj_d.speed
    t_long = horizon_factor * traj_d.tf
    long_traj = Trajectory.linear(1.0, 1.0 + v * t_long, t_long)
    n_amp = max(max_levels, 4 * n)
    amps = _overlaps(n, v, 16 * n_amp, n_amp, sign=+1.0)
    tail = np.cumsum((np.abs(amps) ** 2)[::-1])[::-1]
    amps = amps[: max(int(np.count_nonzero(tail > 1e-11)), n + 1)]
    amps = amps / np.linalg.norm(amps)
    cfg = EvolverConfig(n_max=n_max, max_levels=max_levels, initial_amplitudes=amps,
                        sample_times=[0.0, t_long])
    record = evolve(system, long_traj, cfg)
    formula = asymptotic_residual_energy(n, traj_d)
    numerical = record.E_f
    # the mode's static kinetic part n**2 pi**2 / (2 L**2) is still present at finite t
    static_part = n * n * math.pi**2 / (2.0 * float(long_traj.position(t_long)) ** 2)
    return {"formula": formula, "numerical": numerical,
            "relative_deviation": abs(numerical - formula) / formula,
            "relative_deviation_without_static": abs(numerical - static_part - formula) / formula,
            "converged": record.converged, "n_max": record.n_max, "t": t_long}
