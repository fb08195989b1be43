"""Instantaneous-eigenbasis dynamics of a particle in a box with a moving wall.

The wavefunction is expanded as

    psi(x, t) = sum_n a_n(t) u_n(x, t) exp(-i theta_n(t)),
    u_n = sqrt(2/L) sin(n pi x / L),   theta_n = (1/hbar) int_0^t E_n dt',

and substitution into the Schroedinger equation gives

    da_k/dt = - sum_n <u_k | d_t u_n> exp(i (theta_k - theta_n)) a_n,
    <u_k | d_t u_n> = (dL/dt / L) C_kn.

Two integrators are provided.  ``"magnus"`` (default) works with
c_n = a_n exp(-i theta_n) in the phase time tau and is unitary by
construction; phases are then taken from the closed-form phase integral.
``"rk"`` integrates (a_n, theta_n) literally with scipy's DOP853 and is
intended for small cross-checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .propagators import MagnusStepper, coupling_matrix
from .trajectory import Trajectory
from .units import PhysicalSystem, UnitScaling

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 201
NORM_TOLERANCE = 1e-8


class IntegrationError(RuntimeError):
    """The adaptive integrator could not complete a step."""


def instantaneous_energy(n, L, system: Optional[PhysicalSystem] = None):
    """E_n = n**2 pi**2 hbar**2 / (2 m L**2)."""
    if system is None:
        system = PhysicalSystem.dimensionless()
    n = np.asarray(n, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(n < 1) or np.any(L <= 0):
        raise ValueError("instantaneous_energy needs n >= 1 and L > 0")
    E = n**2 * math.pi**2 * system.hbar**2 / (2.0 * system.mass * L**2)
    return float(E) if E.ndim == 0 else E


def coupling_element(k: int, n: int, traj: Trajectory, t: float) -> float:
    """<u_k | d u_n / dt> at time t, in inverse units of the trajectory's time."""
    if k < 1 or n < 1:
        raise ValueError("level indices start at 1")
    if k == n:
        return 0.0
    rate = float(traj.velocity(t)) / float(traj.position(t))
    sign = 1.0 if (k + n) % 2 == 0 else -1.0
    # integer numerator and denominator keep C_kn = -C_nk exact in floating point
    return rate * (sign * (2 * k * n) / (k * k - n * n))


@dataclass
class BasisState:
    """Amplitudes a_n and dynamical phases theta_n at time t."""

    t: float
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        self.phases = np.asarray(self.phases, dtype=float)
        if self.amplitudes.size < 2:
            raise ValueError("a basis state needs at least two levels")

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(self.populations.sum())

    def schrodinger_coefficients(self) -> np.ndarray:
        return self.amplitudes * np.exp(-1j * self.phases)


def average_energy(state: BasisState, L: float, system: Optional[PhysicalSystem] = None) -> float:
    p = state.populations
    return float(np.sum(p * instantaneous_energy(np.arange(1, p.size + 1), L, system)))


def adiabatic_energy(p0: Sequence[float], L: float, system: Optional[PhysicalSystem] = None) -> float:
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0 < 0):
        raise ValueError("populations must be non-negative")
    return float(np.sum(p0 * instantaneous_energy(np.arange(1, p0.size + 1), L, system)))


@dataclass
class EvolverConfig:
    """Basis size, tolerances, output grid and initial state for :func:`evolve`.

    ``sample_times`` are in the trajectory's time unit; when omitted,
    ``samples`` equally spaced times on [0, tf] are used.
    """

    n_max: int = 64
    rel_tol: float = 1e-7
    abs_tol: float = 1e-9
    sample_times: Optional[Sequence[float]] = None
    samples: int = DEFAULT_SAMPLES
    initial_level: int = 1
    initial_amplitudes: Optional[Sequence[complex]] = None
    population_columns: int = 10
    auto_converge: bool = True
    convergence_tol: float = 1e-3
    max_levels: int = 512
    method: str = "magnus"
    initial_step: float = 1e-6

    def validate(self) -> list:
        problems = []
        if self.n_max < 2:
            problems.append("n_max must be at least 2")
        if self.initial_amplitudes is None and not 1 <= self.initial_level <= self.n_max:
            problems.append(f"initial_level must be in [1, n_max], got {self.initial_level}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            problems.append("tolerances must be positive")
        if self.convergence_tol <= 0:
            problems.append("convergence_tol must be positive")
        if self.max_levels < self.n_max:
            problems.append("max_levels must be at least n_max")
        if self.method not in ("magnus", "rk"):
            problems.append(f"unknown method {self.method!r}")
        if self.sample_times is not None:
            ts = np.asarray(self.sample_times, dtype=float)
            if ts.size == 0 or np.any(ts < 0) or np.any(np.diff(ts) < 0):
                problems.append("sample_times must be non-negative and sorted")
        elif self.samples < 2:
            problems.append("samples must be at least 2")
        return problems

    def times(self, traj: Trajectory) -> np.ndarray:
        if self.sample_times is not None:
            return np.asarray(self.sample_times, dtype=float)
        return np.linspace(0.0, traj.tf, self.samples)

    def initial_vector(self, n_levels: int) -> np.ndarray:
        c = np.zeros(n_levels, dtype=complex)
        if self.initial_amplitudes is None:
            c[self.initial_level - 1] = 1.0
            return c
        amps = np.asarray(self.initial_amplitudes, dtype=complex)
        if amps.size > n_levels:
            if np.sum(np.abs(amps[n_levels:]) ** 2) > 0:
                raise ValueError("initial amplitudes extend beyond the basis")
            amps = amps[:n_levels]
        c[: amps.size] = amps
        norm = np.linalg.norm(c)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"initial amplitudes are not normalised (norm {norm:.12g})")
        return c


@dataclass
class EvolutionRecord:
    """Sampled observables of one evolution, in the units of the input trajectory/system."""

    t: np.ndarray
    L: np.ndarray
    E_avg: np.ndarray
    E_adiab: np.ndarray
    E_1: np.ndarray
    populations: np.ndarray
    p_tail: np.ndarray
    norm_error: np.ndarray
    initial_populations: np.ndarray
    final_state: BasisState
    system: PhysicalSystem
    trajectory: Trajectory
    scaling: UnitScaling
    n_max: int
    converged: Optional[bool] = None
    convergence_delta: Optional[float] = None
    method: str = "magnus"
    stats: dict = field(default_factory=dict)

    @property
    def E0(self) -> float:
        return float(self.E_avg[0])

    @property
    def E_f(self) -> float:
        return float(self.E_avg[-1])

    @property
    def cooling_ratio(self) -> float:
        return self.E_f / self.E0

    @property
    def wall_hold_used(self) -> bool:
        return bool(self.t[-1] > self.trajectory.tf)

    def cooling_onset_time(self, epsilon: float = 0.05):
        from .diagnostics import cooling_onset
        return cooling_onset(self, epsilon)

    def dimensionless(self, quantity: str) -> np.ndarray:
        kinds = {"t": "time", "L": "length", "E_avg": "energy", "E_adiab": "energy",
                 "E_1": "energy"}
        return self.scaling.to_dimensionless(getattr(self, quantity), kinds[quantity])


def _propagate_magnus(traj_d: Trajectory, c0, taus, n_levels, cfg: EvolverConfig):
    def g(tau):
        t = traj_d.time_at_phase(tau)
        return float(traj_d.position(t)) * float(traj_d.velocity(t))

    stepper = MagnusStepper(n_levels, g)
    out = np.empty((len(taus), n_levels), dtype=complex)
    c = c0.copy()
    tau = 0.0
    h = cfg.initial_step
    accepted = rejected = 0
    span = max(taus[-1], 1e-300)
    # g jumps at the end of the expansion; never let a step straddle it
    tau_end = float(traj_d.phase_integral(traj_d.tf))
    stops = list(taus)
    if 0 < tau_end < taus[-1]:
        stops.append(tau_end)
    stops = sorted(set(stops))
    saved = {}
    for target in stops:
        while tau < target:
            hh = min(h, target - tau)
            last = hh == target - tau
            big = stepper.step(tau, hh, c)
            mid = stepper.step(tau, 0.5 * hh, c)
            fine = stepper.step(tau + 0.5 * hh, 0.5 * hh, mid)
            err = np.linalg.norm(big - fine) / 15.0
            tol = cfg.abs_tol + cfg.rel_tol * np.linalg.norm(c)
            if err <= tol:
                tau = target if last else tau + hh
                c = fine
                accepted += 1
            else:
                rejected += 1
            factor = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
            h_new = hh * min(5.0, max(0.2, factor))
            # a step clipped to hit a sample must not shrink the controller's step
            h = max(h_new, h) if (last and err <= tol) else h_new
            if h < 1e-15 * span:
                raise IntegrationError(f"step size underflow at tau={tau:.6g} (h={h:.3g})")
            if rejected > 100000:
                raise IntegrationError("too many rejected steps")
        saved[target] = c
    for i, target in enumerate(taus):
        out[i] = saved[target]
    stats = {"accepted_steps": accepted, "rejected_steps": rejected,
             "eigh_calls": stepper.eigh_calls, "matvecs": stepper.matvecs}
    return out, stats


def _propagate_rk(traj_d: Trajectory, c0, times_d, n_levels, cfg: EvolverConfig):
    C = coupling_matrix(n_levels)
    levels = np.arange(1, n_levels + 1)
    energy_factor = levels**2 * (math.pi**2 / 2.0)

    def rhs(t, y):
        a = y[:n_levels] + 1j * y[n_levels:2 * n_levels]
        theta = y[2 * n_levels:]
        L = float(traj_d.position(t))
        rate = float(traj_d.velocity(t)) / L
        rot = np.exp(1j * theta)
        da = -rate * rot * (C @ (a / rot))
        return np.concatenate([da.real, da.imag, energy_factor / L**2])

    y0 = np.concatenate([c0.real, c0.imag, np.zeros(n_levels)])
    t_end = times_d[-1]
    if t_end == 0:
        sol_y = np.repeat(y0[:, None], len(times_d), axis=1)
        nfev = 0
    else:
        sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", t_eval=times_d,
                        rtol=cfg.rel_tol, atol=cfg.abs_tol,
                        first_step=min(cfg.initial_step, t_end))
        if sol.status != 0:
            raise IntegrationError(f"DOP853 failed: {sol.message}")
        sol_y = sol.y
        nfev = sol.nfev
    a = sol_y[:n_levels] + 1j * sol_y[n_levels:2 * n_levels]
    theta = sol_y[2 * n_levels:]
    # back to Schroedinger-picture coefficients so both paths share the bookkeeping
    c = (a * np.exp(-1j * theta)).T
    return c, {"nfev": nfev}


def _evolve_fixed(system, traj, cfg: EvolverConfig, n_levels: int) -> EvolutionRecord:
    scaling = system.scaling(traj.L0)
    traj_d = traj.scaled(scaling.length_unit, scaling.time_unit)
    times = cfg.times(traj)
    times_d = scaling.to_dimensionless(times, "time")
    c0 = cfg.initial_vector(n_levels)
    if cfg.method == "magnus":
        taus = np.array([traj_d.phase_integral(t) for t in times_d])
        coeffs, stats = _propagate_magnus(traj_d, c0, taus, n_levels, cfg)
    else:
        taus = np.array([traj_d.phase_integral(t) for t in times_d])
        coeffs, stats = _propagate_rk(traj_d, c0, times_d, n_levels, cfg)

    levels = np.arange(1, n_levels + 1)
    L_d = np.asarray(traj_d.position(times_d), dtype=float)
    pops = np.abs(coeffs) ** 2
    p0 = np.abs(c0) ** 2
    e_levels = instantaneous_energy(levels[None, :], L_d[:, None])
    E_avg = np.sum(pops * e_levels, axis=1)
    E_adiab = e_levels @ p0
    E_1 = e_levels[:, 0]
    K = min(cfg.population_columns, n_levels)
    norm = pops.sum(axis=1)

    theta_f = levels**2 * (math.pi**2 / 2.0) * taus[-1]
    final = BasisState(t=float(times[-1]), amplitudes=coeffs[-1] * np.exp(1j * theta_f),
                       phases=theta_f)
    to_e = scaling.energy_unit
    return EvolutionRecord(
        t=times,
        L=L_d * scaling.length_unit,
        E_avg=E_avg * to_e,
        E_adiab=E_adiab * to_e,
        E_1=E_1 * to_e,
        populations=pops[:, :K],
        p_tail=pops[:, K:].sum(axis=1),
        norm_error=np.abs(norm - 1.0),
        initial_populations=p0,
        final_state=final,
        system=system,
        trajectory=traj,
        scaling=scaling,
        n_max=n_levels,
        method=cfg.method,
        stats=stats,
    )


def evolve(system: PhysicalSystem, traj: Trajectory, config: Optional[EvolverConfig] = None) -> EvolutionRecord:
    """Integrate the instantaneous-basis equations from t = 0 to the last sample time.

    With ``config.auto_converge`` the basis is doubled until the final energy
    changes by less than ``convergence_tol`` (relative) or ``max_levels`` is
    reached; the record of the largest basis is returned and carries the
    ``converged`` flag.
    """
    cfg = config or EvolverConfig()
    problems = cfg.validate()
    if problems:
        raise ValueError("; ".join(problems))
    n_levels = cfg.n_max
    if cfg.initial_amplitudes is not None:
        n_levels = max(n_levels, len(cfg.initial_amplitudes))
    record = _evolve_fixed(system, traj, cfg, n_levels)
    if not cfg.auto_converge:
        return record
    while True:
        if 2 * n_levels > cfg.max_levels:
            record.converged = False
            logger.warning("basis not converged at N=%d (last relative change %s)",
                           n_levels, record.convergence_delta)
            return record
        n_levels *= 2
        finer = _evolve_fixed(system, traj, cfg, n_levels)
        delta = abs(finer.E_f - record.E_f) / abs(finer.E_f)
        finer.convergence_delta = delta
        record = finer
        if delta < cfg.convergence_tol:
            record.converged = True
            return record
