"""Bounds, stopping and adiabaticity criteria evaluated on trajectories and evolution records."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .evolver import EvolutionRecord, coupling_element, instantaneous_energy
from .trajectory import Trajectory
from .units import PhysicalSystem

ADIABATICITY_THRESHOLD = 0.1
COOLING_ONSET_EPSILON = 0.05
BOUND_EPSILON = 1e-10  # dimensionless energy units
MIN_ONSET_SAMPLES = 200


def minimal_stoppable_velocity(traj: Trajectory) -> float:
    """Slowest speed that still reaches the mirror before tf from x = 0: Lf/tf."""
    return traj.Lf / traj.tf


def quasi_velocity(system: PhysicalSystem, L0: float) -> float:
    """Ground-state velocity scale pi hbar / (m L0)."""
    return math.pi * system.hbar / (system.mass * L0)


def stop_condition_ratio(system: PhysicalSystem, traj: Trajectory) -> float:
    """v_min / v_1 = m Lf L0 / (tf pi hbar); values well below one mean stoppable."""
    return system.mass * traj.Lf * traj.L0 / (traj.tf * math.pi * system.hbar)


def adiabaticity_timescale(system: PhysicalSystem, Lf: float) -> float:
    """t_ad = 8 m Lf**2 / (9 pi**2 hbar); the expansion is adiabatic when tf >> t_ad."""
    if Lf <= 0:
        raise ValueError("Lf must be positive")
    return 8.0 * system.mass * Lf**2 / (9.0 * math.pi**2 * system.hbar)


def adiabatic_action_margin(system: PhysicalSystem, traj: Trajectory) -> float:
    """tf E_1(Lf) / (4 hbar / 9): the same criterion written as an action ratio."""
    return traj.tf * instantaneous_energy(1, traj.Lf, system) / (4.0 * system.hbar / 9.0)


def adiabaticity_ratio(k: int, n: int, traj: Trajectory, system: PhysicalSystem, t: float) -> float:
    """|<u_k|d_t u_n>| hbar / |E_k - E_n| at time t."""
    if k == n:
        raise ValueError("adiabaticity ratio needs two distinct levels")
    L = float(traj.position(t))
    gap = abs(instantaneous_energy(k, L, system) - instantaneous_energy(n, L, system))
    return abs(coupling_element(k, n, traj, t)) * system.hbar / gap


def adiabaticity_profile(traj: Trajectory, system: PhysicalSystem, times: Sequence[float],
                         k: int = 2, n: int = 1) -> np.ndarray:
    return np.array([adiabaticity_ratio(k, n, traj, system, float(t)) for t in times])


def adiabaticity_breakdown_time(traj: Trajectory, system: PhysicalSystem, times: Sequence[float],
                                threshold: float = ADIABATICITY_THRESHOLD) -> Optional[float]:
    """First sampled time at which the (2,1) ratio reaches the threshold, None if never."""
    ratios = adiabaticity_profile(traj, system, times)
    hits = np.nonzero(ratios >= threshold)[0]
    return float(np.asarray(times)[hits[0]]) if hits.size else None


def min_final_length(system: PhysicalSystem, E_target: float) -> float:
    """Smallest Lf whose ground level lies at or below E_target: pi hbar / sqrt(2 m E)."""
    if E_target <= 0:
        raise ValueError("target energy must be positive")
    return math.pi * system.hbar / math.sqrt(2.0 * system.mass * E_target)


def cooling_onset(record: EvolutionRecord, epsilon: float = COOLING_ONSET_EPSILON) -> Optional[float]:
    """First sample time with <E>(t) < (1 - epsilon) <E>(0); None if the energy never drops that far."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    below = np.nonzero(record.E_avg < (1.0 - epsilon) * record.E_avg[0])[0]
    return float(record.t[below[0]]) if below.size else None


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    first_violation: Optional[float]
    worst_margin: float  # min of lhs - rhs, in SI energy


def _check(record: EvolutionRecord, lower: np.ndarray, epsilon: float) -> BoundCheck:
    margin = record.E_avg - lower
    tol = epsilon * record.scaling.energy_unit
    bad = np.nonzero(margin < -tol)[0]
    return BoundCheck(ok=bad.size == 0,
                      first_violation=float(record.t[bad[0]]) if bad.size else None,
                      worst_margin=float(margin.min()))


def energy_bound_check(record: EvolutionRecord, epsilon: float = BOUND_EPSILON) -> BoundCheck:
    """<E>(t) >= E_1(t) at every sample."""
    return _check(record, record.E_1, epsilon)


def minimal_work_check(record: EvolutionRecord, epsilon: float = BOUND_EPSILON) -> BoundCheck:
    """<E>(t) >= E_adiab(t) at every sample."""
    return _check(record, record.E_adiab, epsilon)


def is_passive(populations: Sequence[float]) -> bool:
    """Populations non-increasing with the level index."""
    p = np.asarray(populations, dtype=float)
    return bool(np.all(np.diff(p) <= 0.0))


def tonks_girardeau_energy(records: Sequence[EvolutionRecord]) -> np.ndarray:
    """Pointwise sum of single-particle <E>_n(t) over the records for n = 1..N."""
    if not records:
        raise ValueError("no records to sum")
    grid = records[0].t
    for rec in records[1:]:
        if rec.t.shape != grid.shape or not np.array_equal(rec.t, grid):
            raise ValueError("records are sampled on different time grids")
    total = np.zeros_like(records[0].E_avg)
    for rec in records:
        total = total + rec.E_avg
    return total


@dataclass
class DiagnosticsReport:
    v_min: float
    quasi_velocity: float
    stop_ratio: float
    adiab_timescale: float
    adiab_ratio: float
    max_adiabaticity_ratio: float
    adiabatic_breakdown: Optional[float]
    min_Lf_for_target: float
    energy_bound_ok: Optional[bool] = None
    energy_bound_first_violation: Optional[float] = None
    minimal_work_ok: Optional[bool] = None
    minimal_work_first_violation: Optional[float] = None
    passive_initial_state: Optional[bool] = None
    cooling_onset: Optional[float] = None
    cooling_onset_epsilon: float = COOLING_ONSET_EPSILON
    adiabaticity_threshold: float = ADIABATICITY_THRESHOLD

    def as_row(self) -> dict:
        return asdict(self)

    def as_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            lines.append(f"{key} = {'none' if value is None else repr(value)}")
        return "\n".join(lines) + "\n"


def diagnose(system: PhysicalSystem, traj: Trajectory, record: Optional[EvolutionRecord] = None,
             target_fraction: float = 0.01, epsilon: float = COOLING_ONSET_EPSILON,
             threshold: float = ADIABATICITY_THRESHOLD, samples: int = 201) -> DiagnosticsReport:
    """Collect every criterion for one trajectory; record-dependent fields need ``record``.

    ``target_fraction`` sets the cooling goal as a fraction of E_1(L0) for the
    minimal final length.
    """
    times = record.t[record.t <= traj.tf] if record is not None else np.linspace(0.0, traj.tf, samples)
    ratios = adiabaticity_profile(traj, system, times)
    hits = np.nonzero(ratios >= threshold)[0]
    t_ad = adiabaticity_timescale(system, traj.Lf)
    report = DiagnosticsReport(
        v_min=minimal_stoppable_velocity(traj),
        quasi_velocity=quasi_velocity(system, traj.L0),
        stop_ratio=stop_condition_ratio(system, traj),
        adiab_timescale=t_ad,
        adiab_ratio=t_ad / traj.tf,
        max_adiabaticity_ratio=float(ratios.max()),
        adiabatic_breakdown=float(times[hits[0]]) if hits.size else None,
        min_Lf_for_target=min_final_length(system, target_fraction * instantaneous_energy(1, traj.L0, system)),
        cooling_onset_epsilon=epsilon,
        adiabaticity_threshold=threshold,
    )
    if record is not None:
        eb = energy_bound_check(record)
        mw = minimal_work_check(record)
        report.energy_bound_ok = eb.ok
        report.energy_bound_first_violation = eb.first_violation
        report.minimal_work_ok = mw.ok
        report.minimal_work_first_violation = mw.first_violation
        report.passive_initial_state = is_passive(record.initial_populations)
        report.cooling_onset = cooling_onset(record, epsilon)
    return report
