"""Experiment orchestration behind the command line: single runs, sweeps, TG sums, classical ensembles, oracle checks."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import diagnostics as diag
from .classical import VelocityDistribution, run_ensemble
from .config import ExperimentConfig
from .evolver import EvolutionRecord, EvolverConfig, evolve
from .oracle import GridSpec, exact_linear_evolution, grid_propagate
from .output import OutputDir, utc_now, write_csv
from .trajectory import WALL_HOLD_CONVENTION, Trajectory, TrajectoryKind

logger = logging.getLogger(__name__)


def software_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


@dataclass
class RunOutcome:
    command: str
    out_dir: Path
    files: List[str] = field(default_factory=list)
    ok: bool = True
    messages: List[str] = field(default_factory=list)


def parallel_map(fn: Callable, tasks: Sequence, jobs: Optional[int] = None) -> list:
    """Apply ``fn`` to every task; results come back in task order whatever the completion order."""
    if not jobs or jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def sample_times(cfg: ExperimentConfig, tf: float) -> np.ndarray:
    end = cfg.t_end if cfg.t_end is not None else tf
    times = np.linspace(0.0, end, cfg.samples)
    if end > tf:
        times = np.union1d(times, [tf])
    return times


def evolver_config(cfg: ExperimentConfig, level: int, times) -> EvolverConfig:
    return EvolverConfig(n_max=cfg.n_max, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                         sample_times=list(times), initial_level=level,
                         population_columns=cfg.population_columns,
                         convergence_tol=cfg.convergence_tol, max_levels=cfg.max_levels,
                         method=cfg.method)


def _evolve_task(task) -> EvolutionRecord:
    cfg, traj, level, times = task
    return evolve(cfg.system, traj, evolver_config(cfg, level, times))


def _levels(cfg: ExperimentConfig) -> List[int]:
    if cfg.engine == "tg":
        return list(range(1, cfg.tg_particles + 1))
    if cfg.engine == "single":
        return list(cfg.initial_levels)
    raise ValueError("this command needs a quantum engine ([evolver] initial_level or tg_particles)")


def _manifest(cfg: ExperimentConfig, command: str, started: str, **extra) -> dict:
    manifest = {
        "command": command,
        "software": {"package": "expandbox", "version": software_version()},
        "config": {"path": cfg.source, "sha256": cfg.sha256},
        "unit_system": "dimensionless (hbar = m = L0 = 1)" if cfg.system.is_dimensionless else "SI",
        "system": {"species": cfg.system.species_label, "mass": cfg.system.mass,
                   "hbar": cfg.system.hbar},
        "started_utc": started,
        "finished_utc": utc_now(),
        "decisions": {
            "cooling_onset_epsilon": cfg.cooling_epsilon,
            "adiabaticity_threshold": cfg.adiabaticity_threshold,
            "adiabaticity_pair": [2, 1],
            "wall_hold": WALL_HOLD_CONVENTION,
            "convergence_tol": cfg.convergence_tol,
            "max_levels": cfg.max_levels,
            "csv_float_format": "shortest round-trip repr",
        },
    }
    manifest.update(extra)
    return manifest


RECORD_COLUMNS = ["t_s", "L_m", "E_avg_J", "E_adiab_J", "E_1_J"]
TWIN_COLUMNS = ["t_dimless", "L_dimless", "E_avg_dimless", "E_adiab_dimless", "E_1_dimless"]


def record_table(record: EvolutionRecord, dimensionless: bool = False):
    K = record.populations.shape[1]
    header = RECORD_COLUMNS + [f"p_{k}" for k in range(1, K + 1)] + ["p_tail", "norm_error"]
    columns = [record.t, record.L, record.E_avg, record.E_adiab, record.E_1]
    columns += [record.populations[:, k] for k in range(K)] + [record.p_tail, record.norm_error]
    if dimensionless:
        header += TWIN_COLUMNS
        columns += [record.dimensionless(q) for q in ("t", "L", "E_avg", "E_adiab", "E_1")]
    rows = [list(row) for row in zip(*columns)]
    return header, rows


def _convergence(record: EvolutionRecord) -> dict:
    return {"converged": record.converged, "n_max": record.n_max,
            "relative_change": record.convergence_delta}


SUMMARY_COLUMNS = ["kind", "initial_level", "tf_s", "E0_J", "E_f_J", "E_f_over_E0", "n_max",
                   "converged_flag", "cooling_onset_s", "v_min_m_s", "stop_ratio", "adiab_timescale_s",
                   "adiab_ratio", "max_adiabaticity_ratio", "adiabatic_breakdown_s",
                   "energy_bound_ok", "energy_bound_first_violation_s", "minimal_work_ok",
                   "minimal_work_first_violation_s", "passive_initial_state"]


def summary_row(cfg: ExperimentConfig, kind: TrajectoryKind, level, record: EvolutionRecord) -> list:
    rep = diag.diagnose(cfg.system, record.trajectory, record, cfg.target_fraction,
                        cfg.cooling_epsilon, cfg.adiabaticity_threshold)
    return [kind.value, level, record.trajectory.tf, record.E0, record.E_f, record.cooling_ratio,
            record.n_max, record.converged, rep.cooling_onset, rep.v_min, rep.stop_ratio,
            rep.adiab_timescale, rep.adiab_ratio, rep.max_adiabaticity_ratio,
            rep.adiabatic_breakdown, rep.energy_bound_ok, rep.energy_bound_first_violation,
            rep.minimal_work_ok, rep.minimal_work_first_violation, rep.passive_initial_state]


def run_evolve(cfg: ExperimentConfig, out_dir, jobs: Optional[int] = None) -> RunOutcome:
    """One record file per (trajectory kind, initial level), a summary and a manifest."""
    if cfg.engine == "tg":
        return run_tg(cfg, out_dir, jobs)
    started = utc_now()
    levels = _levels(cfg)
    pairs = [(kind, level) for kind in cfg.kinds for level in levels]
    times = sample_times(cfg, cfg.tf)
    records = parallel_map(_evolve_task, [(cfg, cfg.trajectory(k), n, times) for k, n in pairs], jobs)
    outcome = RunOutcome("evolve", Path(out_dir))
    with OutputDir(out_dir) as out:
        convergence = {}
        summary = []
        for (kind, level), record in zip(pairs, records):
            name = f"{cfg.prefix}_{kind.value}_n{level}.csv"
            write_csv(out.path(name), *record_table(record, cfg.dimensionless))
            convergence[name] = _convergence(record)
            summary.append(summary_row(cfg, kind, level, record))
            if not record.converged:
                outcome.messages.append(f"{name}: basis not converged at N={record.n_max}")
        write_csv(out.path(f"{cfg.prefix}_summary.csv"), SUMMARY_COLUMNS, summary)
        out.write_manifest(_manifest(cfg, "evolve", started, convergence=convergence))
        outcome.files = list(out.files)
    return outcome


SWEEP_COLUMNS = ["tf_s", "E_f_J", "E_f_over_E0", "stop_ratio", "adiab_ratio", "converged_flag"]


def _sweep_point(task):
    cfg, kind, tf = task
    traj = cfg.trajectory(kind, tf)
    levels = _levels(cfg)
    records = [evolve(cfg.system, traj, evolver_config(cfg, n, [0.0, tf])) for n in levels]
    E0 = sum(r.E0 for r in records)
    E_f = sum(r.E_f for r in records)
    converged = all(bool(r.converged) for r in records)
    t_ad = diag.adiabaticity_timescale(cfg.system, traj.Lf)
    return [tf, E_f, E_f / E0, diag.stop_condition_ratio(cfg.system, traj), t_ad / tf, converged]


def sweep_rows(cfg: ExperimentConfig, kind: TrajectoryKind, jobs: Optional[int] = None) -> list:
    tfs = cfg.sweep_tf if cfg.sweep_tf else (cfg.tf,)
    return parallel_map(_sweep_point, [(cfg, kind, tf) for tf in sorted(tfs)], jobs)


def run_sweep(cfg: ExperimentConfig, out_dir, jobs: Optional[int] = None) -> RunOutcome:
    """sweep_<kind>.csv per trajectory kind, one row per tf in ascending order.

    With a TG engine each row holds the N-particle energy sum.
    """
    if cfg.engine == "single" and len(cfg.initial_levels) != 1:
        raise ValueError("a tf sweep needs exactly one initial_level (or tg_particles)")
    _levels(cfg)
    started = utc_now()
    tables = {kind: sweep_rows(cfg, kind, jobs) for kind in cfg.kinds}
    outcome = RunOutcome("sweep-tf", Path(out_dir))
    with OutputDir(out_dir) as out:
        flags = {}
        for kind, rows in tables.items():
            name = f"sweep_{kind.value}.csv"
            write_csv(out.path(name), SWEEP_COLUMNS, rows)
            flags[name] = {repr(r[0]): bool(r[-1]) for r in rows}
            for r in rows:
                if not r[-1]:
                    outcome.messages.append(f"{name}: tf={r[0]!r} not converged")
        out.write_manifest(_manifest(cfg, "sweep-tf", started, convergence=flags,
                                     engine=cfg.engine, tg_particles=cfg.tg_particles))
        outcome.files = list(out.files)
    return outcome


def tg_table(records: Sequence[EvolutionRecord]):
    total = diag.tonks_girardeau_energy(records)
    adiab = diag.tonks_girardeau_energy([replace(r, E_avg=r.E_adiab) for r in records])
    N = len(records)
    header = ["t_s", "L_m", "E_TG_J", "E_TG_adiab_J", "E_1_J"] + [f"E_n{n}_J" for n in range(1, N + 1)] \
        + ["norm_error"]
    norm_error = np.max([r.norm_error for r in records], axis=0)
    columns = [records[0].t, records[0].L, total, adiab, records[0].E_1] + [r.E_avg for r in records] \
        + [norm_error]
    return header, [list(row) for row in zip(*columns)]


def run_tg(cfg: ExperimentConfig, out_dir, jobs: Optional[int] = None) -> RunOutcome:
    """Tonks-Girardeau energies as the sum of independently evolved levels n = 1..N."""
    if cfg.engine != "tg":
        raise ValueError("the tg command needs [evolver] tg_particles")
    started = utc_now()
    levels = _levels(cfg)
    times = sample_times(cfg, cfg.tf)
    tasks = [(cfg, cfg.trajectory(k), n, times) for k in cfg.kinds for n in levels]
    records = parallel_map(_evolve_task, tasks, jobs)
    outcome = RunOutcome("tg", Path(out_dir))
    with OutputDir(out_dir) as out:
        convergence = {}
        summary = []
        for i, kind in enumerate(cfg.kinds):
            group = records[i * len(levels):(i + 1) * len(levels)]
            name = f"{cfg.prefix}_{kind.value}_tg.csv"
            header, rows = tg_table(group)
            write_csv(out.path(name), header, rows)
            convergence[name] = {f"n{n}": _convergence(r) for n, r in zip(levels, group)}
            E0, Ef = rows[0][2], rows[-1][2]
            summary.append([kind.value, len(levels), cfg.tf, E0, Ef, Ef / E0,
                            all(bool(r.converged) for r in group)])
        write_csv(out.path(f"{cfg.prefix}_tg_summary.csv"),
                  ["kind", "particles", "tf_s", "E0_J", "E_f_J", "E_f_over_E0", "converged_flag"],
                  summary)
        out.write_manifest(_manifest(cfg, "tg", started, convergence=convergence))
        outcome.files = list(out.files)
    return outcome


CLASSICAL_COLUMNS = ["particle", "v0_m_s", "bounces", "v_final_m_s", "t_last_s", "ke_ratio", "stopped"]


def classical_table(result) -> list:
    rows = []
    ratio = (result.v_final / result.v0) ** 2
    stopped = np.abs(result.v_final) < result.stop_threshold * np.abs(result.v0)
    for i in range(result.v0.size):
        t_last = result.last_collision_time[i]
        rows.append([i, result.v0[i], result.bounce_count[i], result.v_final[i],
                     None if np.isnan(t_last) else t_last, ratio[i], bool(stopped[i])])
    t_last = result.last_collision_time
    rows.append(["summary", float(np.mean(np.abs(result.v0))), float(np.mean(result.bounce_count)),
                 float(np.mean(np.abs(result.v_final))),
                 None if np.all(np.isnan(t_last)) else float(np.nanmax(t_last)),
                 result.mean_final_kinetic / result.mean_initial_kinetic, result.stopped_fraction])
    return rows


def run_classical(cfg: ExperimentConfig, out_dir, seed: Optional[int] = None) -> RunOutcome:
    """Per-particle rows plus a summary row for every trajectory kind, all from the same seed.

    The summary row holds ensemble means (|v0|, bounces, |v_final|), the
    latest collision, the ratio of mean kinetic energies and the stopped
    fraction.
    """
    spec = cfg.classical
    if spec is None:
        raise ValueError("the classical command needs a [classical] section")
    seed = spec.seed if seed is None else seed
    started = utc_now()
    dist = VelocityDistribution(spec.distribution, spec.v_low, spec.v_high)
    horizon = cfg.t_end if cfg.t_end is not None else cfg.tf
    results = {kind: run_ensemble(dist, spec.particles, seed, cfg.trajectory(kind), x0=spec.x0,
                                  horizon=horizon, mass=cfg.system.mass,
                                  stop_threshold=spec.stop_threshold)
               for kind in cfg.kinds}
    outcome = RunOutcome("classical", Path(out_dir))
    with OutputDir(out_dir) as out:
        for kind, result in results.items():
            write_csv(out.path(f"{cfg.prefix}_{kind.value}_classical.csv"), CLASSICAL_COLUMNS,
                      classical_table(result))
        out.write_manifest(_manifest(cfg, "classical", started, seed=seed,
                                     classical={"distribution": spec.distribution,
                                                "v_low_m_s": spec.v_low, "v_high_m_s": spec.v_high,
                                                "particles": spec.particles, "x0_m": spec.x0,
                                                "x0_note": "release position inside the box",
                                                "horizon_s": horizon,
                                                "stop_threshold": spec.stop_threshold}))
        outcome.files = list(out.files)
    return outcome


def run_bounds(cfg: ExperimentConfig, out_dir, jobs: Optional[int] = None) -> RunOutcome:
    """Diagnostics for every (kind, level); trajectory-only criteria for classical configs.

    The outcome fails when the ground-level bound breaks anywhere or the
    minimal-work inequality breaks for a passive initial state.
    """
    started = utc_now()
    outcome = RunOutcome("bounds", Path(out_dir))
    blocks, rows = [], []
    header = ["kind", "initial_level"] + [k for k in diag.DiagnosticsReport.__dataclass_fields__]
    if cfg.engine == "classical":
        pairs = [(kind, None) for kind in cfg.kinds]
        records = [None] * len(pairs)
    else:
        levels = _levels(cfg)
        pairs = [(kind, n) for kind in cfg.kinds for n in levels]
        times = sample_times(cfg, cfg.tf)
        records = parallel_map(_evolve_task, [(cfg, cfg.trajectory(k), n, times) for k, n in pairs], jobs)
    for (kind, level), record in zip(pairs, records):
        rep = diag.diagnose(cfg.system, cfg.trajectory(kind), record, cfg.target_fraction,
                            cfg.cooling_epsilon, cfg.adiabaticity_threshold)
        row = rep.as_row()
        rows.append([kind.value, level] + list(row.values()))
        blocks.append(f"[{kind.value}" + ("" if level is None else f" n={level}") + "]\n" + rep.as_text())
        if rep.energy_bound_ok is False:
            outcome.ok = False
            outcome.messages.append(f"{kind.value} n={level}: <E> fell below E_1 at "
                                    f"t={rep.energy_bound_first_violation!r}")
        if rep.minimal_work_ok is False and rep.passive_initial_state:
            outcome.ok = False
            outcome.messages.append(f"{kind.value} n={level}: minimal-work inequality broken at "
                                    f"t={rep.minimal_work_first_violation!r}")
    with OutputDir(out_dir) as out:
        write_csv(out.path(f"{cfg.prefix}_bounds.csv"), header, rows)
        out.path(f"{cfg.prefix}_bounds.txt").write_text("\n".join(blocks))
        out.write_manifest(_manifest(cfg, "bounds", started, bounds_ok=outcome.ok))
        outcome.files = list(out.files)
    return outcome


ORACLE_COLUMNS = ["kind", "t", "E_evolver", "E_exact", "E_grid", "dev_evolver_exact",
                  "dev_evolver_grid", "dev_exact_grid"]


def _rel(a, b):
    if a is None or b is None:
        return None
    return abs(a - b) / abs(b)


def oracle_comparison(cfg: ExperimentConfig, traj: Trajectory, level: int) -> list:
    """Rows of pairwise relative deviations between the evolver, exact modes (linear only) and the grid."""
    times = np.linspace(0.0, traj.tf, cfg.oracle.samples)
    record = evolve(cfg.system, traj, evolver_config(cfg, level, times))
    exact = None
    if traj.kind is TrajectoryKind.LINEAR:
        exact = exact_linear_evolution(level, traj, times, cfg.system)
    grid = grid_propagate(cfg.system, traj, level, times,
                          GridSpec(cfg.oracle.grid_points, cfg.oracle.grid_steps)).energy
    rows = []
    for i, t in enumerate(times):
        e_ev = float(record.E_avg[i])
        e_ex = None if exact is None else float(exact[i])
        e_gr = float(grid[i])
        rows.append([traj.kind.value, float(t), e_ev, e_ex, e_gr, _rel(e_ev, e_ex), _rel(e_ev, e_gr),
                     _rel(e_ex, e_gr)])
    return rows


def check_oracle(cfg: ExperimentConfig, out_dir) -> RunOutcome:
    """Write the comparison table; the outcome fails when any deviation exceeds the oracle tolerance."""
    levels = _levels(cfg)
    started = utc_now()
    rows = []
    for kind in cfg.kinds:
        for level in levels:
            rows.extend(oracle_comparison(cfg, cfg.trajectory(kind), level))
    worst = max((d for r in rows for d in r[5:] if d is not None), default=0.0)
    outcome = RunOutcome("check-oracle", Path(out_dir), ok=worst <= cfg.oracle.tolerance)
    if not outcome.ok:
        outcome.messages.append(f"largest pairwise deviation {worst:.3g} exceeds {cfg.oracle.tolerance:g}")
    with OutputDir(out_dir) as out:
        write_csv(out.path(f"{cfg.prefix}_oracle.csv"), ORACLE_COLUMNS, rows)
        out.write_manifest(_manifest(cfg, "check-oracle", started, worst_deviation=worst,
                                     tolerance=cfg.oracle.tolerance, passed=outcome.ok))
        outcome.files = list(out.files)
    return outcome
