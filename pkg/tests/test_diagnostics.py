import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from expandbox.diagnostics import (adiabatic_action_margin, adiabaticity_breakdown_time, adiabaticity_ratio,
                                   adiabaticity_timescale, cooling_onset, diagnose, energy_bound_check,
                                   is_passive, min_final_length, minimal_stoppable_velocity,
                                   minimal_work_check, quasi_velocity, stop_condition_ratio,
                                   tonks_girardeau_energy)
from expandbox.evolver import EvolverConfig, evolve, instantaneous_energy
from expandbox.trajectory import Trajectory
from expandbox.units import PhysicalSystem

RB = PhysicalSystem.rb87()
DIMLESS = PhysicalSystem.dimensionless()
UM = 1e-6
HBAR_CODATA = 1.054571817e-34
M_RB = 87 * 1.66053906660e-27


@pytest.fixture(scope="module")
def fig2a_sqrt():
    return evolve(RB, Trajectory.square_root(3 * UM, 100 * UM, 0.3), EvolverConfig(samples=601))


@pytest.fixture(scope="module")
def fig4_sqrt_excited():
    traj = Trajectory.square_root(3 * UM, 100 * UM, 1.0)
    return evolve(RB, traj, EvolverConfig(initial_level=2, samples=401))


def test_minimal_stoppable_velocity():
    assert minimal_stoppable_velocity(Trajectory.linear(3 * UM, 100 * UM, 0.3)) == pytest.approx(333.3 * UM, rel=2e-4)
    assert minimal_stoppable_velocity(Trajectory.linear(1, 2, 1)) == 2.0
    v = minimal_stoppable_velocity(Trajectory.square_root(1, 5, 3))
    assert minimal_stoppable_velocity(Trajectory.square_root(1, 5, 6)) == pytest.approx(v / 2)


def test_stop_condition_ratio_values():
    traj = Trajectory.linear(3 * UM, 100 * UM, 0.3)
    ratio = stop_condition_ratio(RB, traj)
    assert ratio == pytest.approx(M_RB * 100 * UM * 3 * UM / (0.3 * math.pi * HBAR_CODATA), rel=1e-8)
    assert ratio == pytest.approx(0.436, rel=2e-3)
    assert quasi_velocity(RB, 3 * UM) == pytest.approx(764 * UM, rel=1e-3)
    assert stop_condition_ratio(RB, Trajectory.linear(3 * UM, 200 * UM, 0.3)) == pytest.approx(2 * ratio)


@given(L0=st.floats(1e-7, 1e-5), k=st.floats(1.5, 100), tf=st.floats(1e-3, 10))
def test_stop_ratio_is_velocity_ratio(L0, k, tf):
    traj = Trajectory.square_root(L0, k * L0, tf)
    expected = minimal_stoppable_velocity(traj) / quasi_velocity(RB, L0)
    assert stop_condition_ratio(RB, traj) == pytest.approx(expected, rel=1e-14)


def test_adiabaticity_timescale():
    assert adiabaticity_timescale(RB, 100 * UM) == pytest.approx(1.23, rel=5e-3)
    assert adiabaticity_timescale(RB, 50 * UM) == pytest.approx(0.31, rel=1e-2)
    assert adiabaticity_timescale(RB, 25 * UM) == pytest.approx(adiabaticity_timescale(RB, 100 * UM) / 16)
    with pytest.raises(ValueError):
        adiabaticity_timescale(RB, 0.0)


def test_action_margin_is_timescale_ratio():
    traj = Trajectory.linear(3 * UM, 50 * UM, 1.0)
    margin = adiabatic_action_margin(RB, traj)
    assert margin == pytest.approx(traj.tf / adiabaticity_timescale(RB, traj.Lf), rel=1e-12)
    assert margin > 1


def test_adiabaticity_ratio_examples():
    with pytest.raises(ValueError):
        adiabaticity_ratio(1, 1, Trajectory.linear(1, 2, 1), DIMLESS, 0.5)
    assert adiabaticity_ratio(2, 1, Trajectory.linear(1, 1, 1), DIMLESS, 0.5) == 0.0
    lin = Trajectory.linear(3 * UM, 100 * UM, 0.3)
    at_tf = adiabaticity_ratio(2, 1, lin, RB, 0.3)
    formula = 8 / (9 * math.pi) * M_RB * (100 * UM) ** 2 / (math.pi * HBAR_CODATA * 0.3)
    assert at_tf == pytest.approx(formula * (1 - 0.03), rel=1e-7)
    assert at_tf == pytest.approx(formula, rel=0.05)
    # adjacent pairs scale as 4k(k-1)/(2k-1)**2, so (10, 9) sits slightly above (2, 1)
    assert adiabaticity_ratio(10, 9, lin, RB, 0.3) / at_tf == pytest.approx((180 / 361) / (4 / 9), rel=1e-12)
    assert at_tf > 10 * adiabaticity_ratio(10, 1, lin, RB, 0.3)


def test_adiabaticity_breakdown():
    lin = Trajectory.linear(3 * UM, 100 * UM, 0.3)
    times = np.linspace(0, 0.3, 301)
    assert adiabaticity_breakdown_time(lin, RB, times) == 0.0
    slow = Trajectory.linear(3 * UM, 10 * UM, 100.0)
    assert adiabaticity_breakdown_time(slow, RB, np.linspace(0, 100, 11)) is None


def test_min_final_length():
    L0 = 3 * UM
    E1 = instantaneous_energy(1, L0, RB)
    assert min_final_length(RB, E1 / 100) == pytest.approx(10 * L0, rel=1e-12)
    assert min_final_length(RB, E1) == pytest.approx(L0, rel=1e-12)
    assert min_final_length(RB, 1e-60) > 1.0
    with pytest.raises(ValueError):
        min_final_length(RB, 0.0)


def test_cooling_onset_flat_record_is_none():
    rec = evolve(DIMLESS, Trajectory.linear(1, 1, 1), EvolverConfig(samples=201))
    assert cooling_onset(rec) is None


def test_cooling_onset_fig2a(fig2a_sqrt):
    assert 0.01 <= cooling_onset(fig2a_sqrt, epsilon=0.2) <= 0.04
    # a 5% drop already happens during the sudden start
    assert cooling_onset(fig2a_sqrt) < 0.01


def test_cooling_onset_adiabatic_is_first_sample():
    rec = evolve(DIMLESS, Trajectory.linear(1, 2, 1e4), EvolverConfig(samples=201))
    assert cooling_onset(rec, epsilon=1e-4) == rec.t[1]
    with pytest.raises(ValueError):
        cooling_onset(rec, epsilon=0.0)


def test_bounds_hold_for_ground_state(fig2a_sqrt):
    assert energy_bound_check(fig2a_sqrt).ok
    check = minimal_work_check(fig2a_sqrt)
    assert check.ok and check.first_violation is None
    assert is_passive(fig2a_sqrt.initial_populations)


def test_excited_start_violates_minimal_work(fig4_sqrt_excited):
    assert not is_passive(fig4_sqrt_excited.initial_populations)
    check = minimal_work_check(fig4_sqrt_excited)
    assert not check.ok
    assert 0 < check.first_violation <= 1.0
    assert check.worst_margin < 0
    assert energy_bound_check(fig4_sqrt_excited).ok


def test_passive_examples():
    assert is_passive([0.5, 0.3, 0.2])
    assert is_passive([1.0, 0.0])
    assert not is_passive([0.0, 1.0, 0.0])


def _tg_records(traj, n, samples=21):
    return [evolve(DIMLESS, traj, EvolverConfig(initial_level=k, n_max=64, samples=samples)) for k in range(1, n + 1)]


def test_tonks_girardeau_sum():
    traj = Trajectory.square_root(1, 3, 2)
    recs = _tg_records(traj, 5)
    total = tonks_girardeau_energy(recs)
    assert total[0] == pytest.approx(55 * instantaneous_energy(1, 1.0), rel=1e-12)
    np.testing.assert_array_equal(tonks_girardeau_energy(recs[:1]), recs[0].E_avg)
    # re-running one level independently changes nothing
    again = evolve(DIMLESS, traj, EvolverConfig(initial_level=3, n_max=64, samples=21))
    np.testing.assert_allclose(tonks_girardeau_energy(recs[:2] + [again] + recs[3:]), total, rtol=1e-12)


def test_tonks_girardeau_rejects_mismatched_grids():
    traj = Trajectory.linear(1, 2, 1)
    a = evolve(DIMLESS, traj, EvolverConfig(samples=5))
    b = evolve(DIMLESS, traj, EvolverConfig(samples=6, initial_level=2))
    with pytest.raises(ValueError):
        tonks_girardeau_energy([a, b])
    with pytest.raises(ValueError):
        tonks_girardeau_energy([])


def test_diagnose_report(fig2a_sqrt):
    traj = Trajectory.square_root(3 * UM, 100 * UM, 0.3)
    rep = diagnose(RB, traj, fig2a_sqrt)
    assert rep.v_min > 0 and rep.quasi_velocity > 0 and rep.adiab_timescale > 0
    assert rep.adiab_ratio == pytest.approx(rep.adiab_timescale / 0.3)
    assert rep.min_Lf_for_target == pytest.approx(30 * UM, rel=1e-12)
    assert rep.energy_bound_ok and rep.minimal_work_ok and rep.passive_initial_state
    text = rep.as_text()
    assert "stop_ratio = " in text and "cooling_onset_epsilon = 0.05" in text
    assert set(rep.as_row()) >= {"v_min", "cooling_onset", "adiab_ratio"}
    bare = diagnose(RB, traj)
    assert bare.energy_bound_ok is None and "energy_bound_ok = none" in bare.as_text()
