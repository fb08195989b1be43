import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from expandbox.trajectory import DomainError, Trajectory, TrajectoryKind, phase_integral, wall_position, wall_velocity
from expandbox.units import PRESETS, PhysicalSystem, UnitScaling

# CODATA 2018, typed in independently of scipy.constants
HBAR_CODATA = 1.054571817e-34
U_CODATA = 1.66053906660e-27

UM = 1e-6
FIG2A = dict(L0=3 * UM, Lf=100 * UM, tf=0.3)


def test_rb87_mass_is_87_atomic_units():
    assert PhysicalSystem.rb87().mass == pytest.approx(87 * U_CODATA, rel=1e-9)
    assert PhysicalSystem.rb87().hbar == pytest.approx(HBAR_CODATA, rel=1e-12)


def test_presets_and_validation():
    assert PRESETS["dimensionless"]().is_dimensionless
    with pytest.raises(ValueError):
        PhysicalSystem(mass=0.0)
    with pytest.raises(ValueError):
        PhysicalSystem(mass=1.0, hbar=-1.0)


def test_rb87_time_unit_at_3um():
    s = PhysicalSystem.rb87().scaling(3 * UM)
    expected = 87 * U_CODATA * (3 * UM) ** 2 / HBAR_CODATA
    assert s.time_unit == pytest.approx(expected, rel=1e-9)
    assert s.time_unit == pytest.approx(0.012329, rel=1e-4)


@given(mass=st.floats(1e-30, 1e-20), L0=st.floats(1e-9, 1e-3))
def test_time_times_energy_unit_is_hbar(mass, L0):
    s = UnitScaling.for_system(PhysicalSystem(mass=mass), L0)
    assert s.time_unit * s.energy_unit == pytest.approx(HBAR_CODATA, rel=1e-12)


@given(value=st.floats(1e-40, 1e10), kind=st.sampled_from(["length", "time", "energy", "velocity"]))
def test_unit_round_trip(value, kind):
    s = PhysicalSystem.rb87().scaling(3 * UM)
    assert s.to_si(s.to_dimensionless(value, kind), kind) == pytest.approx(value, rel=1e-12)


def test_unknown_quantity_kind():
    with pytest.raises(ValueError):
        PhysicalSystem.rb87().scaling(1e-6).to_si(1.0, "charge")


def test_boundary_values():
    lin = Trajectory.linear(**FIG2A)
    sq = Trajectory.square_root(**FIG2A)
    assert wall_position(lin, 0.0) == pytest.approx(3 * UM, rel=1e-15)
    assert wall_position(sq, 0.0) == pytest.approx(3 * UM, rel=1e-15)
    assert wall_position(sq, 0.3) == 100 * UM
    assert wall_position(lin, 0.3) == 100 * UM


def test_square_root_midpoint():
    sq = Trajectory.square_root(**FIG2A)
    assert wall_position(sq, 0.15) == pytest.approx(math.sqrt(9 + 4995.5) * UM, rel=1e-12)
    assert wall_position(sq, 0.15) == pytest.approx(70.74 * UM, rel=1e-4)


def test_wall_velocities():
    lin = Trajectory.linear(**FIG2A)
    sq = Trajectory.square_root(**FIG2A)
    assert wall_velocity(lin, 0.1) == pytest.approx(323.33 * UM, rel=1e-4)
    assert wall_velocity(sq, 0.0) == pytest.approx((1e-8 - 9e-12) / (2 * 0.3 * 3e-6), rel=1e-12)
    assert wall_velocity(sq, 0.0) == pytest.approx(5554 * UM, rel=1e-3)
    assert wall_velocity(sq, 0.3) == pytest.approx(166.5 * UM, rel=1e-3)
    assert wall_velocity(sq, 0.3) == pytest.approx(100 * UM * (1 - 0.03**2) / (2 * 0.3), rel=1e-12)


def test_phase_integral_closed_forms():
    assert phase_integral(Trajectory.linear(1, 2, 1), 1.0) == pytest.approx(0.5, rel=1e-15)
    assert phase_integral(Trajectory.square_root(1, 2, 1), 1.0) == pytest.approx(math.log(4) / 3, rel=1e-14)
    for traj in (Trajectory.linear(1, 2, 1), Trajectory.square_root(1, 2, 1)):
        assert phase_integral(traj, 0.0) == 0.0


@pytest.mark.parametrize("make", [Trajectory.linear, Trajectory.square_root])
@pytest.mark.parametrize("params", [(1, 2, 1), (3e-6, 100e-6, 0.3), (1, 50, 7)])
def test_phase_integral_matches_quadrature(make, params):
    traj = make(*params)
    for frac in (0.1, 0.5, 1.0):
        t = frac * traj.tf
        ref, _ = integrate.quad(lambda s: float(traj.position(s)) ** -2, 0, t, epsabs=0, epsrel=1e-13, limit=200)
        assert traj.phase_integral(t) == pytest.approx(ref, rel=1e-9)


def test_custom_phase_uses_quadrature():
    hook = lambda t: (1.0 + t * t, 2.0 * t)
    traj = Trajectory.custom(hook, 1.0, 2.0, 1.0)
    assert traj.phase_integral(1.0) == pytest.approx(0.25 + math.pi / 8, rel=1e-9)
    assert traj.time_at_phase(traj.phase_integral(0.6)) == pytest.approx(0.6, rel=1e-9)


@pytest.mark.parametrize("make", [Trajectory.linear, Trajectory.square_root])
def test_velocity_matches_finite_difference(make):
    traj = make(*FIG2A.values())
    rng = np.random.default_rng(1)
    ts = rng.uniform(0.01 * traj.tf, 0.99 * traj.tf, 1000)
    h = 1e-6 * traj.tf
    fd = (traj.position(ts + h) - traj.position(ts - h)) / (2 * h)
    np.testing.assert_allclose(traj.velocity(ts), fd, rtol=1e-6)


@settings(max_examples=60)
@given(L0=st.floats(0.01, 10), ratio=st.floats(1.01, 100), tf=st.floats(0.01, 100), frac=st.floats(0.001, 0.999))
def test_square_root_ahead_of_linear(L0, ratio, tf, frac):
    lin = Trajectory.linear(L0, L0 * ratio, tf)
    sq = Trajectory.square_root(L0, L0 * ratio, tf)
    t = frac * tf
    assert sq.position(t) >= lin.position(t) * (1 - 1e-14)


@settings(max_examples=60)
@given(L0=st.floats(0.1, 10), ratio=st.floats(1.01, 100), tf=st.floats(0.01, 100), frac=st.floats(0, 1.5))
def test_time_at_phase_inverts(L0, ratio, tf, frac):
    for traj in (Trajectory.linear(L0, L0 * ratio, tf), Trajectory.square_root(L0, L0 * ratio, tf)):
        t = frac * tf
        assert traj.time_at_phase(traj.phase_integral(t)) == pytest.approx(t, rel=1e-9, abs=1e-12 * tf)


def test_strictly_increasing():
    for traj in (Trajectory.linear(1, 2, 1), Trajectory.square_root(1, 2, 1)):
        L = traj.position(np.linspace(0, 1, 1001))
        assert np.all(np.diff(L) > 0)


def test_hold_after_tf():
    traj = Trajectory.linear(1, 2, 1)
    assert traj.position(3.0) == 2.0
    assert traj.velocity(3.0) == 0.0
    assert traj.velocity(1.0) == 1.0
    assert traj.phase_integral(3.0) == pytest.approx(0.5 + 2.0 / 4.0)


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        Trajectory.linear(1, 2, 1).position(-0.1)
    with pytest.raises(DomainError):
        Trajectory.square_root(1, 2, 1).velocity(np.array([0.0, -1e-9]))


@pytest.mark.parametrize("args", [(0, 1, 1), (2, 1, 1), (1, 2, 0), (-1, 2, 1)])
def test_invalid_parameters(args):
    with pytest.raises(ValueError):
        Trajectory.linear(*args)


def test_custom_requires_hook():
    with pytest.raises(ValueError):
        Trajectory(TrajectoryKind.CUSTOM, 1.0, 2.0, 1.0)


def test_kind_aliases():
    assert TrajectoryKind.parse("Square-Root") is TrajectoryKind.SQUARE_ROOT
    assert TrajectoryKind.parse("lin") is TrajectoryKind.LINEAR
    with pytest.raises(ValueError):
        TrajectoryKind.parse("cubic")


def test_scaled_trajectory():
    traj = Trajectory.square_root(**FIG2A)
    s = PhysicalSystem.rb87().scaling(traj.L0)
    d = traj.scaled(s.length_unit, s.time_unit)
    assert d.L0 == pytest.approx(1.0)
    t = 0.1
    assert d.position(t / s.time_unit) * s.length_unit == pytest.approx(traj.position(t), rel=1e-12)
    assert d.phase_integral(t / s.time_unit) == pytest.approx(
        traj.phase_integral(t) * s.length_unit**2 / s.time_unit, rel=1e-12)
