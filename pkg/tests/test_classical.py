import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expandbox.classical import (ClassicalParticle, CollisionError, VelocityDistribution, Wall,
                                 next_collision, reflect, run_ensemble, run_particle)
from expandbox.trajectory import Trajectory

LIN = Trajectory.linear(0.01, 1.0, 1.0)
SQRT = Trajectory.square_root(0.01, 1.0, 1.0)
V_MIN = 1.0


def test_linear_crossing_closed_form():
    traj = Trajectory.linear(2.0, 5.0, 3.0)
    tc, wall = next_collision(ClassicalParticle(0.0, 4.0), traj)
    assert wall is Wall.MOVING
    assert tc == pytest.approx(2.0 / (4.0 - 1.0), rel=1e-15)


def test_resting_particle_never_collides():
    assert next_collision(ClassicalParticle(0.5, 0.0), LIN) is None
    assert next_collision(ClassicalParticle(0.5, 0.0), SQRT) is None


def test_minimal_velocity_catches_wall_at_tf():
    traj = Trajectory.linear(3e-6, 100e-6, 0.3)
    tc, wall = next_collision(ClassicalParticle(0.0, traj.Lf / traj.tf), traj)
    assert wall is Wall.MOVING and tc == pytest.approx(0.3, rel=1e-14)


def test_fixed_wall_crossing():
    tc, wall = next_collision(ClassicalParticle(0.3, -0.6, 1.0), Trajectory.linear(1, 2, 5))
    assert wall is Wall.FIXED and tc == pytest.approx(1.5)


def test_square_root_crossing_lies_on_wall():
    p = ClassicalParticle(0.0, 3.0)
    tc, wall = next_collision(p, SQRT)
    assert wall is Wall.MOVING
    assert 3.0 * tc == pytest.approx(float(SQRT.position(tc)), rel=1e-12)


def test_custom_law_uses_bracketing():
    traj = Trajectory.custom(lambda t: (1.0 + t * t, 2.0 * t), 1.0, 2.0, 1.0)
    tc, _ = next_collision(ClassicalParticle(0.0, 2.0), traj)
    assert 2.0 * tc == pytest.approx(1.0 + tc * tc, abs=1e-9)


def test_reflection_rules():
    assert reflect(-3.0, wall=Wall.FIXED) == 3.0
    assert reflect(5.0, 0.0) == -5.0
    assert reflect(2.0, 1.0) == 0.0
    with pytest.raises(CollisionError):
        reflect(0.5, 1.0)
    with pytest.raises(CollisionError):
        reflect(2.0, wall=Wall.FIXED)


def test_slow_particle_never_meets_mirror():
    res = run_particle(ClassicalParticle(0.0, 0.9 * V_MIN), LIN)
    assert res.moving_bounces == 0
    assert res.v_final == 0.9 * V_MIN


def test_linear_mirror_stops_twice_its_speed():
    traj = Trajectory.linear(1.0, 3.0, 2.0)
    res = run_particle(ClassicalParticle(0.0, 2.0), traj)
    assert res.bounce_count == 1
    assert res.v_final == 0.0


def test_square_root_mirror_stops_fast_particle():
    v0 = 50 * V_MIN
    res = run_particle(ClassicalParticle(0.0, v0), SQRT)
    assert res.kinetic_energy_ratio() < 1e-2


def test_horizon_before_tf_rejected():
    with pytest.raises(ValueError):
        run_particle(ClassicalParticle(0.0, 1.0), LIN, horizon=0.5)


def test_held_wall_after_tf():
    res = run_particle(ClassicalParticle(0.0, 0.5), LIN, horizon=10.0)
    # 0.5 * t = 1 at t = 2, then back to x = 0 at t = 4, ...
    assert res.bounce_count == 5
    assert abs(res.v_final) == 0.5


def test_bounce_cap():
    with pytest.raises(CollisionError):
        run_particle(ClassicalParticle(0.0, 30.0), LIN, horizon=100.0, max_bounces=10)


def _flights(start, summary, traj, horizon):
    t, x, v = start.t, start.x, start.v
    for tc, v_after in summary.history + [(horizon, None)]:
        yield t, tc, x, v
        x, v, t = x + v * (tc - t), v_after, tc


@settings(max_examples=40, deadline=None)
@given(v0=st.floats(0.1, 40.0), square=st.booleans())
def test_particle_stays_inside_box(v0, square):
    traj = SQRT if square else LIN
    start = ClassicalParticle(0.0, v0)
    res = run_particle(start, traj, horizon=1.5)
    for t0, t1, x, v in _flights(start, res, traj, 1.5):
        ts = np.linspace(t0, t1, 102)[1:-1]
        xs = x + v * (ts - t0)
        assert np.all(xs >= -1e-12)
        assert np.all(xs <= traj.position(ts) * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(v0=st.floats(0.1, 40.0), square=st.booleans())
def test_each_fast_bounce_cools(v0, square):
    traj = SQRT if square else LIN
    res = run_particle(ClassicalParticle(0.0, v0), traj)
    speed = v0
    for tc, v_after in res.history:
        w = float(traj.velocity(tc))
        if v_after <= 0 and speed > 2 * w and w > 0 and tc < traj.tf:
            assert abs(v_after) < speed
        speed = abs(v_after)


@settings(max_examples=60, deadline=None)
@given(v0=st.floats(2 * V_MIN, 200 * V_MIN))
def test_square_root_stops_every_fast_particle(v0):
    res = run_particle(ClassicalParticle(0.0, v0), SQRT)
    assert abs(res.v_final) <= v0 / 10


def test_linear_mirror_has_a_counterexample():
    res = run_particle(ClassicalParticle(0.0, 3 * V_MIN), LIN)
    assert abs(res.v_final) > 3 * V_MIN / 10


def test_ensemble_is_deterministic():
    dist = VelocityDistribution("uniform", 2.0, 10.0)
    a = run_ensemble(dist, 50, 11, SQRT)
    b = run_ensemble(dist, 50, 11, SQRT)
    assert np.array_equal(a.v0, b.v0) and np.array_equal(a.v_final, b.v_final)
    assert a.mean_final_kinetic == b.mean_final_kinetic
    assert not np.array_equal(a.v0, run_ensemble(dist, 50, 12, SQRT).v0)


def test_degenerate_ensemble_matches_single_particle():
    ens = run_ensemble(VelocityDistribution("fixed", 4.0), 3, 0, SQRT)
    single = run_particle(ClassicalParticle(0.0, 4.0), SQRT)
    assert np.all(ens.v_final == single.v_final)
    assert np.all(ens.bounce_count == single.bounce_count)


def test_slow_ensemble_keeps_its_energy():
    ens = run_ensemble(VelocityDistribution("uniform", 0.1, 0.9), 100, 3, LIN, mass=2.0)
    assert ens.mean_final_kinetic == pytest.approx(ens.mean_initial_kinetic, rel=1e-15)
    assert np.all(np.isnan(ens.last_collision_time))
    assert ens.stopped_fraction == 0.0


def test_square_root_ensemble_colder_than_linear():
    dist = VelocityDistribution("uniform", 2 * V_MIN, 10 * V_MIN)
    sq = run_ensemble(dist, 200, 5, SQRT)
    lin = run_ensemble(dist, 200, 5, LIN)
    assert np.array_equal(sq.v0, lin.v0)
    assert sq.mean_final_kinetic < lin.mean_final_kinetic
    assert sq.stopped_fraction == 1.0


def test_distribution_validation():
    with pytest.raises(ValueError):
        VelocityDistribution("gaussian", 1.0)
    with pytest.raises(ValueError):
        VelocityDistribution("uniform", 2.0, 1.0)
    with pytest.raises(ValueError):
        run_ensemble(VelocityDistribution("fixed", 1.0), 0, 0, LIN)


def test_catch_at_tf_then_held_wall():
    res = run_particle(ClassicalParticle(0.0, V_MIN), LIN, horizon=1.5)
    assert [v for _, v in res.history] == pytest.approx([0.98, -0.98])
    assert 0.0 <= res.x_final <= 1.0
