import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from springhop.errors import InvalidArgument
from springhop.hybrid import ConstantController, HybridState, Phase, simulate_hops
from springhop.slip import (
    SlipModel,
    SlipParams,
    SwingTrajectory,
    apex_state,
    slip_aerial_derivative,
    slip_stance_derivative,
    spring_force,
    swing_angle,
    time_to_height,
    vertical_energy,
)

G = 9.81


def test_spring_force_examples():
    p = SlipParams()
    assert spring_force(0.0, 0.0, p) == 0.0
    assert spring_force(0.01, 0.0, p) == pytest.approx(48.485)
    # Fast extension can zero the force before the deformation does; the
    # ground cannot pull.
    assert spring_force(0.001, -1.0, p) == 0.0
    with pytest.raises(InvalidArgument):
        spring_force(-0.01, 0.0, p)


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 0.2), s_dot=st.floats(-5.0, 5.0))
def test_spring_force_never_negative(s, s_dot):
    assert spring_force(s, s_dot, SlipParams()) >= 0.0


def test_aerial_derivative_examples():
    p = SlipParams()
    y = np.array([0.0, 1.0, 0.3, -0.2])
    d = slip_aerial_derivative(y, 0.0, 0.0, p)
    assert np.allclose(d, [0.3, -0.2, 0.0, -G])
    d = slip_aerial_derivative(y, p.m * p.g, 0.0, p)
    assert d[2] == pytest.approx(0.0) and d[3] == pytest.approx(0.0)
    d = slip_aerial_derivative(y, 10.0, 0.1, p)
    assert d[2] == pytest.approx(-0.3993, abs=5e-5)
    assert d[3] == pytest.approx(-5.8300, abs=5e-5)


def test_stance_static_equilibrium():
    p = SlipParams()
    s_eq = p.m * p.g / p.k_s
    y = np.array([p.r0 - s_eq, 0.0, 0.0, 0.0])
    d = slip_stance_derivative(y, 0.0, p)
    assert np.allclose(d, 0.0, atol=1e-12)


def _cartesian_stance_acc(y, thrust, p, f_ext=(0.0, 0.0)):
    """Independent oracle: Newton's law in Cartesian coordinates for the
    pinned-foot point mass, converted to polar second derivatives."""
    r, theta, rd, td = y
    e_r = np.array([-math.sin(theta), math.cos(theta)])
    s = max(0.0, p.r0 - r)
    fs = spring_force(s, -rd, p)
    acc = ((fs + thrust) * e_r + np.array(f_ext)) / p.m + np.array([0.0, -p.g])
    # Kinematics of p = foot + r e_r(theta):
    #   a = (rdd - r td^2) e_r + (r tdd + 2 rd td) e_theta
    e_t = np.array([-math.cos(theta), -math.sin(theta)])
    rdd = float(acc @ e_r) + r * td * td
    tdd = (float(acc @ e_t) - 2.0 * rd * td) / r
    return rdd, tdd


def test_stance_polar_matches_cartesian_oracle():
    p = SlipParams()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        y = np.array([
            rng.uniform(0.21, 0.30),
            rng.uniform(-0.6, 0.6),
            rng.uniform(-3.0, 3.0),
            rng.uniform(-8.0, 8.0),
        ])
        thrust = rng.uniform(0.0, 25.0)
        f_ext = (rng.uniform(-10, 10), rng.uniform(-10, 10))
        d = slip_stance_derivative(y, thrust, p, f_ext)
        rdd, tdd = _cartesian_stance_acc(y, thrust, p, f_ext)
        assert d[2] == pytest.approx(rdd, rel=1e-9, abs=1e-9)
        assert d[3] == pytest.approx(tdd, rel=1e-9, abs=1e-9)


def test_angular_momentum_rate_equals_gravity_moment():
    p = SlipParams(d_s=0.0)
    y = np.array([0.28, 0.2, 0.1, 1.5])
    d = slip_stance_derivative(y, 0.0, p)
    r, theta, rd, td = y
    # L = m r^2 theta_dot about the pinned foot.
    l_dot = p.m * (2 * r * rd * td + r * r * d[3])
    gravity_moment = p.m * p.g * r * math.sin(theta)
    assert l_dot == pytest.approx(gravity_moment, rel=1e-12)


def test_swing_angle_endpoints_and_linear_midpoint():
    traj = SwingTrajectory(theta_liftoff=-0.2, theta_td_desired=0.3, duration=0.4)
    assert swing_angle(traj, 0.0) == pytest.approx(-0.2)
    assert swing_angle(traj, 0.4) == pytest.approx(0.3)
    assert swing_angle(traj, 1.0) == pytest.approx(0.3)  # clamps past the end
    # Equally spaced control points make the cubic the line itself.
    a, b = -0.2, 0.3
    linear = SwingTrajectory(a, b, 0.4, bezier_coeffs=(
        a, a + (b - a) / 3, a + 2 * (b - a) / 3, b))
    assert swing_angle(linear, 0.2) == pytest.approx(0.05, abs=1e-12)


def test_swing_angle_is_smooth_with_zero_end_rates():
    traj = SwingTrajectory(-0.2, 0.3, 1.0)
    eps = 1e-6
    rate0 = (traj.angle_at(eps) - traj.angle_at(0.0)) / eps
    rate1 = (traj.angle_at(1.0) - traj.angle_at(1.0 - eps)) / eps
    assert abs(rate0) < 1e-4 and abs(rate1) < 1e-4


def test_vertical_energy_examples():
    assert vertical_energy(1.1, 0.0, 2.5, 3.7091) == pytest.approx(10.2, rel=5e-4)
    assert vertical_energy(0.0, 0.0, 2.5, 9.81) == 0.0
    assert vertical_energy(0.0, 2.0, 2.5, 9.81) == pytest.approx(5.0)


@settings(max_examples=100, deadline=None)
@given(z=st.floats(0.2, 3.0), zd=st.floats(-6.0, 6.0))
def test_time_to_height_hits_target(z, zd):
    g = 3.7
    target = 0.15
    t = time_to_height(z, zd, target, g)
    if t > 0.0:
        z_t = z + zd * t - 0.5 * g * t * t
        assert z_t == pytest.approx(target, abs=1e-9)


def test_conservative_round_trip_apex(slip_params):
    p = SlipParams(d_s=0.0)
    model = SlipModel(p)
    traj = simulate_hops(model, apex_state(p, 0.5, 0.0),
                         ConstantController([0.0, 0.0]), 1, t_max=5.0)
    apex = traj.events_of("apex")[-1].state_after
    assert apex.q[1] == pytest.approx(0.5, abs=1e-5)


def test_symmetric_hop_stays_in_place(ctrl_05, slip_params):
    from springhop.controllers import SlipHopController, fixed_angle_targeting

    model = SlipModel(slip_params)
    controller = SlipHopController(ctrl_05, fixed_angle_targeting(0.0),
                                   slip_params.r0)
    state = apex_state(slip_params, 0.5, 0.0)
    traj = simulate_hops(model, state, controller, 2, t_max=5.0)
    for s in traj.samples:
        assert abs(s.extras["x"]) < 1e-10
    final_apex = traj.events_of("apex")[-1].state_after
    assert abs(final_apex.v[0]) < 1e-8


def test_stance_sample_grf_is_axial_and_unilateral(hop_slip_traj):
    for s in hop_slip_traj.samples:
        if s.phase == Phase.STANCE.value:
            assert s.extras["grf_z"] >= 0.0
            # Axial force: GRF parallel to the leg.
            r, theta = s.q
            if s.extras["grf_z"] > 1e-9:
                ratio = s.extras["grf_x"] / s.extras["grf_z"]
                assert ratio == pytest.approx(-math.tan(theta), abs=1e-9)


def test_liftoff_never_after_full_extension(hop_slip_traj):
    for ev in hop_slip_traj.events_of("liftoff"):
        assert ev.state_before.q[0] <= SlipParams().r0 + 1e-9
