import math

import numpy as np
import pytest

from springhop.errors import (
    InvalidArgument,
    InvalidInitialState,
    NonFiniteState,
    StepSizeUnderflow,
)
from springhop.hybrid import (
    ConstantController,
    EventKind,
    Guard,
    HybridState,
    IntegratorOptions,
    Phase,
    integrate_until_event,
    simulate_hops,
)
from springhop.controllers import SlipHopController, fixed_angle_targeting
from springhop.energy import EnergyControllerConfig
from springhop.slip import SlipModel, SlipParams, apex_state

G = 9.81


class BallisticModel:
    """1-D point mass with an apex guard; closed-form parabola oracle."""

    def derivative(self, t, y, u, phase, aux):
        return np.array([y[1], -G])

    def guards(self, phase):
        return (Guard(EventKind.APEX.value, lambda t, y, u, aux: y[1], priority=2),)

    def reset(self, kind, t, y, u, phase, aux):
        return phase, y.copy(), aux.copy()

    def validate_initial(self, state):
        pass

    def check_state(self, t, y, phase, aux):
        pass

    def sample_extras(self, t, y, u, phase, aux):
        return {}


def test_ballistic_apex_event_matches_parabola():
    model = BallisticModel()
    s0 = HybridState(Phase.AERIAL.value, np.array([1.0]), np.array([1.0]))
    traj, ev = integrate_until_event(model, s0, ConstantController(), t_max=2.0)
    assert ev is not None and ev.kind == "apex"
    assert ev.t == pytest.approx(1.0 / G, abs=1e-9)
    assert ev.state_before.q[0] == pytest.approx(1.0 + 0.5 / G, abs=1e-9)


def test_slip_drop_touchdown_time_matches_free_fall():
    params = SlipParams(r0=0.8)
    model = SlipModel(params)
    s0 = apex_state(params, 1.0, 0.0)
    traj, ev = integrate_until_event(model, s0, ConstantController([0.0, 0.0]),
                                     t_max=2.0)
    assert ev.kind == "touchdown"
    assert ev.t == pytest.approx(math.sqrt(2 * 0.2 / G), abs=1e-6)
    assert ev.state_before.q[1] == pytest.approx(0.8, abs=1e-7)


def test_touchdown_guard_residual_below_tolerance():
    params = SlipParams(r0=0.8)
    model = SlipModel(params)
    s0 = apex_state(params, 1.0, 0.3)
    u = np.array([0.0, 0.1])
    traj, ev = integrate_until_event(model, s0, ConstantController(u), t_max=2.0)
    assert ev.kind == "touchdown"
    foot_z = ev.state_before.q[1] - params.r0 * math.cos(u[1])
    assert abs(foot_z) <= 1e-7


def test_initial_state_past_guard_rejected():
    params = SlipParams(r0=0.8)
    model = SlipModel(params)
    s0 = apex_state(params, 0.5, 0.0)  # foot would start below ground
    with pytest.raises(InvalidInitialState):
        integrate_until_event(model, s0, ConstantController([0.0, 0.0]), t_max=1.0)


def test_reverse_integration_recovers_pre_event_state():
    params = SlipParams(r0=0.8)
    model = SlipModel(params)
    s0 = apex_state(params, 1.0, 0.2)
    traj, ev = integrate_until_event(model, s0, ConstantController([0.0, 0.0]),
                                     t_max=2.0)

    class Reversed(BallisticModel):
        def derivative(self, t, y, u, phase, aux):
            return -np.array([y[2], y[3], 0.0, -G])

        def guards(self, phase):
            return ()

    rev = Reversed()
    state = HybridState(Phase.AERIAL.value, ev.state_before.q, ev.state_before.v, 0.0)
    back, _ = integrate_until_event(rev, state, ConstantController([0.0, 0.0]),
                                    t_max=ev.t)
    final = back.samples[-1]
    y_back = np.concatenate([final.q, final.v])
    y0 = s0.y
    assert np.allclose(y_back, y0, rtol=1e-6, atol=1e-9)


def test_tolerance_ladder_error_decreases_monotonically():
    # Smooth oscillatory stance arc (a ballistic parabola is integrated
    # exactly by a fifth-order method, so it cannot rank tolerances).  The
    # radial amplitude stays inside the compression range, away from the
    # unilateral-force kink.  Tolerances are decade-spaced: with only tens
    # of adaptive steps, 2x-spaced ladders alias through step-count
    # quantization even though the error scales correctly.
    params = SlipParams(d_s=0.0)
    model = SlipModel(params)
    y0 = np.array([0.295, 0.0, -0.13, 0.0])
    aux = np.array([0.0, 0.0])
    t_end = 0.5

    def final_state(abs_tol, rel_tol):
        # One long control window so the error tolerance, not the sampling
        # grid, limits the step size.
        opts = IntegratorOptions(abs_tol=abs_tol, rel_tol=rel_tol,
                                 control_rate_hz=1.0, first_step=1e-3)
        s0 = HybridState(Phase.STANCE.value, y0[:2].copy(), y0[2:].copy(),
                         0.0, aux.copy())
        traj, ev = integrate_until_event(model, s0, ConstantController([0.0, 0.0]),
                                         guards=(), t_max=t_end, opts=opts)
        last = traj.samples[-1]
        return np.concatenate([last.q, last.v])

    ref = final_state(1e-13, 1e-13)
    errs = []
    for rtol in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        got = final_state(1e-14, rtol)
        errs.append(float(np.max(np.abs(got - ref))))
    assert all(a > b for a, b in zip(errs, errs[1:])), errs


def test_conservative_slip_energy_constant_over_hop():
    params = SlipParams(d_s=0.0)
    model = SlipModel(params)
    controller = ConstantController([0.0, 0.0])
    state = apex_state(params, 0.5, 0.0)
    traj = simulate_hops(model, state, controller, 1, t_max=5.0)
    energies = []
    for ev in traj.events:
        energies.append(model.mechanical_energy(ev.state_before))
        energies.append(model.mechanical_energy(ev.state_after))
    e0 = model.mechanical_energy(state)
    assert max(abs(e - e0) for e in energies) < 1e-6


def test_dissipative_slip_energy_nonincreasing():
    params = SlipParams()
    model = SlipModel(params)
    state = apex_state(params, 0.5, 0.0)
    traj = simulate_hops(model, state, ConstantController([0.0, 0.0]), 2, t_max=5.0)
    prev = None
    for s in traj.samples:
        st = HybridState(s.phase, s.q, s.v, s.t, s.aux)
        e = model.mechanical_energy(st)
        if prev is not None:
            assert e <= prev + 1e-9
        prev = e


def test_zero_thrust_apex_heights_strictly_decreasing():
    params = SlipParams()
    model = SlipModel(params)
    traj = simulate_hops(model, apex_state(params, 0.5, 0.0),
                         ConstantController([0.0, 0.0]), 4, t_max=10.0)
    heights = [ev.state_after.q[1] for ev in traj.events_of("apex")]
    assert len(heights) == 4
    assert all(a > b for a, b in zip(heights, heights[1:]))


def test_simulate_hops_rejects_nonpositive_step_count():
    params = SlipParams()
    model = SlipModel(params)
    with pytest.raises(InvalidArgument):
        simulate_hops(model, apex_state(params, 0.5, 0.0),
                      ConstantController([0.0, 0.0]), 0, t_max=1.0)


def test_fixed_point_hop_returns_to_initial_apex(slip_params, ctrl_05, gait_05):
    model = SlipModel(slip_params)
    controller = SlipHopController(
        ctrl_05, fixed_angle_targeting(gait_05.u_star), slip_params.r0)
    state = apex_state(slip_params, gait_05.apex_height, gait_05.xdot_star)
    traj = simulate_hops(model, state, controller, 1, t_max=5.0)
    apex = traj.events_of("apex")[-1].state_after
    assert apex.q[1] == pytest.approx(gait_05.apex_height, rel=1e-4)
    assert apex.v[0] == pytest.approx(gait_05.xdot_star, rel=1e-4)
    assert apex.v[1] == pytest.approx(0.0, abs=1e-9)


class BlowupModel(BallisticModel):
    def derivative(self, t, y, u, phase, aux):
        return np.array([y[0] * y[0], 0.0])

    def guards(self, phase):
        return ()


def test_nonfinite_state_raises():
    model = BlowupModel()
    s0 = HybridState(Phase.AERIAL.value, np.array([10.0]), np.array([0.0]))
    with pytest.raises((NonFiniteState, StepSizeUnderflow)):
        integrate_until_event(model, s0, ConstantController(), t_max=5.0,
                              opts=IntegratorOptions(min_step=1e-15))


def test_event_interleaving_consistent_with_phases(hop_slip_traj):
    order = [ev.kind for ev in hop_slip_traj.events]
    expected = {"apex": "touchdown", "touchdown": "liftoff", "liftoff": "apex"}
    # The run starts on the apex section, so the cycle begins at touchdown.
    assert order[0] == "touchdown"
    for a, b in zip(order, order[1:]):
        assert expected[a] == b
    for ev in hop_slip_traj.events:
        if ev.kind == "touchdown":
            assert ev.state_before.phase == "aerial"
            assert ev.state_after.phase == "stance"
        elif ev.kind == "liftoff":
            assert ev.state_before.phase == "stance"
            assert ev.state_after.phase == "aerial"


def test_sample_times_strictly_increasing_between_events(hop_slip_traj):
    ts = [s.t for s in hop_slip_traj.samples]
    # Repeats are allowed exactly at control-sample boundaries and events;
    # time must never decrease.
    assert all(b >= a for a, b in zip(ts, ts[1:]))
