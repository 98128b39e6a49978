import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from springhop.energy import (
    VARIANT_INEQUALITY,
    VARIANT_RELAXED,
    EnergyControllerConfig,
    clf_terms,
    equivalent_gravity,
    solve_energy_qp,
    vertical_controller_step,
)
from springhop.errors import InvalidConfig, NonPositiveEquivalentGravity
from springhop.hybrid import Phase


def _config(lo=0.0, hi=25.0, p=0.0, gamma=5.0, kp=-5.0, q=1.0,
            variant=VARIANT_RELAXED):
    return EnergyControllerConfig(E_d=10.0, mass=2.5, Ft_min=lo, Ft_max=hi,
                                  g_e=5.0, Kp=kp, Q=q, gamma=gamma, p=p,
                                  variant=variant)


def test_equivalent_gravity_examples():
    assert equivalent_gravity(0.0, 2.5, 9.81) == 9.81
    g_e = equivalent_gravity(15.252, 2.5, 9.81)
    assert g_e == pytest.approx(3.7091, abs=2e-4)
    # Consistency: the implied energy at 1.1 m apex is 10.2 J.
    assert 2.5 * g_e * 1.1 == pytest.approx(10.2, rel=5e-4)
    assert equivalent_gravity(2.5 * 9.81 / 2, 2.5, 9.81) == pytest.approx(9.81 / 2)
    with pytest.raises(NonPositiveEquivalentGravity):
        equivalent_gravity(2.5 * 9.81, 2.5, 9.81)


def test_config_invariants():
    cfg = _config()
    assert cfg.P == pytest.approx(0.1)  # Q / (-2 Kp)
    with pytest.raises(InvalidConfig):
        _config(kp=1.0)
    with pytest.raises(InvalidConfig):
        _config(lo=30.0, hi=20.0)
    with pytest.raises(InvalidConfig):
        _config(gamma=-1.0)


def test_clf_terms_zero_error():
    terms = clf_terms(0.0, 2.0, _config())
    assert terms.a_clf == 0.0 and terms.b_clf == 0.0 and terms.V == 0.0


def test_clf_terms_sign_pushes_thrust_down_on_excess():
    # Excess energy while ascending: the constraint coefficient is positive,
    # so the equality/inequality drives the thrust toward its floor.
    terms = clf_terms(2.0, 1.5, _config())
    assert terms.a_clf > 0.0


def test_clf_vdot_identity_without_floor():
    # With a zero thrust floor and vertical thrust the drift term vanishes
    # and Vdot = 2 P eta g_eta F_t exactly.
    cfg = _config(lo=0.0)
    rng = np.random.default_rng(3)
    for _ in range(100):
        eta, zd, ft = rng.normal(size=3) * [3.0, 2.0, 10.0]
        terms = clf_terms(eta, zd, cfg)
        vdot = 2.0 * cfg.P * eta * (terms.f_eta + terms.g_eta * ft)
        assert vdot == pytest.approx(2.0 * cfg.P * eta * terms.g_eta * ft,
                                     abs=1e-12)


def test_qp_zero_error_holds_previous_thrust():
    cfg = _config(lo=5.0, hi=25.0)
    sol = solve_energy_qp(0.0, 1.0, 12.0, cfg)
    assert sol.delta == 0.0
    assert sol.F_t == 12.0


def test_qp_bound_clamp_reports_relaxation():
    cfg = _config(lo=5.0, hi=10.0, gamma=50.0)
    # Large deficit while ascending wants far more thrust than available.
    sol = solve_energy_qp(-8.0, 0.5, 6.0, cfg)
    assert sol.F_t == 10.0
    assert "upper" in sol.active_set
    assert sol.delta != 0.0


def _grid_objective_relaxed(terms, cfg, ft_prev, n=200001):
    f = np.linspace(cfg.Ft_min, cfg.Ft_max, n)
    delta = terms.a_clf * f - terms.b_clf
    obj = cfg.p * (f - ft_prev) ** 2 + delta ** 2
    return float(obj.min())


def _grid_objective_inequality(terms, cfg, n=200001):
    f = np.linspace(cfg.Ft_min, cfg.Ft_max, n)
    delta = np.maximum(0.0, terms.a_clf * f - terms.b_clf)
    obj = cfg.p * f ** 2 + delta ** 2
    return float(obj.min())


def _random_instances(n, seed=11):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        lo = rng.uniform(0.0, 12.0)
        hi = lo + rng.uniform(0.5, 25.0)
        p = float(rng.choice([0.0, rng.uniform(0.0, 2.0)]))
        cfg_kwargs = dict(lo=lo, hi=hi, p=p,
                          gamma=rng.uniform(0.5, 30.0),
                          kp=-rng.uniform(0.5, 10.0),
                          q=rng.uniform(0.1, 5.0))
        eta = rng.normal() * 4.0
        zd = rng.normal() * 3.0
        ft_prev = rng.uniform(lo, hi)
        tilt = math.cos(rng.uniform(-0.4, 0.4))
        yield cfg_kwargs, eta, zd, ft_prev, tilt


def test_qp_matches_grid_oracle_both_variants():
    for cfg_kwargs, eta, zd, ft_prev, tilt in _random_instances(1000):
        for variant in (VARIANT_RELAXED, VARIANT_INEQUALITY):
            cfg = _config(variant=variant, **cfg_kwargs)
            sol = solve_energy_qp(eta, zd, ft_prev, cfg, tilt)
            terms = clf_terms(eta, zd, cfg, tilt)
            assert cfg.Ft_min - 1e-12 <= sol.F_t <= cfg.Ft_max + 1e-12
            if variant == VARIANT_RELAXED:
                # Equality constraint holds exactly at the reported pair.
                assert abs(terms.a_clf * sol.F_t - terms.b_clf - sol.delta) <= 1e-9
                grid = _grid_objective_relaxed(terms, cfg, ft_prev)
            else:
                assert terms.a_clf * sol.F_t <= terms.b_clf + sol.delta + 1e-9
                grid = _grid_objective_inequality(terms, cfg)
            assert sol.objective <= grid + 1e-6


def test_closed_form_matches_generic_solver():
    for cfg_kwargs, eta, zd, ft_prev, tilt in _random_instances(1000, seed=23):
        cfg_kwargs["p"] = 0.0
        cfg = _config(variant=VARIANT_RELAXED, **cfg_kwargs)
        closed = solve_energy_qp(eta, zd, ft_prev, cfg, tilt)
        generic = solve_energy_qp(eta, zd, ft_prev, cfg, tilt, force_generic=True)
        assert closed.F_t == pytest.approx(generic.F_t, abs=1e-10)
        assert closed.delta == pytest.approx(generic.delta, abs=1e-10)


@settings(max_examples=150, deadline=None)
@given(eta=st.floats(-5, 5), zd=st.floats(-4, 4), p=st.floats(0, 2),
       ft_prev=st.floats(5, 20))
def test_relaxed_qp_objective_not_beaten_by_random_feasible_points(eta, zd, p,
                                                                   ft_prev):
    cfg = _config(lo=5.0, hi=20.0, p=p)
    sol = solve_energy_qp(eta, zd, ft_prev, cfg)
    terms = clf_terms(eta, zd, cfg)
    rng = np.random.default_rng(0)
    for f in rng.uniform(5.0, 20.0, size=32):
        d = terms.a_clf * f - terms.b_clf
        assert sol.objective <= p * (f - ft_prev) ** 2 + d * d + 1e-9


def test_stance_step_holds_thrust_floor():
    cfg = _config(lo=7.0, hi=20.0)
    ft, sol = vertical_controller_step(Phase.STANCE.value, 0.3, -1.0, 15.0, cfg)
    assert ft == 7.0
    assert sol.active_set == ("stance_hold",)


def test_aerial_step_regulates_energy_error():
    cfg = EnergyControllerConfig.for_apex(m=2.5, g=9.81, ft_min=15.2523,
                                          ft_max=22.0, apex_height=0.5)
    z_nom = cfg.apex_height
    ft, sol = vertical_controller_step(Phase.AERIAL.value, z_nom, 0.0,
                                       cfg.Ft_min, cfg)
    assert sol.eta == pytest.approx(0.0, abs=1e-12)
    assert ft == cfg.Ft_min


def test_saturated_excess_energy_logs_relaxation(hop_slip_traj):
    # Thrust cannot drop below its floor; any sample asking for less shows
    # a nonzero relaxation instead.
    saw_saturated = False
    for s in hop_slip_traj.samples:
        if s.phase != Phase.AERIAL.value:
            continue
        if s.extras.get("qp_active") == 1.0 and abs(s.extras["eta"]) > 1e-6:
            saw_saturated = True
            assert abs(s.extras["delta"]) > 0.0
    assert saw_saturated


def test_closed_loop_lyapunov_decay_between_samples(hop_slip_traj, ctrl_05):
    # Between consecutive control samples with zero relaxation and inactive
    # bounds, V decays at least at rate gamma (small tolerance for the
    # zero-order hold).  Only command instants carry fresh diagnostics.
    eps = 0.05
    samples = [s for s in hop_slip_traj.samples
               if s.phase == Phase.AERIAL.value
               and s.extras.get("ctrl_t") == s.t]
    checked = 0
    for a, b in zip(samples, samples[1:]):
        dt = b.t - a.t
        if dt <= 0 or dt > 0.01:
            continue
        if (a.extras.get("qp_active") == 0.0 and abs(a.extras["delta"]) < 1e-9
                and a.extras["V"] > 1e-8):
            bound = a.extras["V"] * math.exp(-ctrl_05.gamma * dt * (1 - eps))
            assert b.extras["V"] <= bound * (1 + 1e-6)
            checked += 1
    assert checked > 50
