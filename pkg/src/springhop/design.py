"""Design analysis: closed-form vertical bang-bang hopping and COT studies.

For purely vertical hopping with bang-bang thrust (maximum while ascending,
minimum while descending, switching at the stance velocity zero crossing)
every phase has linear dynamics:

* flight down from apex h: constant acceleration g - F_min/m,
* stance compression: damped harmonic oscillator about the equilibrium
  shifted by (F_min - m g)/k_s, forced by the constant minimum thrust,
* stance extension: same oscillator about the F_max-shifted equilibrium,
* flight up: constant deceleration g - F_max/m (> 0 whenever TWR < 1).

Phase boundaries are matched continuously and event times come from root
solves on the closed-form trajectories, so a one-hop apex-to-apex map is
available without numerical integration.  The same piecewise-linear system
expressed as a hybrid model drives the cross-checking oracle.

Cost of transport compares controlled hopping against level flight at the
same horizontal speed: flying needs thrust equal to weight (drag is
neglected at these speeds), giving COT = 1/v exactly, and is infeasible at
TWR <= 1; hopping integrates the commanded thrust along a stepping run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .controllers import SlipHopController, stepping_targeting
from .energy import EnergyControllerConfig
from .errors import InvalidArgument, SpringhopError
from .hybrid import (
    ConstantController,
    EventKind,
    Guard,
    HybridState,
    IntegratorOptions,
    integrate_until_event,
    simulate_hops,
)
from .slip import SlipParams, apex_state, SlipModel
from .stepping import Gait, GaitContext, find_periodic_orbit


class NoLiftoff(SpringhopError):
    """Thrust/spring combination cannot return the leg to liftoff."""


@dataclass(frozen=True)
class BangBangSpec:
    m: float
    k_s: float
    d_s: float
    F_max: float
    F_min: float = 0.0
    target_apex: float = 1.0
    r0: float = 0.30
    g: float = 9.81
    travel: float = 0.10   # spring displacement limit, design constraint

    def __post_init__(self):
        if self.m <= 0 or self.k_s <= 0 or self.d_s < 0 or self.r0 <= 0:
            raise InvalidArgument("needs m,k_s,r0 > 0 and d_s >= 0")
        if not 0 <= self.F_min <= self.F_max:
            raise InvalidArgument("needs 0 <= F_min <= F_max")
        if self.F_max >= self.m * self.g:
            raise InvalidArgument("bang-bang analysis assumes TWR < 1")
        if self.target_apex <= self.r0:
            raise InvalidArgument("apex must exceed the leg length")


@dataclass(frozen=True)
class CotResult:
    mode: str                  # "hopping" | "flying"
    twr: float
    cot: float                 # inf when the mode is infeasible
    mean_velocity: float
    feasible: bool = True


class _LinearOscillator:
    """z'' + 2 zeta w z' + w^2 (z - z_eq) = 0 with closed-form evaluation."""

    def __init__(self, m, k, d, z_eq):
        self.w = math.sqrt(k / m)
        self.zeta = d / (2.0 * math.sqrt(k * m))
        self.z_eq = z_eq

    def solve(self, z0, v0):
        w, zeta = self.w, self.zeta
        dz0 = z0 - self.z_eq
        if abs(zeta - 1.0) < 1e-9:
            c1, c2 = dz0, v0 + w * dz0

            def z(t):
                return self.z_eq + (c1 + c2 * t) * math.exp(-w * t)

            def v(t):
                e = math.exp(-w * t)
                return (c2 - w * (c1 + c2 * t)) * e
        elif zeta < 1.0:
            wd = w * math.sqrt(1.0 - zeta * zeta)
            a = zeta * w
            c1, c2 = dz0, (v0 + a * dz0) / wd

            def z(t):
                e = math.exp(-a * t)
                return self.z_eq + e * (c1 * math.cos(wd * t) + c2 * math.sin(wd * t))

            def v(t):
                e = math.exp(-a * t)
                return e * ((-a * c1 + c2 * wd) * math.cos(wd * t)
                            - (a * c2 + c1 * wd) * math.sin(wd * t))
        else:
            rad = w * math.sqrt(zeta * zeta - 1.0)
            r1, r2 = -zeta * w + rad, -zeta * w - rad
            c2 = (v0 - r1 * dz0) / (r2 - r1)
            c1 = dz0 - c2

            def z(t):
                return self.z_eq + c1 * math.exp(r1 * t) + c2 * math.exp(r2 * t)

            def v(t):
                return c1 * r1 * math.exp(r1 * t) + c2 * r2 * math.exp(r2 * t)

        return z, v


def _first_root(fn, t_hi, n_grid=400):
    """First sign change of fn on (0, t_hi], localized by brentq."""
    ts = np.linspace(0.0, t_hi, n_grid)
    prev_t, prev_v = ts[0], fn(ts[0])
    for t in ts[1:]:
        v = fn(t)
        if prev_v > 0.0 >= v:
            return brentq(fn, prev_t, t, xtol=1e-14, rtol=1e-15)
        prev_t, prev_v = t, v
    return None


def bang_bang_closed_form(spec: BangBangSpec) -> dict:
    """One vertical hop from the target apex: closed-form phase assembly.

    Returns the next apex height, the four phase durations, and the peak
    spring compression.  Raises NoLiftoff when the extension never drives
    the unclamped spring force back to zero with upward velocity.
    """
    m, k, d, g = spec.m, spec.k_s, spec.d_s, spec.g
    r0 = spec.r0

    # Phase 1: descent under g_min = g - F_min/m from (apex, 0) to z = r0.
    g_min = g - spec.F_min / m
    drop = spec.target_apex - r0
    t1 = math.sqrt(2.0 * drop / g_min)
    v_td = -g_min * t1

    # Phase 2: compression with minimum thrust until zdot = 0.
    osc_dn = _LinearOscillator(m, k, d, r0 + (spec.F_min - m * g) / k)
    z_dn, v_dn = osc_dn.solve(r0, v_td)
    period = 2.0 * math.pi / osc_dn.w
    t2 = _first_root(lambda t: -v_dn(t), 1.5 * period)
    if t2 is None:
        raise NoLiftoff("compression never reverses")
    z_bot = z_dn(t2)

    # Phase 3: extension with maximum thrust until the unclamped spring
    # force k (r0 - z) - d zdot returns to zero (the liftoff condition).
    osc_up = _LinearOscillator(m, k, d, r0 + (spec.F_max - m * g) / k)
    z_up, v_up = osc_up.solve(z_bot, 0.0)
    force = lambda t: k * (r0 - z_up(t)) - d * v_up(t)
    t3 = _first_root(force, 2.0 * period, n_grid=800)
    if t3 is None:
        raise NoLiftoff("spring force never releases under F_max")
    z_lo, v_lo = z_up(t3), v_up(t3)
    if v_lo <= 0.0:
        raise NoLiftoff(f"liftoff velocity {v_lo:.3f} m/s not upward")

    # Phase 4: ascent under g_max = g - F_max/m > 0.
    g_max = g - spec.F_max / m
    t4 = v_lo / g_max
    apex = z_lo + 0.5 * v_lo * v_lo / g_max

    return {
        "apex": apex,
        "durations": (t1, t2, t3, t4),
        "peak_compression": r0 - z_bot,
        "liftoff_velocity": v_lo,
    }


def steady_state_apex(spec: BangBangSpec, hops: int = 10) -> float:
    """Iterate the one-hop apex map from the target apex."""
    h = spec.target_apex
    for _ in range(hops):
        h = bang_bang_closed_form(replace(spec, target_apex=h))["apex"]
        if h <= spec.r0 * (1.0 + 1e-9):
            raise NoLiftoff("hop height collapsed to the leg length")
    return h


def required_max_thrust(spec: BangBangSpec, tol: float = 1e-6) -> Optional[float]:
    """Minimal F_max sustaining periodic hopping at the target apex.

    The steady apex is monotone in F_max; bracketing the weight from below
    and bisecting gives the minimal thrust.  None when even F_max just
    under the weight cannot reach the target (infeasible cell).
    """

    def excess(f_max):
        try:
            return steady_state_apex(replace(spec, F_max=f_max)) - spec.target_apex
        except NoLiftoff:
            return -spec.target_apex

    f_hi = spec.m * spec.g * (1.0 - 1e-6)
    if excess(f_hi) < 0.0:
        return None
    f_lo = spec.F_min
    if excess(f_lo) >= 0.0:
        return f_lo
    return brentq(excess, f_lo, f_hi, xtol=tol)


def _sustainable(spec: BangBangSpec, h: float) -> bool:
    """One hop from apex h returns at least to h (throttleable excess)."""
    try:
        return bang_bang_closed_form(replace(spec, target_apex=h))["apex"] >= h
    except NoLiftoff:
        return False


def travel_limited_apex(spec: BangBangSpec, tol: float = 1e-9) -> float:
    """Largest apex whose hop keeps the peak compression within ``travel``.

    Compression grows monotonically with the drop, so this is a bisection
    on the closed-form peak-compression output.
    """

    def over(h):
        try:
            return (bang_bang_closed_form(replace(spec, target_apex=h))["peak_compression"]
                    - spec.travel)
        except NoLiftoff:
            # Hops that die out compress barely at all; only large drops
            # threaten the travel limit.
            return -spec.travel

    lo = spec.r0 * (1.0 + 1e-6)
    if over(lo) >= 0.0:
        return lo
    hi = lo
    for _ in range(60):
        hi *= 2.0
        if over(hi) >= 0.0:
            break
    else:
        return math.inf
    return brentq(over, lo, hi, xtol=tol)


def achievable_apex(spec: BangBangSpec) -> Optional[float]:
    """Largest sustainable apex at fixed F_max.

    Above the energetic break-even the one-hop map gains height every hop
    (a controller would throttle the excess), so the binding constraint is
    the spring-travel limit; below it hopping decays and no height is
    sustained.  Returns None for unsustainable cells.
    """
    h_cap = travel_limited_apex(spec)
    if math.isinf(h_cap):
        return None
    if _sustainable(spec, h_cap):
        return h_cap
    lo = spec.r0 * 1.02
    if not _sustainable(spec, lo):
        return None
    # Mixed cell: largest sustainable height below the travel cap.
    hi = h_cap
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _sustainable(spec, mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return lo


def design_sweep_stiffness(weights, stiffness_grid, target_apex: float,
                           d_s: float = 15.0, r0: float = 0.30,
                           f_min: float = 0.0, g: float = 9.81) -> list[dict]:
    """Required maximum thrust per (weight, stiffness) cell.

    Infeasible cells (target unreachable even at thrust just below the
    weight) are kept in the table with a None thrust and marked.
    """
    rows = []
    for m in weights:
        for k in stiffness_grid:
            spec = BangBangSpec(m=m, k_s=k, d_s=d_s, F_max=m * g * 0.999,
                                F_min=f_min, target_apex=target_apex, r0=r0, g=g)
            f_req = required_max_thrust(spec)
            rows.append({
                "weight_kg": m,
                "stiffness": k,
                "F_max_required": f_req,
                "feasible": f_req is not None,
            })
    return rows


def design_sweep_twr(stiffness_grid, twr_grid, m: float = 2.5,
                     d_s: float = 15.0, r0: float = 0.30,
                     f_min: float = 0.0, g: float = 9.81,
                     travel: float = 0.10) -> list[dict]:
    """Achievable sustained apex per (twr, stiffness) cell."""
    rows = []
    for twr in twr_grid:
        for k in stiffness_grid:
            if twr <= 0.0:
                # No actuation: passive rebound decays, so no height above
                # the leg length is sustained.
                rows.append({"twr": twr, "stiffness": k, "apex": r0,
                             "feasible": False})
                continue
            spec = BangBangSpec(m=m, k_s=k, d_s=d_s, F_max=twr * m * g,
                                F_min=f_min, target_apex=2.0 * r0, r0=r0, g=g,
                                travel=travel)
            apex = achievable_apex(spec)
            rows.append({"twr": twr, "stiffness": k,
                         "apex": apex if apex is not None else r0,
                         "feasible": apex is not None})
    return rows


# ---------------------------------------------------------------------------
# Numerical oracle: the identical piecewise-linear system, event-driven.


class VerticalBangBangModel:
    """Hybrid restatement of the closed-form system for cross-checking.

    Phases: flight_down -> stance_down -> stance_up -> flight_up, with the
    thrust fixed per phase and events at touchdown (z = r0, descending),
    the stance velocity zero crossing, liftoff (unclamped spring force
    zero), and apex.
    """

    SWITCH = "switch"

    def __init__(self, spec: BangBangSpec):
        self.spec = spec

    def _thrust(self, phase):
        return self.spec.F_min if phase.endswith("down") else self.spec.F_max

    def derivative(self, t, y, u, phase, aux):
        s = self.spec
        f = self._thrust(phase)
        if phase.startswith("flight"):
            return np.array([y[1], f / s.m - s.g])
        spring = s.k_s * (s.r0 - y[0]) - s.d_s * y[1]
        return np.array([y[1], (f + spring) / s.m - s.g])

    def guards(self, phase):
        s = self.spec
        if phase == "flight_down":
            return (Guard(EventKind.TOUCHDOWN.value,
                          lambda t, y, u, aux: y[0] - s.r0, priority=0),)
        if phase == "stance_down":
            return (Guard(self.SWITCH, lambda t, y, u, aux: -y[1], priority=1),)
        if phase == "stance_up":
            return (Guard(EventKind.LIFTOFF.value,
                          lambda t, y, u, aux: s.k_s * (s.r0 - y[0]) - s.d_s * y[1],
                          priority=1),)
        return (Guard(EventKind.APEX.value, lambda t, y, u, aux: y[1], priority=2),)

    _NEXT = {"flight_down": "stance_down", "stance_down": "stance_up",
             "stance_up": "flight_up", "flight_up": "flight_down"}

    def reset(self, kind, t, y, u, phase, aux):
        return self._NEXT[phase], y.copy(), aux.copy()

    def validate_initial(self, state):
        pass

    def check_state(self, t, y, phase, aux):
        pass

    def sample_extras(self, t, y, u, phase, aux):
        return {}


def bang_bang_numeric_apex(spec: BangBangSpec,
                           opts: Optional[IntegratorOptions] = None) -> float:
    """Event-driven integration of one hop of the piecewise-linear system."""
    opts = opts or IntegratorOptions(abs_tol=1e-11, rel_tol=1e-9)
    model = VerticalBangBangModel(spec)
    state = HybridState("flight_down", np.array([spec.target_apex]),
                        np.array([0.0]), 0.0)
    controller = ConstantController(())
    for _ in range(4):
        traj, ev = integrate_until_event(model, state, controller,
                                         t_max=state.t + 10.0, opts=opts)
        if ev is None:
            raise NoLiftoff("numeric oracle hit t_max")
        state = ev.state_after
        if ev.kind == EventKind.APEX.value:
            return float(state.q[0])
    raise NoLiftoff("numeric oracle did not reach apex in four events")


# ---------------------------------------------------------------------------
# Cost of transport


def thrust_integral(times, thrusts) -> float:
    """Exact integral of a zero-order-hold thrust signal |F| dt."""
    total = 0.0
    for i in range(len(times) - 1):
        total += abs(thrusts[i]) * (times[i + 1] - times[i])
    return total


def cot_flying(m: float, twr: float, v: float, duration: float = 10.0) -> CotResult:
    """Level flight at constant speed: thrust equals weight, COT = 1/v.

    Any TWR <= 1 cannot sustain flight at all; the COT is reported as
    infinity with the cell marked infeasible.
    """
    if v <= 0:
        raise InvalidArgument("flight speed must be positive")
    if twr <= 1.0:
        return CotResult("flying", twr, math.inf, 0.0, feasible=False)
    return CotResult("flying", twr, 1.0 / v, v)


def cot_hopping(params: SlipParams, twr: float, target_apex: float,
                xdot_des: float, n_steps: int = 6,
                gamma: float = 20.0,
                opts: Optional[IntegratorOptions] = None,
                apex_tol: float = 0.02,
                gait: Optional[Gait] = None) -> CotResult:
    """COT of controlled hopping with F_min = 0 and F_max = twr * m * g.

    Feasibility requires the periodic-orbit search to succeed and the
    energy controller to hold the apex within ``apex_tol`` of the target
    over a ten-hop regulation check; infeasible cells report infinite COT.
    """
    opts = opts or IntegratorOptions()
    f_max = twr * params.m * params.g
    try:
        cfg = EnergyControllerConfig.for_apex(
            m=params.m, g=params.g, ft_min=0.0, ft_max=f_max,
            apex_height=target_apex, gamma=gamma)
        if gait is None:
            # Sweep cells do not need gait-export precision: deep input
            # saturation leaves kinks in the map that block the strict
            # Jacobian settle without affecting the transport cost.
            gait = find_periodic_orbit(xdot_des, target_apex, params, cfg,
                                       opts=opts, residual_tol=5e-3,
                                       jacobian_rel_tol=1e-2)
    except SpringhopError:
        return CotResult("hopping", twr, math.inf, 0.0, feasible=False)

    model = SlipModel(params)
    controller = SlipHopController(cfg, stepping_targeting(gait), params.r0)
    state = apex_state(params, gait.apex_height, gait.xdot_star)
    try:
        check = simulate_hops(model, state, controller, 10,
                              t_max=30.0, opts=opts)
    except SpringhopError:
        return CotResult("hopping", twr, math.inf, 0.0, feasible=False)
    apexes = check.events_of(EventKind.APEX.value)
    if check.termination != "completed" or any(
            abs(ev.state_after.q[1] - target_apex) > apex_tol * target_apex
            for ev in apexes[-3:]):
        return CotResult("hopping", twr, math.inf, 0.0, feasible=False)

    controller = SlipHopController(cfg, stepping_targeting(gait), params.r0)
    traj = simulate_hops(model, apex_state(params, gait.apex_height, gait.xdot_star),
                         controller, n_steps, t_max=5.0 * n_steps, opts=opts)
    if traj.termination != "completed":
        return CotResult("hopping", twr, math.inf, 0.0, feasible=False)
    times = [s.t for s in traj.samples]
    thrusts = [s.extras.get("F_t", s.u[0]) for s in traj.samples]
    work_proxy = thrust_integral(times, thrusts)
    distance = traj.samples[-1].extras["x"] - traj.samples[0].extras["x"]
    elapsed = times[-1] - times[0]
    if distance <= 0:
        return CotResult("hopping", twr, math.inf, 0.0, feasible=False)
    cot = work_proxy / (distance * params.m * params.g)
    return CotResult("hopping", twr, cot, distance / elapsed)


def cot_comparison(params: SlipParams, twr_grid, target_apex: float = 1.0,
                   v: float = 1.0, n_steps: int = 6,
                   opts: Optional[IntegratorOptions] = None,
                   ref_twr: float = 0.9) -> list[CotResult]:
    """Hopping and flying COT across a TWR grid at matched speed.

    The stepping gait is identified once at a reference TWR and deployed
    unchanged across the sweep (the gait library is an offline artifact;
    the stance geometry does not depend on the thrust cap).  Feasibility
    of each cell still comes from its own energy-regulation check, so the
    reported boundary is the energetic one.
    """
    gait = None
    try:
        cfg_ref = EnergyControllerConfig.for_apex(
            m=params.m, g=params.g, ft_min=0.0,
            ft_max=ref_twr * params.m * params.g,
            apex_height=target_apex, gamma=20.0)
        gait = find_periodic_orbit(v, target_apex, params, cfg_ref, opts=opts,
                                   residual_tol=5e-3, jacobian_rel_tol=1e-2)
    except SpringhopError:
        gait = None
    results = []
    for twr in twr_grid:
        results.append(cot_hopping(params, twr, target_apex, v,
                                   n_steps=n_steps, opts=opts, gait=gait))
        results.append(cot_flying(params.m, twr, v))
    return results


def hopping_feasibility_boundary(results) -> Optional[float]:
    """Smallest TWR with a finite hopping COT in a comparison table."""
    feas = [r.twr for r in results if r.mode == "hopping" and r.feasible]
    return min(feas) if feas else None
