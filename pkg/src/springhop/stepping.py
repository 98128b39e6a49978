"""Step-to-step horizontal velocity control on the apex Poincare section.

With the vertical energy controller active the apex height is regulated,
so the apex-to-apex return map has a single state, the horizontal apex
velocity, and a single input, the committed touchdown angle:

    xdot_{k+1} = P(xdot_k, u_k).

A periodic orbit (xdot*, u*) is located by a bracketing bisection/secant
root solve in u; the map Jacobians A = dP/dxdot and B = dP/du come from
central differences with step halving, and the deadbeat gain K = -A/B
nulls the linearized error in one step.

The apex section height stored in a gait is the *measured* steady apex of
the energy-regulated hop, not the nominal E_d/(m*g_e): stance losses leave
a small self-consistent energy deficit at the section, and using the
measured height makes the stored orbit an exact fixed point of the
simulated map.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .controllers import SlipHopController, fixed_angle_targeting
from .energy import EnergyControllerConfig
from .errors import (
    ConfigError,
    NoApexReached,
    NoBracket,
    NotConverged,
    NumericalNoise,
    SpringhopError,
    UncontrollableMap,
)
from .hybrid import EventKind, IntegratorOptions, simulate_hops
from .slip import SlipModel, SlipParams, apex_state

logger = logging.getLogger(__name__)

GAIT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Gait:
    """A periodic hopping orbit with its S2S linearization and gain."""

    xdot_star: float
    u_star: float
    apex_height: float     # measured section height, m
    E_d: float             # J
    A: float               # dP/dxdot, dimensionless
    B: float               # dP/du, (m/s)/rad
    K: float               # deadbeat gain, rad/(m/s)
    params_hash: str
    residual: float = 0.0  # |P(xdot*, u*) - xdot*| at synthesis time

    def __post_init__(self):
        if abs(self.A + self.B * self.K) > 1e-12 * max(1.0, abs(self.A)):
            raise ConfigError("gait gain does not satisfy A + B*K = 0")


@dataclass(frozen=True)
class ApexState:
    """Apex-section record used in per-step reports."""

    step: int
    t: float
    xdot: float
    height: float


@dataclass(frozen=True)
class GaitContext:
    """Everything a return-map evaluation needs besides (xdot_k, u_k)."""

    params: SlipParams
    ctrl: EnergyControllerConfig
    apex_height: float
    opts: IntegratorOptions = IntegratorOptions()
    t_max_hop: float = 5.0

    def with_height(self, h: float) -> "GaitContext":
        return replace(self, apex_height=h)


def _one_hop(xdot_k: float, u_k: float, ctx: GaitContext):
    """Simulate one full hop from the apex section; returns the final apex
    state (velocity, height, time)."""
    model = SlipModel(ctx.params)
    controller = SlipHopController(ctx.ctrl, fixed_angle_targeting(u_k),
                                   ctx.params.r0)
    state = apex_state(ctx.params, ctx.apex_height, xdot_k)
    try:
        traj = simulate_hops(model, state, controller, 1,
                             t_max=ctx.t_max_hop, opts=ctx.opts)
    except SpringhopError as exc:
        raise NoApexReached(f"hop from (xdot={xdot_k:.3f}, u={u_k:.3f}) failed: {exc}") from exc
    apexes = traj.events_of(EventKind.APEX.value)
    if traj.termination != "completed" or not apexes:
        raise NoApexReached(
            f"no apex within {ctx.t_max_hop}s from (xdot={xdot_k:.3f}, u={u_k:.3f})")
    ev = apexes[-1]
    return ev.state_after.v[0], ev.state_after.q[1], ev.t


def return_map(xdot_k: float, u_k: float, ctx: GaitContext) -> float:
    """Apex-to-apex horizontal velocity map P(xdot_k, u_k)."""
    xdot_next, _, _ = _one_hop(xdot_k, u_k, ctx)
    return xdot_next


def _steady_apex_height(xdot: float, u: float, ctx: GaitContext,
                        hops: int = 8, tol: float = 1e-7) -> float:
    """Iterate single hops to the self-consistent apex height at fixed u."""
    h = ctx.apex_height
    for _ in range(hops):
        _, h_next, _ = _one_hop(xdot, u, ctx.with_height(h))
        if abs(h_next - h) < tol:
            return h_next
        h = h_next
    return h


def _solve_touchdown_angle(xdot_des: float, ctx: GaitContext,
                           u_lo: float = -0.5, u_hi: float = 0.5,
                           scan_points: int = 11, tol: float = 1e-7,
                           max_iter: int = 60) -> float:
    """Root of P(xdot_des, u) - xdot_des by bracketing bisection + secant."""

    def residual(u):
        return return_map(xdot_des, u, ctx) - xdot_des

    us = np.linspace(u_lo, u_hi, scan_points)
    vals = []
    for u in us:
        try:
            vals.append((float(u), residual(float(u))))
        except NoApexReached:
            continue
    bracket = None
    for (ua, ra), (ub, rb) in zip(vals, vals[1:]):
        if ra == 0.0:
            return ua
        if ra * rb < 0.0:
            bracket = (ua, ra, ub, rb)
            break
    if bracket is None:
        raise NoBracket(
            f"no sign change of the fixed-point residual for xdot={xdot_des} "
            f"over u in [{u_lo}, {u_hi}]")
    ua, ra, ub, rb = bracket
    # Bisection narrows the bracket, secant finishes it off.
    for it in range(max_iter):
        width = ub - ua
        if abs(ra) <= tol:
            return ua
        if abs(rb) <= tol:
            return ub
        if width < 1e-10:
            break
        if it < 8:
            um = 0.5 * (ua + ub)
        else:
            um = ub - rb * (ub - ua) / (rb - ra)
            if not (ua < um < ub):
                um = 0.5 * (ua + ub)
        rm = residual(um)
        if ra * rm <= 0.0:
            ub, rb = um, rm
        else:
            ua, ra = um, rm
    u_best, r_best = (ua, ra) if abs(ra) < abs(rb) else (ub, rb)
    if abs(r_best) > 100 * tol:
        raise NotConverged(
            f"touchdown-angle solve stalled at residual {r_best:.2e}")
    return u_best


def linearize_s2s(xdot_star: float, u_star: float, ctx: GaitContext,
                  base_step: float = 1e-3, rel_tol: float = 1e-4,
                  max_halvings: int = 4) -> tuple[float, float, dict]:
    """Central-difference Jacobians of the return map at the fixed point.

    The step is halved until two consecutive estimates agree to ``rel_tol``
    (relative); both estimates are returned in the diagnostics.  Event
    localization is tightened during differencing to keep the quotients
    clean.
    """
    tight = replace(ctx, opts=ctx.opts.tightened(1e-2))

    def estimate(kind: str, h: float) -> float:
        if kind == "A":
            hi = return_map(xdot_star + h, u_star, tight)
            lo = return_map(xdot_star - h, u_star, tight)
        else:
            hi = return_map(xdot_star, u_star + h, tight)
            lo = return_map(xdot_star, u_star - h, tight)
        return (hi - lo) / (2.0 * h)

    out = {}
    diag = {}
    for kind in ("A", "B"):
        h = base_step
        prev = estimate(kind, h)
        converged = False
        history = [(h, prev)]
        for _ in range(max_halvings):
            h *= 0.5
            cur = estimate(kind, h)
            history.append((h, cur))
            scale = max(abs(cur), 1e-9)
            if abs(cur - prev) <= rel_tol * scale:
                out[kind] = cur
                diag[kind] = {"estimates": history[-2:], "step": h}
                converged = True
                break
            prev = cur
        if not converged:
            jitter = abs(history[-1][1] - history[-2][1])
            raise NumericalNoise(
                f"{kind} central differences did not settle; last change {jitter:.3e}")
    return out["A"], out["B"], diag


def deadbeat_gain(A: float, B: float) -> float:
    """Gain K with A + B*K = 0, stabilizing the S2S error in one step."""
    if abs(B) <= 1e-8:
        raise UncontrollableMap(f"|B|={abs(B):.2e} too small for deadbeat synthesis")
    return -A / B


def stepping_controller(xdot_k: float, gait: Gait, clamp: float = 0.5,
                        with_flag: bool = False):
    """Touchdown-angle command u* + K (xdot_k - xdot*), clamped to the
    configured leg-angle range; clamping is logged."""
    u = gait.u_star + gait.K * (xdot_k - gait.xdot_star)
    clamped = False
    if u > clamp:
        u, clamped = clamp, True
    elif u < -clamp:
        u, clamped = -clamp, True
    if clamped:
        logger.warning("touchdown angle clamped to %+.3f rad at xdot=%.3f", u, xdot_k)
    if with_flag:
        return u, clamped
    return u


def decoupled_3d_step(apex_velocity: tuple[float, float], sagittal: Gait,
                      lateral: Gait, clamp: float = 0.5) -> tuple[float, float]:
    """Apply the planar stepping law independently in each vertical plane."""
    if abs(sagittal.E_d - lateral.E_d) > 1e-9 * max(1.0, abs(sagittal.E_d)):
        raise ConfigError("sagittal and lateral gaits must share E_d")
    pitch = stepping_controller(apex_velocity[0], sagittal, clamp=clamp)
    roll = stepping_controller(apex_velocity[1], lateral, clamp=clamp)
    return pitch, roll


def error_invariant_estimate(gait: Gait, ctx: GaitContext,
                             disturbance_bound: float,
                             error_box: float = 0.3, grid: int = 7) -> dict:
    """One-step invariant bound: |e|_inf <= |delta|_max + measured remainder.

    The remainder is the worst residual of the closed-loop map over a grid
    of apex-velocity errors in [-error_box, error_box].
    """
    errors = np.linspace(-error_box, error_box, grid)
    remainder = 0.0
    for e in errors:
        if e == 0.0:
            continue
        u = gait.u_star + gait.K * e
        xnext = return_map(gait.xdot_star + e, u, ctx)
        remainder = max(remainder, abs(xnext - gait.xdot_star))
    return {
        "bound": disturbance_bound + remainder,
        "remainder": remainder,
        "disturbance_bound": disturbance_bound,
        "error_box": error_box,
    }


def params_hash(params: SlipParams, ctrl: EnergyControllerConfig) -> str:
    """Digest of the physical and controller parameters a gait depends on."""
    fields = (
        params.m, params.k_s, params.d_s, params.r0, params.g,
        params.travel_limit,
        ctrl.E_d, ctrl.mass, ctrl.Ft_min, ctrl.Ft_max, ctrl.g_e,
        ctrl.Kp, ctrl.Q, ctrl.gamma, ctrl.p,
    )
    text = ",".join(f"{v:.12g}" for v in fields) + "," + ctrl.variant
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def find_periodic_orbit(xdot_des: float, apex_height_des: float,
                        params: SlipParams, ctrl: EnergyControllerConfig,
                        opts: Optional[IntegratorOptions] = None,
                        max_outer: int = 4, residual_tol: float = 1e-5,
                        jacobian_rel_tol: float = 1e-4) -> Gait:
    """Locate the periodic orbit at the requested velocity and apex height.

    Alternates the scalar touchdown-angle solve with a re-measurement of
    the self-consistent section height until both settle, then linearizes
    and synthesizes the deadbeat gain.  ``residual_tol``/``jacobian_rel_tol``
    default to gait-export quality; throwaway gaits (e.g. transport-cost
    sweep cells deep in input saturation, where the map carries kinks)
    may pass looser values.
    """
    opts = opts or IntegratorOptions()
    if abs(ctrl.apex_height - apex_height_des) > 1e-9 * max(1.0, apex_height_des):
        raise ConfigError("controller E_d does not correspond to the requested apex")
    ctx = GaitContext(params=params, ctrl=ctrl, apex_height=apex_height_des,
                      opts=opts)
    u_star = None
    for outer in range(max_outer):
        if u_star is None:
            u_star = _solve_touchdown_angle(xdot_des, ctx)
        else:
            # Warm re-solve in a narrow bracket around the previous angle.
            try:
                u_star = _solve_touchdown_angle(
                    xdot_des, ctx, u_lo=u_star - 0.05, u_hi=u_star + 0.05,
                    scan_points=5)
            except NoBracket:
                u_star = _solve_touchdown_angle(xdot_des, ctx)
        h_next = _steady_apex_height(xdot_des, u_star, ctx)
        if abs(h_next - ctx.apex_height) < 1e-7:
            ctx = ctx.with_height(h_next)
            break
        ctx = ctx.with_height(h_next)
    residual = abs(return_map(xdot_des, u_star, ctx) - xdot_des)
    if residual > residual_tol:
        raise NotConverged(
            f"fixed-point residual {residual:.2e} exceeds {residual_tol:g} m/s")
    A, B, _ = linearize_s2s(xdot_des, u_star, ctx, rel_tol=jacobian_rel_tol)
    K = deadbeat_gain(A, B)
    return Gait(xdot_star=float(xdot_des), u_star=float(u_star),
                apex_height=float(ctx.apex_height), E_d=float(ctrl.E_d),
                A=float(A), B=float(B), K=float(K),
                params_hash=params_hash(params, ctrl), residual=float(residual))


# ---------------------------------------------------------------------------
# Gait file persistence (versioned structured text, dotted-key format)


def save_gait(path, gait: Gait) -> None:
    lines = [f"format_version = {GAIT_FORMAT_VERSION}"]
    for key in ("xdot_star", "u_star", "apex_height", "E_d", "A", "B", "K",
                "residual"):
        lines.append(f"{key} = {float(getattr(gait, key))!r}")
    lines.append(f"params_hash = {gait.params_hash}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_gait(path, expected_hash: Optional[str] = None) -> Gait:
    data = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            data[key.strip()] = value.strip()
    try:
        version = int(data["format_version"])
        if version != GAIT_FORMAT_VERSION:
            raise ConfigError(f"unsupported gait file version {version}")
        gait = Gait(
            xdot_star=float(data["xdot_star"]),
            u_star=float(data["u_star"]),
            apex_height=float(data["apex_height"]),
            E_d=float(data["E_d"]),
            A=float(data["A"]),
            B=float(data["B"]),
            K=float(data["K"]),
            residual=float(data.get("residual", 0.0)),
            params_hash=data["params_hash"],
        )
    except KeyError as exc:
        raise ConfigError(f"gait file missing key {exc}") from exc
    if expected_hash is not None and gait.params_hash != expected_hash:
        raise ConfigError(
            f"gait file hash {gait.params_hash} does not match parameters "
            f"{expected_hash}; regenerate the gait")
    return gait
