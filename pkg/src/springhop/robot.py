"""Full-order planar (sagittal) model of the spring-legged quadrotor.

Generalized coordinates ``q = (x, z, phi, s)``: base position, pitch, and
spring deformation.  The floating body (mass ``m_body``, inertia
``I_body``) carries a prismatic leg whose lower segment is a point mass
``m_leg`` at the foot,

    foot = base + (leg_rest - s) * (sin(phi), -cos(phi)),

with ``leg_rest = offset + r0`` the unloaded foot-to-base distance.  Pitch
follows the leg-angle convention: positive phi puts the foot ahead of the
base.

Flight: the prismatic joint sits on its extension stop (the spring presses
the lower leg against the bearing end), so ``s`` is locked and the free
dynamics reduce to the (x, z, phi) block; unlocking happens at the plastic
touchdown impact.  Hovering thrust equal to total weight then balances the
whole vehicle, and a dropped robot falls as one body.

Stance: the non-slipping foot contact adds two holonomic constraints
solved together with the dynamics as a KKT block system that also yields
the ground reaction force; Baumgarte terms bound the constraint drift.

Thrust acts along the body axis through the base origin; the pitch moment
comes from differential propeller action.  A PD proxy with rate
feedforward stands in for the onboard attitude loop, its output clamped to
the moment range implied by the propeller-moment bounds through the mixer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    FellOver,
    InfeasibleMoment,
    InvalidArgument,
    InvalidInitialState,
    LegFullyCompressed,
    RankDeficientKKT,
    SingularMassMatrix,
)
from .hybrid import EventKind, Guard, HybridState, Phase
from .slip import Disturbance, Terrain


@dataclass(frozen=True)
class RobotParams:
    m_body: float = 2.3      # kg
    m_leg: float = 0.2       # kg, lumped at the foot
    I_body: float = 0.02     # kg m^2 pitch inertia
    offset: float = 0.0      # m, rigid leg segment between base and spring
    k_s: float = 4848.5      # N/m
    d_s: float = 15.0        # N s/m
    r0: float = 0.08         # m, spring natural length
    travel: float = 0.10     # m, max spring displacement
    k_t: float = 60.0        # N thrust per N m propeller moment
    tau_min: float = 0.005   # N m per-propeller moment floor
    tau_max: float = 0.12    # N m per-propeller moment cap
    twr: float = 0.9         # thrust-to-weight cap, < 1 for hopping designs
    g: float = 9.81
    mixer_arm: float = 0.1167     # m, propeller lever arm (0.33 m wheelbase, X layout)
    pitch_bw_hz: float = 2.0      # attitude proxy bandwidth
    pitch_zeta: float = 1.0       # attitude proxy damping ratio
    mu_warn: float = 0.8          # |GRF_x/GRF_z| friction warning level

    def __post_init__(self):
        if min(self.m_body, self.m_leg, self.I_body) <= 0:
            raise InvalidArgument("masses and inertia must be positive")
        if not self.tau_min < self.tau_max:
            raise InvalidArgument("requires tau_min < tau_max")
        if not 0.0 < self.twr <= 1.0:
            raise InvalidArgument("twr must lie in (0, 1]")

    @property
    def m_total(self) -> float:
        return self.m_body + self.m_leg

    @property
    def leg_rest(self) -> float:
        return self.offset + self.r0

    @property
    def mixer(self) -> np.ndarray:
        """3x4 map from propeller moments to body (roll, pitch, yaw) moment.

        X layout; each thrust is k_t * tau_i with lever ``mixer_arm`` and
        yaw reacting the propeller moments directly.  Rows sum to zero, so
        equal moments produce pure collective thrust.
        """
        d = self.k_t * self.mixer_arm
        return np.array([
            [-d, d, d, -d],
            [d, -d, d, -d],
            [1.0, 1.0, -1.0, -1.0],
        ])

    @property
    def pitch_moment_limit(self) -> float:
        """Largest pitch moment available inside the propeller-moment box."""
        row = self.mixer[1]
        center = 0.5 * (self.tau_min + self.tau_max)
        half = 0.5 * (self.tau_max - self.tau_min)
        return float(np.abs(row).sum() * half + abs(row.sum() * center))

    @property
    def pitch_gains(self) -> tuple[float, float]:
        """PD gains for the attitude proxy, critically damped by default."""
        w = 2.0 * math.pi * self.pitch_bw_hz
        inertia = self.I_body + self.m_leg * self.leg_rest ** 2
        return inertia * w * w, 2.0 * self.pitch_zeta * inertia * w


@dataclass(frozen=True)
class ControlCommand:
    F_t: float
    pitch_des: float
    pitch_rate_des: float = 0.0


def _trig(q):
    return math.sin(q[2]), math.cos(q[2])


def mass_matrix(q: np.ndarray, params: RobotParams) -> np.ndarray:
    """4x4 mass matrix of base + foot point mass."""
    sp, cp = _trig(q)
    ell = params.leg_rest - q[3]
    mb, ml, I = params.m_body, params.m_leg, params.I_body
    M = np.array([
        [mb + ml, 0.0, ml * ell * cp, -ml * sp],
        [0.0, mb + ml, ml * ell * sp, ml * cp],
        [ml * ell * cp, ml * ell * sp, I + ml * ell * ell, 0.0],
        [-ml * sp, ml * cp, 0.0, ml],
    ])
    return M


def bias_forces(q: np.ndarray, v: np.ndarray, params: RobotParams) -> np.ndarray:
    """Coriolis/centrifugal plus gravity terms H(q, qdot).

    Assembled as Mdot*qdot - dT/dq + dV/dq with the foot-velocity map
    differentiated analytically; the spring force is applied separately as
    a generalized force on s.
    """
    sp, cp = _trig(q)
    ell = params.leg_rest - q[3]
    mb, ml = params.m_body, params.m_leg
    xd, zd, pd, sd = v
    elld = -sd
    # Foot velocity components.
    fx = xd - sd * sp + ell * cp * pd
    fz = zd + sd * cp + ell * sp * pd
    # Mdot @ v (only the ml-dependent entries vary).
    d13 = ml * (elld * cp - ell * sp * pd)
    d23 = ml * (elld * sp + ell * cp * pd)
    d14 = -ml * cp * pd
    d24 = -ml * sp * pd
    d33 = 2.0 * ml * ell * elld
    mdot_v = np.array([
        d13 * pd + d14 * sd,
        d23 * pd + d24 * sd,
        d13 * xd + d23 * zd + d33 * pd,
        d14 * xd + d24 * zd,
    ])
    # dT/dq (phi and s slots only).
    dfx_dphi = -sd * cp - ell * sp * pd
    dfz_dphi = -sd * sp + ell * cp * pd
    dT_dphi = ml * (fx * dfx_dphi + fz * dfz_dphi)
    dT_ds = ml * pd * (-fx * cp - fz * sp)
    dT_dq = np.array([0.0, 0.0, dT_dphi, dT_ds])
    # Gravity potential gradient.
    dV_dq = np.array([0.0, (mb + ml) * params.g, ml * params.g * ell * sp,
                      ml * params.g * cp])
    return mdot_v - dT_dq + dV_dq


def generalized_forces(q: np.ndarray, v: np.ndarray, cmd: ControlCommand,
                       params: RobotParams,
                       f_ext: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Thrust wrench, attitude moment, spring/damper, and external push."""
    sp, cp = _trig(q)
    s, sd = q[3], v[3]
    spring = -params.k_s * s - params.d_s * sd
    moment = pitch_moment(cmd, q[2], v[2], params)
    return np.array([
        -cmd.F_t * sp + f_ext[0],
        cmd.F_t * cp + f_ext[1],
        moment,
        spring,
    ])


def pitch_moment(cmd: ControlCommand, phi: float, phi_dot: float,
                 params: RobotParams) -> float:
    """Attitude proxy: PD with rate feedforward, clamped to mixer bounds."""
    kp, kd = params.pitch_gains
    m = kp * (cmd.pitch_des - phi) + kd * (cmd.pitch_rate_des - phi_dot)
    lim = params.pitch_moment_limit
    return max(-lim, min(lim, m))


def foot_position(q: np.ndarray, params: RobotParams) -> np.ndarray:
    sp, cp = _trig(q)
    ell = params.leg_rest - q[3]
    return np.array([q[0] + ell * sp, q[1] - ell * cp])


def foot_jacobian(q: np.ndarray, params: RobotParams) -> np.ndarray:
    sp, cp = _trig(q)
    ell = params.leg_rest - q[3]
    return np.array([
        [1.0, 0.0, ell * cp, -sp],
        [0.0, 1.0, ell * sp, cp],
    ])


def foot_jacobian_dot_v(q: np.ndarray, v: np.ndarray, params: RobotParams) -> np.ndarray:
    sp, cp = _trig(q)
    ell = params.leg_rest - q[3]
    pd, sd = v[2], v[3]
    elld = -sd
    # Rows of d/dt J_f times qdot.
    return np.array([
        pd * (elld * cp - ell * sp * pd) - cp * pd * sd,
        pd * (elld * sp + ell * cp * pd) - sp * pd * sd,
    ])


def aerial_dynamics(q: np.ndarray, v: np.ndarray, cmd: ControlCommand,
                    params: RobotParams,
                    f_ext: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Flight accelerations with the prismatic joint on its extension stop.

    The (x, z, phi) block of the mass-matrix system is solved with
    sdot = sddot = 0; the stop supplies whatever axial force the lock
    requires.  Returns the full qddot with the s slot zero.
    """
    v_locked = v.copy()
    v_locked[3] = 0.0
    M = mass_matrix(q, params)
    rhs = (generalized_forces(q, v_locked, cmd, params, f_ext)
           - bias_forces(q, v_locked, params))
    try:
        acc3 = np.linalg.solve(M[:3, :3], rhs[:3])
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc
    return np.array([acc3[0], acc3[1], acc3[2], 0.0])


def stance_dynamics(q: np.ndarray, v: np.ndarray, cmd: ControlCommand,
                    params: RobotParams, pin: np.ndarray,
                    f_ext: tuple[float, float] = (0.0, 0.0),
                    baumgarte: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    """Constrained stance accelerations and ground reaction force.

    Solves the KKT block system

        [M   -Jf^T] [qddot]   [Q - H]
        [Jf     0 ] [F_grf] = [-Jfdot qdot - 2a Jf qdot - a^2 (p_f - pin)]

    with Baumgarte coefficients ``a = baumgarte`` stabilizing the
    position-level constraint against integration drift.
    """
    M = mass_matrix(q, params)
    J = foot_jacobian(q, params)
    rhs_dyn = (generalized_forces(q, v, cmd, params, f_ext)
               - bias_forces(q, v, params))
    drift = foot_position(q, params) - pin
    rhs_c = (-foot_jacobian_dot_v(q, v, params)
             - 2.0 * baumgarte * (J @ v) - baumgarte ** 2 * drift)
    kkt = np.zeros((6, 6))
    kkt[:4, :4] = M
    kkt[:4, 4:] = -J.T
    kkt[4:, :4] = J
    rhs = np.concatenate([rhs_dyn, rhs_c])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientKKT(str(exc)) from exc
    return sol[:4], sol[4:]


def impact_map(q: np.ndarray, v_pre: np.ndarray,
               params: RobotParams) -> tuple[np.ndarray, np.ndarray]:
    """Plastic touchdown impact: post-impact velocity and contact impulse.

        [M   -Jf^T] [qdot+ ]   [M qdot-]
        [Jf     0 ] [F_imp ] = [   0   ]

    Positions are unchanged; the post-impact velocity satisfies
    Jf qdot+ = 0 and kinetic energy cannot increase.
    """
    M = mass_matrix(q, params)
    J = foot_jacobian(q, params)
    kkt = np.zeros((6, 6))
    kkt[:4, :4] = M
    kkt[:4, 4:] = -J.T
    kkt[4:, :4] = J
    rhs = np.concatenate([M @ v_pre, np.zeros(2)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientKKT(str(exc)) from exc
    return sol[:4], sol[4:]


def lock_leg_impulse(q: np.ndarray, v_pre: np.ndarray,
                     params: RobotParams) -> np.ndarray:
    """Plastic stop-hit at liftoff: zero the prismatic rate via an impulse."""
    M = mass_matrix(q, params)
    J = np.array([[0.0, 0.0, 0.0, 1.0]])
    kkt = np.zeros((5, 5))
    kkt[:4, :4] = M
    kkt[:4, 4:] = -J.T
    kkt[4:, :4] = J
    rhs = np.concatenate([M @ v_pre, np.zeros(1)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientKKT(str(exc)) from exc
    return sol[:4]


def kinetic_energy(q: np.ndarray, v: np.ndarray, params: RobotParams) -> float:
    return 0.5 * float(v @ mass_matrix(q, params) @ v)


def thrust_bounds(m_b: np.ndarray, params: RobotParams) -> tuple[float, float]:
    """Thrust range achievable while the mixer delivers the body moment.

    min/max of k_t * sum(tau) subject to mixer @ tau = m_b and per-propeller
    bounds.  Three equalities on four moments leave a one-dimensional
    feasible segment, so the extrema sit at its endpoints; the upper value
    is additionally capped at twr * m * g.
    """
    A = params.mixer
    m_b = np.asarray(m_b, dtype=float).reshape(3)
    # Particular solution and the (1-D) null direction.
    tau_p, *_ = np.linalg.lstsq(A, m_b, rcond=None)
    if np.linalg.norm(A @ tau_p - m_b) > 1e-9 * max(1.0, float(np.linalg.norm(m_b))):
        raise InfeasibleMoment(f"moment {m_b} outside the mixer range space")
    _, _, vt = np.linalg.svd(A)
    null = vt[-1]
    lo, hi = -np.inf, np.inf
    for tp, n in zip(tau_p, null):
        if abs(n) < 1e-12:
            if not params.tau_min - 1e-12 <= tp <= params.tau_max + 1e-12:
                raise InfeasibleMoment(f"propeller moment {tp:.4f} outside bounds")
            continue
        a = (params.tau_min - tp) / n
        b = (params.tau_max - tp) / n
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if lo > hi:
        raise InfeasibleMoment(f"no moment allocation within bounds for {m_b}")
    slope = params.k_t * float(null.sum())
    base = params.k_t * float(tau_p.sum())
    f_a, f_b = base + slope * lo, base + slope * hi
    f_min, f_max = min(f_a, f_b), max(f_a, f_b)
    return f_min, min(f_max, params.twr * params.m_total * params.g)


class PlanarRobotModel:
    """Hybrid-model adapter over the planar robot dynamics.

    Input vector ``u = [F_t, pitch_des]``; the attitude proxy runs inside
    the derivative (the onboard loop is much faster than the 200 Hz
    command rate).
    """

    def __init__(self, params: RobotParams, terrain: Optional[Terrain] = None,
                 disturbance: Optional[Disturbance] = None):
        self.params = params
        self.terrain = terrain or Terrain()
        self.disturbance = disturbance
        self.friction_warnings = 0

    def _ext(self, t):
        if self.disturbance is None:
            return (0.0, 0.0)
        return self.disturbance.force(t)

    @staticmethod
    def _cmd(u) -> ControlCommand:
        return ControlCommand(u[0], u[1], u[2] if len(u) > 2 else 0.0)

    def com_state(self, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        """COM position and velocity (x, z, xdot, zdot)."""
        p = self.params
        foot = foot_position(q, p)
        J = foot_jacobian(q, p)
        foot_v = J @ v
        x = (p.m_body * q[0] + p.m_leg * foot[0]) / p.m_total
        z = (p.m_body * q[1] + p.m_leg * foot[1]) / p.m_total
        xd = (p.m_body * v[0] + p.m_leg * foot_v[0]) / p.m_total
        zd = (p.m_body * v[1] + p.m_leg * foot_v[1]) / p.m_total
        return np.array([x, z, xd, zd])

    def derivative(self, t, y, u, phase, aux):
        q, v = y[:4], y[4:]
        cmd = self._cmd(u)
        f_ext = self._ext(t)
        if phase == Phase.AERIAL.value:
            acc = aerial_dynamics(q, v, cmd, self.params, f_ext)
            vdot = v.copy()
            vdot[3] = 0.0
            return np.concatenate([vdot, acc])
        acc, _ = stance_dynamics(q, v, cmd, self.params, aux, f_ext)
        return np.concatenate([v, acc])

    def guards(self, phase):
        if phase == Phase.AERIAL.value:
            return (
                Guard(EventKind.TOUCHDOWN.value, self._g_touchdown, priority=0,
                      direction_ok=self._foot_descending),
                Guard(EventKind.APEX.value, self._g_apex, priority=2),
            )
        return (Guard(EventKind.LIFTOFF.value, self._g_liftoff, priority=1),)

    def _g_touchdown(self, t, y, u, aux):
        foot = foot_position(y[:4], self.params)
        return foot[1] - self.terrain.height(foot[0])

    def _foot_descending(self, t, y, u, aux):
        J = foot_jacobian(y[:4], self.params)
        return float((J @ y[4:])[1]) < 0.0

    def _g_apex(self, t, y, u, aux):
        return self.com_state(y[:4], y[4:])[3]

    def _g_liftoff(self, t, y, u, aux):
        _, grf = stance_dynamics(y[:4], y[4:], self._cmd(u), self.params, aux,
                                 self._ext(t))
        return grf[1]

    def reset(self, kind, t, y, u, phase, aux):
        q, v = y[:4].copy(), y[4:]
        if kind == EventKind.TOUCHDOWN.value:
            v_post, _ = impact_map(q, v, self.params)
            pin = foot_position(q, self.params)
            return Phase.STANCE.value, np.concatenate([q, v_post]), pin
        if kind == EventKind.LIFTOFF.value:
            v_post = lock_leg_impulse(q, v, self.params)
            return Phase.AERIAL.value, np.concatenate([q, v_post]), np.zeros(0)
        return phase, y.copy(), aux.copy()

    def validate_initial(self, state: HybridState) -> None:
        q = state.q
        if not -0.5 * math.pi < q[2] < 0.5 * math.pi:
            raise InvalidInitialState(f"pitch {q[2]:.3f} outside +-pi/2")
        if state.phase == Phase.AERIAL.value:
            foot = foot_position(q, self.params)
            if foot[1] < self.terrain.height(foot[0]) - 1e-9:
                raise InvalidInitialState("aerial state with foot below ground")
        else:
            if state.aux.size != 2:
                raise InvalidInitialState("stance state requires a foot pin")
            drift = foot_position(q, self.params) - state.aux
            if float(np.linalg.norm(drift)) > 1e-6:
                raise InvalidInitialState(
                    f"stance foot-position residual {np.linalg.norm(drift):.2e} > 1e-6")

    def check_state(self, t, y, phase, aux):
        if abs(y[2]) > 0.5 * math.pi:
            raise FellOver(f"pitch {y[2]:.3f} rad at t={t:.3f}")
        s = y[3]
        if phase == Phase.STANCE.value and s >= self.params.travel:
            raise LegFullyCompressed(f"spring travel exhausted (s={s:.4f}) at t={t:.3f}")

    def sample_extras(self, t, y, u, phase, aux):
        q, v = y[:4], y[4:]
        com = self.com_state(q, v)
        row = {
            "x": q[0], "z": q[1], "xdot": v[0], "zdot": v[1],
            "pitch": q[2], "spring_deflection": q[3],
            "com_x": com[0], "com_z": com[1],
            "com_xdot": com[2], "com_zdot": com[3],
            "grf_x": 0.0, "grf_z": 0.0,
        }
        if phase == Phase.STANCE.value:
            _, grf = stance_dynamics(q, v, self._cmd(u), self.params, aux,
                                     self._ext(t))
            row["grf_x"], row["grf_z"] = grf[0], grf[1]
            if grf[1] > 1e-6 and abs(grf[0] / grf[1]) > self.params.mu_warn:
                self.friction_warnings += 1
        return row


def robot_aerial_state(params: RobotParams, apex_height: float, xdot: float,
                       pitch: float = 0.0, x: float = 0.0) -> HybridState:
    """Aerial apex-section state with the COM at the requested height."""
    # Base height such that the COM sits at apex_height.
    p = params
    q = np.array([x, 0.0, pitch, 0.0])
    foot_drop = (p.leg_rest) * math.cos(pitch)
    z_base = apex_height + (p.m_leg / p.m_total) * foot_drop
    q[1] = z_base
    return HybridState(Phase.AERIAL.value, q, np.array([xdot, 0.0, 0.0, 0.0]), 0.0)
