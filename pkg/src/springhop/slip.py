"""Energy-controlled spring-loaded inverted pendulum (SLIP) models.

Conventions (shared with the planar robot):

* Leg angle ``theta`` is measured from the vertical and is positive when
  the foot is ahead of the center of mass.  In stance the COM sits at
  ``foot + r * (-sin(theta), cos(theta))``.
* Thrust acts along the leg axis, pushing from foot toward body: in the
  air along the commanded swing angle, in stance along the actual leg.
* The spring is unilateral: the ground cannot pull, so the axial force is
  clamped at zero from below.

Aerial state vector: ``[x, z, xdot, zdot]``.  Stance state vector:
``[r, theta, rdot, thetadot]`` with the pinned foot in ``aux = [xf, zf]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidArgument, InvalidInitialState, LegFullyCompressed
from .hybrid import EventKind, Guard, HybridState, Phase


@dataclass(frozen=True)
class SlipParams:
    """Point mass on a massless spring-damper leg."""

    m: float = 2.5          # kg
    k_s: float = 4848.5     # N/m
    d_s: float = 15.0       # N*s/m
    r0: float = 0.30        # m, natural foot-to-COM length
    g: float = 9.81         # m/s^2
    r_min: Optional[float] = None  # stance travel limit; default r0 - 0.10

    def __post_init__(self):
        if self.m <= 0 or self.k_s <= 0 or self.d_s < 0 or self.r0 <= 0 or self.g <= 0:
            raise InvalidArgument("SlipParams requires m,k_s,r0,g > 0 and d_s >= 0")

    @property
    def travel_limit(self) -> float:
        return self.r_min if self.r_min is not None else self.r0 - 0.10


def spring_force(s: float, s_dot: float, params: SlipParams) -> float:
    """Axial leg force ``k_s*s + d_s*s_dot`` for deformation s >= 0.

    Clamped below at zero: a unilateral contact cannot pull the mass down,
    so a fast extension can zero the force before the deformation does.
    """
    if s < 0:
        raise InvalidArgument(f"deformation must be >= 0, got {s}")
    return max(0.0, params.k_s * s + params.d_s * s_dot)


def vertical_energy(z: float, z_dot: float, m: float, g_e: float) -> float:
    """Vertical energy ``m*g_e*z + m*z_dot**2/2`` with equivalent gravity g_e."""
    if m <= 0:
        raise InvalidArgument("mass must be positive")
    return m * g_e * z + 0.5 * m * z_dot * z_dot


def slip_aerial_derivative(y: np.ndarray, thrust: float, theta_cmd: float,
                           params: SlipParams,
                           f_ext: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Ballistic flight with thrust along the commanded leg angle.

    theta_cmd > 0 points the thrust line backward-and-up, decelerating
    forward motion; at theta_cmd = 0 the thrust is purely vertical.
    """
    if thrust < 0:
        raise InvalidArgument("thrust must be >= 0")
    m = params.m
    ax = (-thrust * math.sin(theta_cmd) + f_ext[0]) / m
    az = (thrust * math.cos(theta_cmd) + f_ext[1]) / m - params.g
    return np.array([y[2], y[3], ax, az])


def slip_stance_derivative(y: np.ndarray, thrust: float, params: SlipParams,
                           f_ext: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Polar stance dynamics of the point mass about the pinned foot.

    With s = r0 - r the axial spring force is ``max(0, k_s*s - d_s*rdot)``
    and thrust is collinear with the leg, so

        r''     = r*thetadot^2 - g*cos(theta) + (F_s + F_t + f.e_r)/m
        theta'' = g*sin(theta)/r - 2*rdot*thetadot/r + f.e_theta/(m*r)

    where e_r = (-sin, cos) points from foot to COM and
    e_theta = (-cos, -sin) is the increasing-theta tangent.
    """
    r, theta, rd, td = y
    if r <= 0:
        raise InvalidArgument("stance leg length must be positive")
    m = params.m
    s = params.r0 - r
    fs = spring_force(max(0.0, s), -rd, params)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    f_r = -f_ext[0] * sin_t + f_ext[1] * cos_t
    f_t = -f_ext[0] * cos_t - f_ext[1] * sin_t
    rdd = r * td * td - params.g * cos_t + (fs + thrust + f_r) / m
    tdd = params.g * sin_t / r - 2.0 * rd * td / r + f_t / (m * r)
    return np.array([rd, td, rdd, tdd])


def aerial_to_stance(y: np.ndarray, theta: float, foot: tuple[float, float],
                     r: float) -> np.ndarray:
    """Map COM coordinates/velocities to polar stance coordinates at touchdown."""
    _, _, xd, zd = y
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    rd = -xd * sin_t + zd * cos_t
    td = (-xd * cos_t - zd * sin_t) / r
    return np.array([r, theta, rd, td])


def stance_to_aerial(y: np.ndarray, foot: tuple[float, float]) -> np.ndarray:
    """Map polar stance coordinates back to COM coordinates at liftoff."""
    r, theta, rd, td = y
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    x = foot[0] - r * sin_t
    z = foot[1] + r * cos_t
    xd = -rd * sin_t - r * td * cos_t
    zd = rd * cos_t - r * td * sin_t
    return np.array([x, z, xd, zd])


# ---------------------------------------------------------------------------
# Swing trajectory


def bezier(points: np.ndarray, tau: float) -> float:
    """De Casteljau evaluation of a Bezier curve at normalized time tau."""
    b = np.array(points, dtype=float)
    tau = min(max(tau, 0.0), 1.0)
    n = b.size
    for level in range(1, n):
        b[: n - level] = (1.0 - tau) * b[: n - level] + tau * b[1 : n - level + 1]
    return float(b[0])


@dataclass(frozen=True)
class SwingTrajectory:
    """Smooth leg-angle profile from the liftoff angle to the touchdown target.

    Cubic by default, with interior control points repeated at the endpoints
    so the angular rate vanishes at both ends; the touchdown angle is then
    insensitive to sampling jitter near the end of flight.
    """

    theta_liftoff: float
    theta_td_desired: float
    duration: float
    bezier_coeffs: tuple = ()

    def __post_init__(self):
        if self.duration < 0:
            raise InvalidArgument("swing duration must be >= 0")
        if not self.bezier_coeffs:
            a, b = self.theta_liftoff, self.theta_td_desired
            object.__setattr__(self, "bezier_coeffs", (a, a, b, b))

    def angle_at(self, tau: float) -> float:
        return bezier(np.asarray(self.bezier_coeffs), tau)


def swing_angle(traj: SwingTrajectory, t: float) -> float:
    """Evaluate the swing profile at time t (clamped to the endpoints)."""
    if t < 0:
        raise InvalidArgument("swing time must be >= 0")
    if traj.duration == 0.0:
        return traj.theta_td_desired
    return traj.angle_at(t / traj.duration)


def time_to_height(z: float, zd: float, z_target: float, g: float) -> float:
    """Ballistic time until height ``z_target`` under constant gravity g.

    Takes the positive root, which covers both direct descent and an
    ascend-then-descend flight; returns 0 once the target is unreachable
    (already below it with the discriminant closed).
    """
    disc = zd * zd + 2.0 * g * (z - z_target)
    if disc <= 0.0:
        return 0.0
    return max(0.0, (zd + math.sqrt(disc)) / g)


# ---------------------------------------------------------------------------
# Terrain and disturbances


@dataclass
class Terrain:
    """Piecewise-constant ground height: a single step of ``step_height``
    for x >= step_location, flat zero otherwise."""

    step_height: float = 0.0
    step_location: float = 0.0

    def height(self, x: float) -> float:
        if self.step_height != 0.0 and x >= self.step_location:
            return self.step_height
        return 0.0


@dataclass
class Disturbance:
    """Constant external force on the COM over a time window.

    The window may be fixed up front (``start``) or armed at run time by
    the scenario driver when a chosen apex event fires.
    """

    fx: float = 0.0
    fz: float = 0.0
    duration: float = 0.0
    start: Optional[float] = None

    def arm(self, t: float) -> None:
        self.start = t

    def force(self, t: float) -> tuple[float, float]:
        if self.start is None or self.duration <= 0.0:
            return (0.0, 0.0)
        if self.start <= t < self.start + self.duration:
            return (self.fx, self.fz)
        return (0.0, 0.0)


# ---------------------------------------------------------------------------
# Hybrid model


class SlipModel:
    """Planar SLIP as a hybrid model for the event-driven integrator.

    Input vector ``u = [F_t, theta_cmd]``.  The commanded angle positions
    the massless leg in flight (and thereby the touchdown guard); in stance
    it is ignored and thrust acts along the actual leg.
    """

    def __init__(self, params: SlipParams, terrain: Optional[Terrain] = None,
                 disturbance: Optional[Disturbance] = None):
        self.params = params
        self.terrain = terrain or Terrain()
        self.disturbance = disturbance

    # -- geometry helpers

    def foot_position(self, y: np.ndarray, theta_cmd: float) -> tuple[float, float]:
        x, z = y[0], y[1]
        return (x + self.params.r0 * math.sin(theta_cmd),
                z - self.params.r0 * math.cos(theta_cmd))

    def _ext_force(self, t: float) -> tuple[float, float]:
        if self.disturbance is None:
            return (0.0, 0.0)
        return self.disturbance.force(t)

    # -- HybridModel interface

    def derivative(self, t, y, u, phase, aux):
        f_ext = self._ext_force(t)
        if phase == Phase.AERIAL.value:
            return slip_aerial_derivative(y, u[0], u[1], self.params, f_ext)
        return slip_stance_derivative(y, u[0], self.params, f_ext)

    def guards(self, phase):
        if phase == Phase.AERIAL.value:
            return (
                Guard(EventKind.TOUCHDOWN.value, self._g_touchdown, priority=0,
                      direction_ok=lambda t, y, u, aux: y[3] < 0.0),
                Guard(EventKind.APEX.value, self._g_apex, priority=2),
            )
        return (Guard(EventKind.LIFTOFF.value, self._g_liftoff, priority=1),)

    def _g_touchdown(self, t, y, u, aux):
        fx, fz = self.foot_position(y, u[1])
        return fz - self.terrain.height(fx)

    def _g_apex(self, t, y, u, aux):
        return y[3]

    def _g_liftoff(self, t, y, u, aux):
        # Unclamped axial force; with damping it can reach zero while the
        # leg is still slightly compressed, which is the physical release.
        r, _, rd, _ = y
        return self.params.k_s * (self.params.r0 - r) - self.params.d_s * rd

    def reset(self, kind, t, y, u, phase, aux):
        if kind == EventKind.TOUCHDOWN.value:
            theta = u[1]
            foot = self.foot_position(y, theta)
            y_st = aerial_to_stance(y, theta, foot, self.params.r0)
            return Phase.STANCE.value, y_st, np.array(foot)
        if kind == EventKind.LIFTOFF.value:
            y_air = stance_to_aerial(y, (aux[0], aux[1]))
            return Phase.AERIAL.value, y_air, np.zeros(0)
        return phase, y.copy(), aux.copy()

    def validate_initial(self, state: HybridState) -> None:
        if state.phase == Phase.AERIAL.value:
            # A state starting on or below the touchdown surface cannot
            # integrate; the vertical-leg foot height is the tight bound.
            foot_z = state.q[1] - self.params.r0
            if foot_z < self.terrain.height(state.q[0]) - 1e-9:
                raise InvalidInitialState(
                    f"aerial SLIP foot height {foot_z:.3f} m below ground at start")
        elif state.phase == Phase.STANCE.value:
            r = state.q[0]
            if not (0.0 < r <= self.params.r0 + 1e-9):
                raise InvalidInitialState(f"stance leg length r={r:.4f} outside (0, r0]")
            if state.aux.size != 2:
                raise InvalidInitialState("stance state requires a pinned-foot aux")

    def check_state(self, t, y, phase, aux):
        if phase == Phase.STANCE.value and y[0] <= self.params.travel_limit:
            raise LegFullyCompressed(
                f"leg length {y[0]:.4f} reached travel limit at t={t:.4f}")

    def sample_extras(self, t, y, u, phase, aux):
        p = self.params
        if phase == Phase.STANCE.value:
            r, theta, rd, _ = y
            fs = spring_force(max(0.0, p.r0 - r), -rd, p)
            return {
                "x": aux[0] - r * math.sin(theta),
                "z": aux[1] + r * math.cos(theta),
                "xdot": -rd * math.sin(theta) - r * y[3] * math.cos(theta),
                "zdot": rd * math.cos(theta) - r * y[3] * math.sin(theta),
                "pitch": theta,
                "spring_deflection": p.r0 - r,
                "grf_x": -fs * math.sin(theta),
                "grf_z": fs * math.cos(theta),
            }
        return {
            "x": y[0], "z": y[1], "xdot": y[2], "zdot": y[3],
            "pitch": u[1] if u.size > 1 else 0.0,
            "spring_deflection": 0.0, "grf_x": 0.0, "grf_z": 0.0,
        }

    # -- energy bookkeeping (tests and reports)

    def mechanical_energy(self, state: HybridState) -> float:
        """Kinetic + gravitational + spring potential energy."""
        p = self.params
        if state.phase == Phase.AERIAL.value:
            x, z = state.q
            xd, zd = state.v
            return 0.5 * p.m * (xd * xd + zd * zd) + p.m * p.g * z
        r, theta = state.q
        rd, td = state.v
        ke = 0.5 * p.m * (rd * rd + r * r * td * td)
        z = state.aux[1] + r * math.cos(theta)
        s = max(0.0, p.r0 - r)
        return ke + p.m * p.g * z + 0.5 * p.k_s * s * s


def apex_state(params: SlipParams, apex_height: float, xdot: float,
               x: float = 0.0) -> HybridState:
    """Aerial state on the apex section (zdot = 0)."""
    return HybridState(Phase.AERIAL.value, np.array([x, apex_height]),
                       np.array([xdot, 0.0]), 0.0)


# ---------------------------------------------------------------------------
# 3-D point-mass SLIP (decoupled sagittal/lateral stepping)


def leg_direction_3d(pitch_angle: float, roll_angle: float) -> np.ndarray:
    """Unit vector from COM toward the foot for two plane angles.

    The sagittal (pitch-plane) angle tilts the foot along +x, the lateral
    (roll-plane) angle along +y; the vertical component closes the norm.
    """
    sx, sy = math.sin(pitch_angle), math.sin(roll_angle)
    dz2 = max(1e-12, 1.0 - sx * sx - sy * sy)
    return np.array([sx, sy, -math.sqrt(dz2)])


class Slip3DModel:
    """Point-mass SLIP in 3-D with a pinned-foot Cartesian stance phase.

    Input vector ``u = [F_t, pitch_angle, roll_angle]``.  The planar model
    run in either vertical plane is recovered exactly when the other plane
    angle and velocity are zero.
    """

    def __init__(self, params: SlipParams, disturbance=None):
        self.params = params
        self.disturbance = disturbance

    def _ext_force(self, t):
        if self.disturbance is None:
            return np.zeros(3)
        fx, fy = self.disturbance.force(t)
        return np.array([fx, fy, 0.0])

    def foot_position(self, y, u):
        d = leg_direction_3d(u[1], u[2])
        return y[:3] + self.params.r0 * d

    def derivative(self, t, y, u, phase, aux):
        p = self.params
        f_ext = self._ext_force(t)
        if phase == Phase.AERIAL.value:
            d = leg_direction_3d(u[1], u[2])
            acc = (-u[0] * d + f_ext) / p.m
            acc[2] -= p.g
            return np.concatenate([y[3:], acc])
        rel = y[:3] - aux
        r = float(np.linalg.norm(rel))
        e_r = rel / r
        rd = float(np.dot(y[3:], e_r))
        fs = spring_force(max(0.0, p.r0 - r), -rd, p)
        acc = ((fs + u[0]) * e_r + f_ext) / p.m
        acc[2] -= p.g
        return np.concatenate([y[3:], acc])

    def guards(self, phase):
        if phase == Phase.AERIAL.value:
            return (
                Guard(EventKind.TOUCHDOWN.value,
                      lambda t, y, u, aux: self.foot_position(y, u)[2],
                      priority=0,
                      direction_ok=lambda t, y, u, aux: y[5] < 0.0),
                Guard(EventKind.APEX.value, lambda t, y, u, aux: y[5], priority=2),
            )
        return (Guard(EventKind.LIFTOFF.value, self._g_liftoff, priority=1),)

    def _g_liftoff(self, t, y, u, aux):
        p = self.params
        rel = y[:3] - aux
        r = float(np.linalg.norm(rel))
        rd = float(np.dot(y[3:], rel / r))
        return p.k_s * (p.r0 - r) - p.d_s * rd

    def reset(self, kind, t, y, u, phase, aux):
        if kind == EventKind.TOUCHDOWN.value:
            foot = self.foot_position(y, u)
            return Phase.STANCE.value, y.copy(), foot
        if kind == EventKind.LIFTOFF.value:
            return Phase.AERIAL.value, y.copy(), np.zeros(0)
        return phase, y.copy(), aux.copy()

    def validate_initial(self, state):
        if state.phase == Phase.AERIAL.value and state.q[2] <= 0.0:
            raise InvalidInitialState("aerial 3-D SLIP requires COM z > 0")

    def check_state(self, t, y, phase, aux):
        if phase == Phase.STANCE.value:
            r = float(np.linalg.norm(y[:3] - aux))
            if r <= self.params.travel_limit:
                raise LegFullyCompressed(f"3-D leg at travel limit, r={r:.4f}")

    def sample_extras(self, t, y, u, phase, aux):
        p = self.params
        grf = np.zeros(3)
        deflection = 0.0
        if phase == Phase.STANCE.value:
            rel = y[:3] - aux
            r = float(np.linalg.norm(rel))
            e_r = rel / r
            rd = float(np.dot(y[3:], e_r))
            fs = spring_force(max(0.0, p.r0 - r), -rd, p)
            grf = fs * e_r
            deflection = p.r0 - r
        return {
            "x": y[0], "y": y[1], "z": y[2],
            "xdot": y[3], "ydot": y[4], "zdot": y[5],
            "pitch": u[1] if u.size > 1 else 0.0,
            "lat_angle_cmd": u[2] if u.size > 2 else 0.0,
            "spring_deflection": deflection,
            "grf_x": grf[0], "grf_y": grf[1], "grf_z": grf[2],
        }
