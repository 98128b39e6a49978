"""Closed-loop hop controllers wiring the energy QP to the swing policy.

Swing protocol (shared by the SLIP, 3-D SLIP, and planar robot loops):

* The touchdown-angle command is committed once per hop, at the apex
  event, from the apex horizontal velocity.  Starting a run on the apex
  section commits immediately from the initial state, so a cold start and
  a continuing closed-loop run follow identical input histories.
* Descent swings the leg from the previous commitment to the new one on a
  cubic Bezier whose normalized phase is re-predicted every control sample
  from the ballistic time-to-touchdown under equivalent gravity.
* After liftoff the leg swings from its liftoff angle back to the (still
  current) commitment, timed to complete exactly at the next apex.  Every
  apex therefore finds the leg parked at the previous commitment, which
  makes the apex section a well-defined one-dimensional Poincare section.

The stepping callback maps the apex velocity to a touchdown angle; a fixed
angle (used when evaluating the return map) is simply a constant callback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .energy import EnergyControllerConfig, QpSolution, vertical_controller_step
from .hybrid import Event, EventKind, HybridState, Phase
from .slip import SwingTrajectory, Terrain, time_to_height


_DESCENT = "descent"
_ASCENT = "ascent"


class _SwingTrack:
    """One plane's swing state: anchor angle/time, mode, committed target.

    Ascent swings from the liftoff angle back to the standing commitment,
    timed to finish exactly at the next apex (so every apex finds the leg
    parked at the previous commitment).  Descent retargets to the new
    commitment over a short window and then holds it, which keeps the
    closed-loop input history close to the return map's hold protocol even
    when a disturbance makes the commitment jump.
    """

    def __init__(self, retarget_window: float = 0.05):
        self.mode = None
        self.theta_from = 0.0
        self.t_anchor = 0.0
        self.committed = None
        self.retarget_window = retarget_window

    def start_descent(self, t, theta_from, target):
        self.mode = _DESCENT
        self.theta_from = theta_from
        self.t_anchor = t
        self.committed = target

    def start_ascent(self, t, theta_from):
        self.mode = _ASCENT
        self.theta_from = theta_from
        self.t_anchor = t

    def angle(self, t: float, z: float, zd: float, z_td: float, g_e: float) -> float:
        """Commanded angle at time t, with the remaining flight time
        re-predicted from the current ballistic state."""
        target = self.committed
        if self.mode is None or target is None:
            return target if target is not None else 0.0
        elapsed = max(0.0, t - self.t_anchor)
        if self.mode == _ASCENT:
            remaining = max(0.0, zd) / g_e
            total = elapsed + remaining
        else:
            remaining = time_to_height(z, zd, z_td, g_e)
            total = min(self.retarget_window, elapsed + remaining)
        tau = 1.0 if total <= 0.0 else min(1.0, elapsed / total)
        traj = SwingTrajectory(self.theta_from, target, 1.0)
        return traj.angle_at(tau)


@dataclass
class ControllerLog:
    clamp_events: int = 0
    saturation_samples: int = 0


class SlipHopController:
    """Energy-QP thrust plus committed-swing leg angle for the planar SLIP.

    ``targeting(xdot) -> u`` supplies the touchdown angle at each apex
    commitment; use a constant callback for open-loop return-map runs.
    """

    def __init__(self, config: EnergyControllerConfig,
                 targeting: Callable[[float], float],
                 r0: float, terrain: Optional[Terrain] = None):
        self.config = config
        self.targeting = targeting
        self.r0 = r0
        self.terrain = terrain or Terrain()
        self.swing = _SwingTrack()
        self.ft_prev = config.Ft_min
        self.log = ControllerLog()
        self._diag = {}

    # -- commitment bookkeeping

    def _commit(self, t: float, xdot: float) -> None:
        prev = self.swing.committed
        target = float(self.targeting(xdot))
        theta_from = prev if prev is not None else target
        self.swing.start_descent(t, theta_from, target)

    def notify(self, event: Event) -> None:
        if event.kind == EventKind.APEX.value:
            self._commit(event.t, event.state_after.v[0])
        elif event.kind == EventKind.LIFTOFF.value:
            theta_lo = event.state_before.q[1]
            self.swing.start_ascent(event.t, theta_lo)

    # -- control sample

    def command(self, t: float, state: HybridState) -> np.ndarray:
        cfg = self.config
        if state.phase == Phase.AERIAL.value:
            if self.swing.committed is None:
                self._commit(t, state.v[0])
            x, z = state.q
            xd, zd = state.v
            z_td = self.terrain.height(x) + self.r0 * math.cos(self.swing.committed)
            theta = self.swing.angle(t, z, zd, z_td, cfg.g_e)
            ft, sol = vertical_controller_step(
                state.phase, z, zd, self.ft_prev, cfg, math.cos(theta))
        else:
            theta = self.swing.committed or 0.0
            ft, sol = vertical_controller_step(state.phase, 0.0, 0.0,
                                               self.ft_prev, cfg)
        self.ft_prev = ft
        if sol.saturated:
            self.log.saturation_samples += 1
        self._diag = {
            "F_t": ft, "leg_angle_cmd": theta, "eta": sol.eta, "V": sol.V,
            "delta": sol.delta, "qp_active": _encode_active(sol),
            "u_committed": self.swing.committed if self.swing.committed is not None else 0.0,
            "ctrl_t": t,
        }
        return np.array([ft, theta])

    def diagnostics(self) -> dict:
        return dict(self._diag)


def _encode_active(sol: QpSolution) -> float:
    """Numeric code for the CSV: 0 none, 1 lower, 2 upper, 3 stance hold."""
    if "stance_hold" in sol.active_set:
        return 3.0
    if "upper" in sol.active_set:
        return 2.0
    if "lower" in sol.active_set:
        return 1.0
    return 0.0


def fixed_angle_targeting(u: float) -> Callable[[float], float]:
    return lambda xdot: u


def stepping_targeting(gait, clamp: float = 0.5,
                       log: Optional[ControllerLog] = None) -> Callable[[float], float]:
    """Deadbeat stepping callback built from a synthesized gait record."""
    from .stepping import stepping_controller

    def target(xdot: float) -> float:
        u, clamped = stepping_controller(xdot, gait, clamp=clamp, with_flag=True)
        if clamped and log is not None:
            log.clamp_events += 1
        return u

    return target


class Slip3DHopController:
    """Decoupled sagittal/lateral stepping on the 3-D point-mass SLIP.

    One energy QP regulates the vertical plane; each horizontal plane runs
    its own swing track and targeting callback.
    """

    def __init__(self, config: EnergyControllerConfig,
                 sagittal: Callable[[float], float],
                 lateral: Callable[[float], float], r0: float):
        self.config = config
        self.targets = (sagittal, lateral)
        self.r0 = r0
        self.tracks = (_SwingTrack(), _SwingTrack())
        self.ft_prev = config.Ft_min
        self._diag = {}

    def _commit(self, t, vx, vy):
        for track, fn, v in zip(self.tracks, self.targets, (vx, vy)):
            prev = track.committed
            target = float(fn(v))
            track.start_descent(t, prev if prev is not None else target, target)

    def notify(self, event: Event) -> None:
        if event.kind == EventKind.APEX.value:
            v = event.state_after.v
            self._commit(event.t, v[0], v[1])
        elif event.kind == EventKind.LIFTOFF.value:
            st = event.state_before
            rel = st.q - st.aux
            r = float(np.linalg.norm(rel))
            pitch = math.asin(max(-1.0, min(1.0, rel[0] / r)))
            roll = math.asin(max(-1.0, min(1.0, rel[1] / r)))
            self.tracks[0].start_ascent(event.t, pitch)
            self.tracks[1].start_ascent(event.t, roll)

    def command(self, t: float, state: HybridState) -> np.ndarray:
        cfg = self.config
        if state.phase == Phase.AERIAL.value:
            if self.tracks[0].committed is None:
                self._commit(t, state.v[0], state.v[1])
            z, zd = state.q[2], state.v[2]
            angles = []
            for track in self.tracks:
                z_td = self.r0 * math.cos(track.committed)
                angles.append(track.angle(t, z, zd, z_td, cfg.g_e))
            tilt = math.sqrt(max(1e-12, 1.0 - math.sin(angles[0]) ** 2
                                 - math.sin(angles[1]) ** 2))
            ft, sol = vertical_controller_step(state.phase, z, zd,
                                               self.ft_prev, cfg, tilt)
        else:
            angles = [tr.committed or 0.0 for tr in self.tracks]
            ft, sol = vertical_controller_step(state.phase, 0.0, 0.0,
                                               self.ft_prev, cfg)
        self.ft_prev = ft
        self._diag = {"F_t": ft, "leg_angle_cmd": angles[0],
                      "lat_angle_cmd": angles[1], "eta": sol.eta, "V": sol.V,
                      "delta": sol.delta, "qp_active": _encode_active(sol),
                      "ctrl_t": t}
        return np.array([ft, angles[0], angles[1]])

    def diagnostics(self) -> dict:
        return dict(self._diag)


class RobotHopController:
    """SLIP-synthesized stepping deployed on the full-order planar robot.

    The touchdown angle is realized through the body: the desired pitch
    follows the swing command (the prismatic leg is rigid in the body), and
    the onboard attitude loop turns it into a bounded moment.  The energy
    QP acts on the COM vertical state with the actual body tilt.
    """

    def __init__(self, config: EnergyControllerConfig,
                 targeting: Callable[[float], float], robot_model,
                 terrain: Optional[Terrain] = None,
                 stance_attitude: str = "free"):
        if stance_attitude not in ("free", "hold"):
            raise ValueError(f"unknown stance attitude policy {stance_attitude!r}")
        self.config = config
        self.targeting = targeting
        self.model = robot_model
        self.terrain = terrain or Terrain()
        self.stance_attitude = stance_attitude
        self.swing = _SwingTrack()
        self.ft_prev = config.Ft_min
        self.log = ControllerLog()
        self._diag = {}

    def _commit(self, t: float, xdot: float) -> None:
        prev = self.swing.committed
        target = float(self.targeting(xdot))
        self.swing.start_descent(t, prev if prev is not None else target, target)

    def notify(self, event: Event) -> None:
        if event.kind == EventKind.APEX.value:
            com = self.model.com_state(event.state_after.q, event.state_after.v)
            self._commit(event.t, com[2])
        elif event.kind == EventKind.LIFTOFF.value:
            self.swing.start_ascent(event.t, event.state_before.q[2])

    def command(self, t: float, state: HybridState) -> np.ndarray:
        cfg = self.config
        com = self.model.com_state(state.q, state.v)
        rate_des = 0.0
        if state.phase == Phase.AERIAL.value:
            if self.swing.committed is None:
                self._commit(t, com[2])
            z_td = (self.terrain.height(com[0])
                    + self.model.params.leg_rest * math.cos(self.swing.committed))
            pitch_des = self.swing.angle(t, com[1], com[3], z_td, cfg.g_e)
            # Rate feedforward from the swing profile keeps the attitude
            # proxy from lagging the commanded touchdown angle.
            dt_ff = 1e-3
            next_angle = self.swing.angle(t + dt_ff, com[1], com[3], z_td, cfg.g_e)
            rate_des = (next_angle - pitch_des) / dt_ff
            ft, sol = vertical_controller_step(
                state.phase, com[1], com[3], self.ft_prev, cfg,
                math.cos(state.q[2]))
        else:
            if self.stance_attitude == "free":
                # Follow the natural pivot about the pinned foot (zero
                # commanded moment), matching the torque-free SLIP stance.
                pitch_des, rate_des = state.q[2], state.v[2]
            else:
                pitch_des = self.swing.committed or 0.0
            ft, sol = vertical_controller_step(state.phase, 0.0, 0.0,
                                               self.ft_prev, cfg)
        self.ft_prev = ft
        if sol.saturated:
            self.log.saturation_samples += 1
        self._diag = {
            "F_t": ft, "leg_angle_cmd": pitch_des, "eta": sol.eta, "V": sol.V,
            "delta": sol.delta, "qp_active": _encode_active(sol),
            "u_committed": self.swing.committed if self.swing.committed is not None else 0.0,
            "ctrl_t": t,
        }
        return np.array([ft, pitch_des, rate_des])

    def diagnostics(self) -> dict:
        return dict(self._diag)
