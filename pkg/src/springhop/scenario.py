"""Declarative scenario execution and artifact emission.

A scenario config (flat dotted-key file, see ``config``) picks a kind
(hop, push, terrain, gait-search, design-sweep, cot), a model (slip,
slip3d, planar-robot), physical and controller parameters, and output
names.  Running a scenario produces a trajectory CSV, an events CSV, and
a report with named pass/fail checks; the ``check`` suite chains the
standard experiments twice and byte-compares the artifacts.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .controllers import (
    RobotHopController,
    SlipHopController,
    fixed_angle_targeting,
    stepping_targeting,
)
from .design import (
    bang_bang_closed_form,
    bang_bang_numeric_apex,
    BangBangSpec,
    cot_comparison,
    design_sweep_stiffness,
    design_sweep_twr,
    hopping_feasibility_boundary,
)
from .energy import EnergyControllerConfig
from .errors import ConfigError, EmptyRun, SpringhopError
from .hybrid import EventKind, IntegratorOptions, simulate_hops
from .robot import PlanarRobotModel, RobotParams, robot_aerial_state
from .slip import Disturbance, SlipModel, SlipParams, Terrain, apex_state
from .stepping import find_periodic_orbit, load_gait, params_hash, save_gait

SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "t", "phase", "x", "z", "pitch", "spring_deflection", "xdot", "zdot",
    "F_t", "leg_angle_cmd", "GRF_x", "GRF_z", "eta", "V", "delta", "qp_active",
]
_EXTRA_KEYS = {
    "x": "x", "z": "z", "pitch": "pitch", "spring_deflection": "spring_deflection",
    "xdot": "xdot", "zdot": "zdot", "GRF_x": "grf_x", "GRF_z": "grf_z",
    "F_t": "F_t", "leg_angle_cmd": "leg_angle_cmd", "eta": "eta", "V": "V",
    "delta": "delta", "qp_active": "qp_active",
}


# ---------------------------------------------------------------------------
# Config -> objects


def build_slip_params(cfg: dict) -> SlipParams:
    return SlipParams(
        m=cfgmod.get_typed(cfg, "slip.m", float, 2.5),
        k_s=cfgmod.get_typed(cfg, "slip.k", float, 4848.5),
        d_s=cfgmod.get_typed(cfg, "slip.d", float, 15.0),
        r0=cfgmod.get_typed(cfg, "slip.r0", float, 0.30),
        g=cfgmod.get_typed(cfg, "gravity", float, 9.81),
    )


def build_robot_params(cfg: dict) -> RobotParams:
    return RobotParams(
        m_body=cfgmod.get_typed(cfg, "robot.m_body", float, 2.3),
        m_leg=cfgmod.get_typed(cfg, "robot.m_leg", float, 0.2),
        I_body=cfgmod.get_typed(cfg, "robot.I_body", float, 0.02),
        offset=cfgmod.get_typed(cfg, "robot.offset", float, 0.0),
        k_s=cfgmod.get_typed(cfg, "robot.k", float, 4848.5),
        d_s=cfgmod.get_typed(cfg, "robot.d", float, 15.0),
        r0=cfgmod.get_typed(cfg, "robot.r0", float, 0.08),
        travel=cfgmod.get_typed(cfg, "robot.travel", float, 0.10),
        k_t=cfgmod.get_typed(cfg, "robot.k_t", float, 60.0),
        tau_min=cfgmod.get_typed(cfg, "robot.tau_min", float, 0.005),
        tau_max=cfgmod.get_typed(cfg, "robot.tau_max", float, 0.12),
        twr=cfgmod.get_typed(cfg, "robot.twr", float, 0.9),
        g=cfgmod.get_typed(cfg, "gravity", float, 9.81),
        pitch_bw_hz=cfgmod.get_typed(cfg, "robot.pitch_bw_hz", float, 2.0),
    )


def build_ctrl(cfg: dict, mass: float) -> EnergyControllerConfig:
    g = cfgmod.get_typed(cfg, "gravity", float, 9.81)
    apex = cfgmod.get_typed(cfg, "ctrl.apex_height", float, required=False)
    try:
        base = EnergyControllerConfig.for_apex(
            m=mass, g=g,
            ft_min=cfgmod.get_typed(cfg, "ctrl.Ft_min", float, 15.2523),
            ft_max=cfgmod.get_typed(cfg, "ctrl.Ft_max", float, 22.0),
            apex_height=apex if apex is not None else 0.5,
            Kp=cfgmod.get_typed(cfg, "ctrl.Kp", float, -5.0),
            Q=cfgmod.get_typed(cfg, "ctrl.Q", float, 1.0),
            gamma=cfgmod.get_typed(cfg, "ctrl.gamma", float, 20.0),
            p=cfgmod.get_typed(cfg, "ctrl.p", float, 0.0),
            variant=cfgmod.get(cfg, "ctrl.variant", "relaxed_equality"),
        )
    except SpringhopError as exc:
        raise ConfigError(f"controller config invalid: {exc}") from exc
    e_d = cfgmod.get_typed(cfg, "ctrl.E_d", float, required=False)
    if e_d is not None:
        from dataclasses import replace
        base = replace(base, E_d=e_d)
    return base


def build_opts(cfg: dict) -> IntegratorOptions:
    return IntegratorOptions(
        abs_tol=cfgmod.get_typed(cfg, "abs_tol", float, 1e-10),
        rel_tol=cfgmod.get_typed(cfg, "rel_tol", float, 1e-8),
        event_tol=cfgmod.get_typed(cfg, "event_tol", float, 1e-9),
        control_rate_hz=cfgmod.get_typed(cfg, "control_rate_hz", float, 200.0),
        min_step=cfgmod.get_typed(cfg, "min_step", float, 1e-12),
    )


def build_terrain(cfg: dict) -> Terrain:
    return Terrain(
        step_height=cfgmod.get_typed(cfg, "terrain.step_height", float, 0.0),
        step_location=cfgmod.get_typed(cfg, "terrain.step_location", float, 0.0),
    )


def build_disturbance(cfg: dict):
    force = cfgmod.get_typed(cfg, "push.force", float, 0.0)
    if force == 0.0:
        return None, None
    dist = Disturbance(
        fx=force,
        fz=cfgmod.get_typed(cfg, "push.force_z", float, 0.0),
        duration=cfgmod.get_typed(cfg, "push.duration", float, 0.1),
        start=cfgmod.get_typed(cfg, "push.start", float, required=False),
    )
    at_apex = cfgmod.get_typed(cfg, "push.at_apex", int, required=False)
    if dist.start is None and at_apex is None:
        raise ConfigError("push requires either push.start or push.at_apex")
    if dist.duration <= 0:
        raise ConfigError("push.duration must be positive")
    return dist, at_apex


# ---------------------------------------------------------------------------
# Reports


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    op: str = "<="   # value op threshold

    def __post_init__(self):
        self.value = float(self.value)
        self.threshold = float(self.threshold)

    @property
    def passed(self) -> bool:
        if self.op == "<=":
            return self.value <= self.threshold
        if self.op == ">=":
            return self.value >= self.threshold
        raise ValueError(self.op)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.value:.6g} {self.op} {self.threshold:.6g}"


@dataclass
class Report:
    name: str
    checks: list = field(default_factory=list)
    apex_rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    termination: str = ""
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [f"== scenario {self.name} (termination: {self.termination or 'n/a'})"]
        if self.apex_rows:
            lines.append("   step    t        height    xdot      energy    angle_cmd")
            for row in self.apex_rows:
                lines.append("   %4d  %8.3f  %8.4f  %+8.4f  %8.4f  %+8.4f" % row)
        lines.extend("   " + note for note in self.notes)
        lines.extend("   " + c.line() for c in self.checks)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "termination": self.termination,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "value": c.value, "threshold": c.threshold,
                 "op": c.op, "passed": c.passed}
                for c in self.checks
            ],
            "notes": list(self.notes),
            "artifacts": [str(a) for a in self.artifacts],
        }


def emit_report(reports: list, out_dir) -> int:
    """Write the human summary and machine check file; return exit code."""
    if not reports:
        raise EmptyRun("no scenario results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = "\n\n".join(r.to_text() for r in reports) + "\n"
    _atomic_write(out_dir / "report.txt", text)
    payload = {"reports": [r.to_dict() for r in reports],
               "passed": all(r.passed for r in reports)}
    _atomic_write(out_dir / "checks.json", json.dumps(payload, indent=2) + "\n")
    return 0 if payload["passed"] else 1


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_trajectory_csv(path, traj, extra_columns=()) -> None:
    columns = CSV_COLUMNS + list(extra_columns)
    lines = [f"# schema={SCHEMA_VERSION} columns={len(columns)}",
             ",".join(columns)]
    for s in traj.samples:
        row = []
        for col in columns:
            if col == "t":
                row.append(_fmt(s.t))
            elif col == "phase":
                row.append(s.phase)
            else:
                key = _EXTRA_KEYS.get(col, col)
                row.append(_fmt(s.extras.get(key, 0.0)))
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_events_csv(path, traj, measure) -> None:
    lines = [f"# schema={SCHEMA_VERSION}", "kind,t,x,z,xdot,zdot"]
    for ev in traj.events:
        x, z, xd, zd = measure(ev.state_after)
        lines.append(",".join([ev.kind, _fmt(ev.t), _fmt(x), _fmt(z),
                               _fmt(xd), _fmt(zd)]))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_rows_csv(path, rows: list, columns: list) -> None:
    lines = [f"# schema={SCHEMA_VERSION}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) if row[c] is not None else "nan"
                              for c in columns))
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Scenario execution


class _ApexTap:
    """Controller wrapper: apex bookkeeping and deferred push arming."""

    def __init__(self, inner, measure, disturbance=None, arm_at_apex=None):
        self.inner = inner
        self.measure = measure
        self.disturbance = disturbance
        self.arm_at_apex = arm_at_apex
        self.apexes = []

    def command(self, t, state):
        return self.inner.command(t, state)

    def diagnostics(self):
        return self.inner.diagnostics()

    def notify(self, event):
        self.inner.notify(event)
        if event.kind == EventKind.APEX.value:
            x, z, xd, zd = self.measure(event.state_after)
            self.apexes.append((len(self.apexes), event.t, z, xd, x))
            if (self.disturbance is not None and self.arm_at_apex is not None
                    and len(self.apexes) == self.arm_at_apex):
                self.disturbance.arm(event.t)


def _slip_measure(model):
    def measure(state):
        ex = model.sample_extras(state.t, state.y, np.zeros(2), state.phase, state.aux)
        return ex["x"], ex["z"], ex["xdot"], ex["zdot"]
    return measure


def _robot_measure(model):
    def measure(state):
        com = model.com_state(state.q, state.v)
        return com[0], com[1], com[2], com[3]
    return measure


def _load_scenario_gait(cfg: dict, params: SlipParams,
                        ctrl: EnergyControllerConfig, out_dir):
    gait_file = cfgmod.get(cfg, "gait.file", required=False)
    if gait_file is None:
        return None
    path = Path(gait_file)
    if not path.is_absolute():
        path = Path(out_dir) / path
    return load_gait(path, expected_hash=params_hash(params, ctrl))


def _apex_report_rows(tap, ctrl):
    rows = []
    for idx, t, z, xd, x in tap.apexes:
        energy = ctrl.mass * ctrl.g_e * z
        rows.append((idx, t, z, xd, energy, 0.0))
    return rows


def run_scenario(cfg: dict, out_dir, name=None) -> Report:
    kind = cfgmod.get(cfg, "kind", required=True)
    if kind == "gait-search":
        _, report = run_gait_search(cfg, out_dir)
        return report
    if kind == "design-sweep":
        return run_design(cfg, out_dir, name=name)
    if kind == "cot":
        return run_cot(cfg, out_dir, name=name)
    if kind in ("hop", "push", "terrain"):
        return _run_sim_scenario(cfg, out_dir, name=name)
    raise ConfigError(f"unknown scenario kind {kind!r}")


def _run_sim_scenario(cfg: dict, out_dir, name=None) -> Report:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = cfgmod.get(cfg, "kind", required=True)
    model_name = cfgmod.get(cfg, "model", "slip")
    name = name or cfgmod.get(cfg, "name", f"{kind}-{model_name}")
    opts = build_opts(cfg)
    n_steps = cfgmod.get_typed(cfg, "sim.n_steps", int, 10)
    t_max = cfgmod.get_typed(cfg, "sim.t_max", float, 3.0 * n_steps)
    terrain = build_terrain(cfg)
    disturbance, at_apex = build_disturbance(cfg)

    slip_params = build_slip_params(cfg)
    ctrl = build_ctrl(cfg, slip_params.m)
    gait = _load_scenario_gait(cfg, slip_params, ctrl, out_dir)
    xdot_des = cfgmod.get_typed(cfg, "sim.xdot_des", float,
                                gait.xdot_star if gait else 0.0)
    apex0 = cfgmod.get_typed(cfg, "sim.start_apex", float,
                             gait.apex_height if gait else ctrl.apex_height)
    targeting = (stepping_targeting(gait) if gait is not None
                 else fixed_angle_targeting(cfgmod.get_typed(cfg, "sim.fixed_angle",
                                                             float, 0.0)))

    if model_name == "slip":
        model = SlipModel(slip_params, terrain=terrain, disturbance=disturbance)
        controller = SlipHopController(ctrl, targeting, slip_params.r0, terrain)
        state = apex_state(slip_params, apex0, xdot_des)
        measure = _slip_measure(model)
    elif model_name == "planar-robot":
        robot_params = build_robot_params(cfg)
        model = PlanarRobotModel(robot_params, terrain=terrain,
                                 disturbance=disturbance)
        controller = RobotHopController(ctrl, targeting, model, terrain)
        state = robot_aerial_state(robot_params, apex0, xdot_des)
        measure = _robot_measure(model)
    else:
        raise ConfigError(f"unknown model {model_name!r} for kind {kind!r}")

    tap = _ApexTap(controller, measure, disturbance, at_apex)
    report = Report(name=name)
    try:
        traj = simulate_hops(model, state, tap, n_steps, t_max=t_max, opts=opts)
        report.termination = traj.termination
    except SpringhopError as exc:
        report.termination = f"error: {type(exc).__name__}: {exc}"
        report.checks.append(Check("completed", 0.0, 1.0, ">="))
        return report

    prefix = cfgmod.get(cfg, "out.prefix", name)
    traj_path = out_dir / f"{prefix}_trajectory.csv"
    events_path = out_dir / f"{prefix}_events.csv"
    write_trajectory_csv(traj_path, traj)
    write_events_csv(events_path, traj, measure)
    report.artifacts = [traj_path, events_path]
    report.apex_rows = _apex_report_rows(tap, ctrl)
    _attach_checks(report, cfg, kind, tap, ctrl, xdot_des)
    return report


def _attach_checks(report: Report, cfg: dict, kind: str, tap: _ApexTap,
                   ctrl: EnergyControllerConfig, xdot_des: float) -> None:
    apexes = tap.apexes
    apex_des = cfgmod.get_typed(cfg, "ctrl.apex_height", float, ctrl.apex_height)
    if kind == "hop":
        window = min(20, len(apexes))
        tail = apexes[-window:]
        vel_err = max(abs(a[3] - xdot_des) for a in tail)
        z_err = max(abs(a[2] - apex_des) / apex_des for a in tail)
        report.checks.append(Check("steady_velocity_error", vel_err, 0.05))
        report.checks.append(Check(f"apex_height_rel_error_{window}hops", z_err, 0.02))
    elif kind == "push":
        recover_by = cfgmod.get_typed(cfg, "push.recover_within", int, 2)
        start = tap.disturbance.start if tap.disturbance else None
        post = [a for a in apexes if start is not None and a[1] > start]
        if len(post) < recover_by + 1:
            report.checks.append(Check("enough_post_push_apexes", len(post),
                                       recover_by + 1, ">="))
            return
        settled = post[recover_by - 1:recover_by + 3]
        err = max(abs(a[3] - xdot_des) for a in settled)
        report.checks.append(Check(f"recovery_by_apex_{recover_by}", err, 0.1))
        kick = max(abs(a[3] - xdot_des) for a in post[:1])
        report.notes.append(f"peak apex velocity deviation {kick:.3f} m/s")
    elif kind == "terrain":
        step_x = cfgmod.get_typed(cfg, "terrain.step_location", float, 0.0)
        before = [a for a in apexes if a[4] < step_x]
        after = [a for a in apexes if a[4] >= step_x]
        if len(before) < 2 or len(after) < 2:
            report.checks.append(Check("apexes_on_both_sides",
                                       min(len(before), len(after)), 2, ">="))
            return
        ref = before[-1][2]
        # Skip one transient hop after the step.
        err = max(abs(a[2] - ref) / ref for a in after[1:])
        report.checks.append(Check("apex_height_change_after_step", err, 0.02))
        report.notes.append(
            f"absolute apex before step {ref:.4f} m, after {after[-1][2]:.4f} m")


def run_gait_search(cfg: dict, out_dir) -> tuple[Path, Report]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfgmod.get(cfg, "name", "gait-search")
    params = build_slip_params(cfg)
    ctrl = build_ctrl(cfg, params.m)
    opts = build_opts(cfg)
    xdot_des = cfgmod.get_typed(cfg, "gait.xdot", float, required=True)
    apex_des = cfgmod.get_typed(cfg, "ctrl.apex_height", float, required=True)
    gait = find_periodic_orbit(xdot_des, apex_des, params, ctrl, opts=opts)
    gait_path = out_dir / cfgmod.get(cfg, "gait.file", f"{name}.gait")
    gait_path.parent.mkdir(parents=True, exist_ok=True)
    save_gait(gait_path, gait)
    report = Report(name=name, termination="completed", artifacts=[gait_path])
    report.notes.append(
        f"gait: xdot*={gait.xdot_star:.4f} u*={gait.u_star:.6f} "
        f"apex={gait.apex_height:.6f} A={gait.A:.4f} B={gait.B:.4f} K={gait.K:.4f}")
    report.checks.append(Check("fixed_point_residual", gait.residual, 1e-5))
    report.checks.append(Check("deadbeat_identity", abs(gait.A + gait.B * gait.K),
                               1e-12))
    return gait_path, report


def run_design(cfg: dict, out_dir, name=None) -> Report:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or cfgmod.get(cfg, "name", "design-sweep")
    report = Report(name=name, termination="completed")
    weights = cfgmod.get(cfg, "sweep.weights", [1.5, 2.0, 2.5, 3.0])
    stiffness = cfgmod.get(cfg, "sweep.stiffness", [2e3, 4e3, 6e3, 8e3, 1e4])
    twr_grid = cfgmod.get(cfg, "sweep.twr", [round(0.1 * i, 2) for i in range(1, 10)])
    apex_a = cfgmod.get_typed(cfg, "sweep.target_apex", float, 1.3)
    d_s = cfgmod.get_typed(cfg, "sweep.damping", float, 15.0)
    r0 = cfgmod.get_typed(cfg, "sweep.r0", float, 0.30)

    rows_a = design_sweep_stiffness(weights, stiffness, apex_a, d_s=d_s, r0=r0)
    path_a = out_dir / "design_fig6a.csv"
    write_rows_csv(path_a, rows_a, ["weight_kg", "stiffness", "F_max_required",
                                    "feasible"])
    rows_b = design_sweep_twr(stiffness, twr_grid, d_s=d_s, r0=r0)
    path_b = out_dir / "design_fig6b.csv"
    write_rows_csv(path_b, rows_b, ["twr", "stiffness", "apex", "feasible"])
    report.artifacts = [path_a, path_b]

    # Closed form vs event-driven integration over the stiffness grid.
    max_diff = 0.0
    for k in stiffness:
        for frac in (0.5, 0.8):
            spec = BangBangSpec(m=2.5, k_s=k, d_s=d_s, F_max=frac * 2.5 * 9.81,
                                F_min=0.0, target_apex=apex_a, r0=r0)
            closed = bang_bang_closed_form(spec)["apex"]
            numeric = bang_bang_numeric_apex(spec)
            max_diff = max(max_diff, abs(closed - numeric))
    report.checks.append(Check("closed_form_vs_numeric_apex", max_diff, 1e-4))

    # Monotonicity of the tables.
    worst_w = 0.0
    for k in stiffness:
        col = [r["F_max_required"] for r in rows_a if r["stiffness"] == k
               and r["F_max_required"] is not None]
        worst_w = max(worst_w, max((a - b for a, b in zip(col, col[1:])),
                                   default=0.0))
    report.checks.append(Check("required_thrust_monotone_in_weight", worst_w, 1e-9))
    worst_t = 0.0
    for k in stiffness:
        col = [r["apex"] for r in rows_b if r["stiffness"] == k]
        worst_t = max(worst_t, max((a - b for a, b in zip(col, col[1:])),
                                   default=0.0))
    report.checks.append(Check("achievable_apex_monotone_in_twr", worst_t, 1e-9))
    return report


def run_cot(cfg: dict, out_dir, name=None) -> Report:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = name or cfgmod.get(cfg, "name", "cot")
    report = Report(name=name, termination="completed")
    params = build_slip_params(cfg)
    twr_grid = cfgmod.get(cfg, "cot.twr", [round(0.1 * i, 2) for i in range(3, 13)])
    apex = cfgmod.get_typed(cfg, "cot.apex", float, 1.0)
    v = cfgmod.get_typed(cfg, "cot.xdot", float, 1.0)
    n_steps = cfgmod.get_typed(cfg, "cot.n_steps", int, 6)
    results = cot_comparison(params, twr_grid, target_apex=apex, v=v,
                             n_steps=n_steps, opts=build_opts(cfg))
    rows = [{"twr": r.twr, "mode": r.mode,
             "cot": r.cot if math.isfinite(r.cot) else None,
             "mean_velocity": r.mean_velocity, "feasible": r.feasible}
            for r in results]
    path = out_dir / "cot_fig6c.csv"
    write_rows_csv(path, rows, ["twr", "mode", "cot", "mean_velocity", "feasible"])
    report.artifacts = [path]

    flying = {r.twr: r for r in results if r.mode == "flying"}
    hopping = {r.twr: r for r in results if r.mode == "hopping"}
    fly_above = [r for r in flying.values() if r.twr > 1.0]
    if fly_above:
        err = max(abs(r.cot - 1.0 / v) for r in fly_above)
        report.checks.append(Check("flying_cot_equals_1_over_v", err, 1e-12))
    fly_below_ok = all(not r.feasible for r in flying.values() if r.twr <= 1.0)
    report.checks.append(Check("flying_infeasible_at_twr_leq_1",
                               1.0 if fly_below_ok else 0.0, 1.0, ">="))
    if 0.9 in hopping:
        report.checks.append(Check("hopping_feasible_at_twr_0p9",
                                   1.0 if hopping[0.9].feasible else 0.0, 1.0, ">="))
        if hopping[0.9].feasible:
            report.notes.append(f"hopping COT at TWR 0.9: {hopping[0.9].cot:.4f}")
    boundary = hopping_feasibility_boundary(results)
    if boundary is not None:
        report.checks.append(Check("hopping_boundary_leq_0p9", boundary, 0.9))
        report.notes.append(f"measured hopping feasibility boundary: TWR {boundary}")
    else:
        report.checks.append(Check("hopping_boundary_found", 0.0, 1.0, ">="))
    return report


# ---------------------------------------------------------------------------
# Standard experiment suite (the `check` subcommand)


_HARDWARE_CTRL = {
    "ctrl.Ft_min": 15.2523, "ctrl.Ft_max": 22.0, "ctrl.gamma": 20.0,
    "gravity": 9.81,
}


def standard_suite() -> list[dict]:
    """The reproduction experiments: gait searches, hop/push/terrain runs,
    the design sweeps, and the transport-cost comparison."""
    suite = []
    suite.append({
        "name": "gait_05", "kind": "gait-search", "gait.xdot": 0.5,
        "ctrl.apex_height": 0.5, "gait.file": "gaits/gait_05.gait",
        **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "gait_11", "kind": "gait-search", "gait.xdot": 0.5,
        "ctrl.apex_height": 1.1, "gait.file": "gaits/gait_11.gait",
        **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "hop_slip", "kind": "hop", "model": "slip",
        "ctrl.apex_height": 0.5, "gait.file": "gaits/gait_05.gait",
        "sim.n_steps": 24, "sim.t_max": 40.0, **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "hop_planar", "kind": "hop", "model": "planar-robot",
        "ctrl.apex_height": 0.5, "gait.file": "gaits/gait_05.gait",
        "robot.offset": 0.22, "sim.n_steps": 24, "sim.t_max": 40.0,
        **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "push_slip", "kind": "push", "model": "slip",
        "ctrl.apex_height": 0.5, "gait.file": "gaits/gait_05.gait",
        "push.force": 10.0, "push.duration": 0.1, "push.at_apex": 4,
        "push.recover_within": 2, "sim.n_steps": 10, "sim.t_max": 20.0,
        **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "push_planar", "kind": "push", "model": "planar-robot",
        "ctrl.apex_height": 0.5, "gait.file": "gaits/gait_05.gait",
        "robot.offset": 0.22, "push.force": 10.0, "push.duration": 0.1,
        "push.at_apex": 4, "push.recover_within": 3, "sim.n_steps": 12,
        "sim.t_max": 25.0, **_HARDWARE_CTRL,
    })
    suite.append({
        "name": "terrain_slip", "kind": "terrain", "model": "slip",
        "ctrl.apex_height": 1.1, "gait.file": "gaits/gait_11.gait",
        "terrain.step_height": 0.12, "terrain.step_location": 2.0,
        "sim.n_steps": 14, "sim.t_max": 40.0, **_HARDWARE_CTRL,
    })
    suite.append({"name": "design", "kind": "design-sweep"})
    suite.append({"name": "cot", "kind": "cot"})
    return suite


def run_energy_consistency(out_dir) -> Report:
    """Hardware-parameter energy bookkeeping and apex regulation check."""
    report = Report(name="energy_consistency", termination="completed")
    m, g, apex = 2.5, 9.81, 1.1
    ctrl = EnergyControllerConfig.for_apex(m=m, g=g, ft_min=15.2523,
                                           ft_max=22.0, apex_height=apex,
                                           gamma=20.0)
    report.notes.append(f"g_e = {ctrl.g_e:.6f} m/s^2, E_d = {ctrl.E_d:.6f} J")
    report.checks.append(Check(
        "energy_level_consistency",
        abs(m * ctrl.g_e * apex - 10.2) / 10.2, 0.005))
    params = build_slip_params({})
    model = SlipModel(params)
    controller = SlipHopController(ctrl, fixed_angle_targeting(0.0), params.r0)
    z0 = 0.9 * ctrl.E_d / (m * ctrl.g_e)
    tap = _ApexTap(controller, _slip_measure(model))
    traj = simulate_hops(model, apex_state(params, z0, 0.0), tap, 6, t_max=20.0,
                         opts=IntegratorOptions())
    report.termination = traj.termination
    if len(tap.apexes) >= 5:
        err5 = abs(tap.apexes[4][2] - apex) / apex
        report.checks.append(Check("apex_within_1pct_by_hop_5", err5, 0.01))
        hop_of_conv = next((i + 1 for i, a in enumerate(tap.apexes)
                            if abs(a[2] - apex) / apex <= 0.01), None)
        report.notes.append(f"converged within 1% at hop {hop_of_conv}")
    else:
        report.checks.append(Check("enough_hops", len(tap.apexes), 5, ">="))
    traj_path = Path(out_dir) / "energy_consistency_trajectory.csv"
    write_trajectory_csv(traj_path, traj)
    report.artifacts = [traj_path]
    return report


def _run_suite_once(out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for cfg in standard_suite():
        reports.append(run_scenario(dict(cfg), out_dir))
    reports.append(run_energy_consistency(out_dir))
    return reports


def run_check(out_dir, quiet: bool = False) -> tuple[int, list]:
    """Run the full suite twice, byte-compare artifacts, emit the report."""
    out_dir = Path(out_dir)
    reports = _run_suite_once(out_dir / "pass1")
    _run_suite_once(out_dir / "pass2")
    mismatched = []
    for path1 in sorted((out_dir / "pass1").rglob("*")):
        if path1.is_dir() or path1.suffix not in (".csv", ".gait"):
            continue
        path2 = out_dir / "pass2" / path1.relative_to(out_dir / "pass1")
        if not path2.exists() or path1.read_bytes() != path2.read_bytes():
            mismatched.append(str(path1.name))
    det = Report(name="determinism", termination="completed")
    det.checks.append(Check("byte_identical_artifacts", float(len(mismatched)), 0.0))
    if mismatched:
        det.notes.append("mismatched: " + ", ".join(mismatched))
    reports.append(det)
    code = emit_report(reports, out_dir)
    if not quiet:
        print((out_dir / "report.txt").read_text())
    return code, reports
