"""Phase-tagged hybrid states and an event-driven adaptive RK45 integrator.

The integrator advances any hybrid model (point-mass SLIP, planar robot,
vertical design oracle) through its phases.  A model supplies the vector
field per phase, a set of guard functions, and reset maps; the integrator
owns step-size control, guard localization, and the zero-order-hold
sampling of the controller callback.

Guard functions are written so that they are strictly positive before the
event and cross zero at it.  Localization is a safeguarded bisection on the
dense-output sign change followed by secant refinement, to within
``IntegratorOptions.event_tol`` seconds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .errors import (
    InvalidArgument,
    NonFiniteState,
    StepSizeUnderflow,
)


class Phase(str, enum.Enum):
    """Contact phase of a hopping model.

    Transitions are Aerial -> Stance (touchdown, via an impact/reset map)
    and Stance -> Aerial (liftoff, continuous).  Auxiliary models may use
    their own phase strings; the integrator treats phases opaquely.
    """

    AERIAL = "aerial"
    STANCE = "stance"


class EventKind(str, enum.Enum):
    TOUCHDOWN = "touchdown"
    LIFTOFF = "liftoff"
    APEX = "apex"


# Lower number fires first when two guards cross within event_tol of each
# other.  Simultaneous crossings are physically degenerate; the winner is
# deterministic and the tie is logged on the trajectory.
GUARD_PRIORITY = {
    EventKind.TOUCHDOWN.value: 0,
    EventKind.LIFTOFF.value: 1,
    EventKind.APEX.value: 2,
}


@dataclass
class HybridState:
    """Generalized positions/velocities plus phase tag and time.

    ``q`` and ``v`` have the same, model-fixed dimension.  ``aux`` carries
    phase-specific constants (e.g. the pinned foot location in stance).
    """

    phase: str
    q: np.ndarray
    v: np.ndarray
    t: float = 0.0
    aux: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "HybridState":
        return HybridState(self.phase, self.q.copy(), self.v.copy(), self.t, self.aux.copy())

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])


def state_from_vector(phase: str, y: np.ndarray, t: float, aux: np.ndarray) -> HybridState:
    n = y.size // 2
    return HybridState(phase, y[:n].copy(), y[n:].copy(), t, np.asarray(aux, dtype=float).copy())


@dataclass(frozen=True)
class Guard:
    """Scalar event function, positive before the event, zero at it.

    ``fn(t, y, u, aux) -> float``.  ``direction_ok`` optionally vetoes a
    localized crossing (e.g. touchdown requires a descending foot).
    """

    kind: str
    fn: Callable[[float, np.ndarray, np.ndarray, np.ndarray], float]
    priority: int = 5
    direction_ok: Optional[Callable[[float, np.ndarray, np.ndarray, np.ndarray], bool]] = None


@dataclass
class Event:
    kind: str
    t: float
    state_before: HybridState
    state_after: HybridState


@dataclass
class Sample:
    """One logged integration point with the held input and model extras."""

    t: float
    phase: str
    q: np.ndarray
    v: np.ndarray
    u: np.ndarray
    extras: dict
    aux: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    termination: str = "t_max"

    def extend(self, other: "Trajectory") -> None:
        self.samples.extend(other.samples)
        self.events.extend(other.events)
        self.termination = other.termination

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]

    @property
    def final_state(self) -> HybridState:
        if self.events and (not self.samples or self.events[-1].t >= self.samples[-1].t):
            return self.events[-1].state_after.copy()
        s = self.samples[-1]
        return HybridState(s.phase, s.q.copy(), s.v.copy(), s.t)


@dataclass(frozen=True)
class IntegratorOptions:
    # Tolerances sit one decade under the usual 1e-9/1e-7 so that a
    # conservative hop keeps its mechanical energy to 1e-6 J; the cost is
    # a few percent more stance steps.
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    event_tol: float = 1e-9
    control_rate_hz: float = 200.0
    min_step: float = 1e-12
    first_step: float = 1e-4

    def tightened(self, factor: float) -> "IntegratorOptions":
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=self.rel_tol * factor)


class HybridModel(Protocol):
    """Interface the integrator requires from a hybrid model."""

    def derivative(self, t: float, y: np.ndarray, u: np.ndarray, phase: str,
                   aux: np.ndarray) -> np.ndarray: ...

    def guards(self, phase: str) -> Sequence[Guard]: ...

    def reset(self, kind: str, t: float, y: np.ndarray, u: np.ndarray, phase: str,
              aux: np.ndarray) -> tuple[str, np.ndarray, np.ndarray]: ...

    def validate_initial(self, state: HybridState) -> None: ...

    def check_state(self, t: float, y: np.ndarray, phase: str, aux: np.ndarray) -> None: ...

    def sample_extras(self, t: float, y: np.ndarray, u: np.ndarray, phase: str,
                      aux: np.ndarray) -> dict: ...


class Controller(Protocol):
    """Zero-order-hold control callback sampled at the configured rate."""

    def command(self, t: float, state: HybridState) -> np.ndarray: ...

    def notify(self, event: Event) -> None: ...

    def diagnostics(self) -> dict: ...


class ConstantController:
    """Holds a fixed input vector; useful for open-loop runs and tests."""

    def __init__(self, u: Sequence[float] = ()):  # noqa: D401
        self._u = np.asarray(u, dtype=float)

    def command(self, t, state):
        return self._u

    def notify(self, event):
        pass

    def diagnostics(self):
        return {}


# Dormand-Prince 5(4) coefficients.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _rk45_step(f, t, y, h, k1):
    """One Dormand-Prince step; returns (y_new, err_norm_unscaled_k, k_last)."""
    k = [k1]
    for i in range(1, 7):
        yi = y.copy()
        ai = _A[i]
        for j, a in enumerate(ai):
            if a != 0.0:
                yi = yi + (h * a) * k[j]
        k.append(f(t + _C[i] * h, yi))
    y_new = y.copy()
    for j, b in enumerate(_B):
        if b != 0.0:
            y_new = y_new + (h * b) * k[j]
    err = np.zeros_like(y)
    for j, e in enumerate(_E):
        if e != 0.0:
            err = err + (h * e) * k[j]
    return y_new, err, k[6]


def _hermite(t0, y0, f0, t1, y1, f1, t):
    """Cubic Hermite interpolant on one accepted step."""
    h = t1 - t0
    if h == 0.0:
        return y0.copy()
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + (h * h10) * f0 + h01 * y1 + (h * h11) * f1


def _localize(gfn, interp, t0, t1, v0, v1, event_tol):
    """Bisection on the dense-output sign change, then secant refinement.

    Returns (t_event, y_event).  ``gfn`` maps (t, y) -> guard value,
    ``interp(t)`` evaluates the dense output; the bracket [t0, t1]
    satisfies v0 > 0 >= v1.
    """
    a, b = t0, t1
    va, vb = v0, v1
    for _ in range(32):
        if b - a <= event_tol:
            break
        m = 0.5 * (a + b)
        vm = gfn(m, interp(m))
        if vm > 0.0:
            a, va = m, vm
        else:
            b, vb = m, vm
    # Secant refinement, safeguarded to stay inside the bracket.
    ta, tb = a, b
    fa, fb = va, vb
    for _ in range(8):
        if tb - ta <= event_tol or fb == fa:
            break
        tc = tb - fb * (tb - ta) / (fb - fa)
        if not (ta < tc < tb):
            tc = 0.5 * (ta + tb)
        vc = gfn(tc, interp(tc))
        if vc > 0.0:
            ta, fa = tc, vc
        else:
            tb, fb = tc, vc
    t_e = tb
    return t_e, interp(t_e)


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"non-finite state at t={t:.6f}")


def _advance_exact(f, t0, y0, t_end, opts):
    """Error-controlled advance to an exact time (event-state refinement).

    The dense-output interpolant used for guard localization is fourth
    order; re-integrating the partial step keeps event states as accurate
    as the trajectory itself, which matters for energy bookkeeping across
    stiff stance steps.
    """
    t, y = t0, y0.copy()
    h = max(t_end - t0, opts.min_step)
    k1 = f(t, y)
    while t < t_end - 1e-15:
        h = min(h, t_end - t)
        y_new, err_vec, k_last = _rk45_step(f, t, y, h, k1)
        scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t, y, k1 = t + h, y_new, k_last
            h *= 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < opts.min_step:
                raise StepSizeUnderflow(f"event refinement stalled at t={t:.6f}")
    return y


class _Stepper:
    """Adaptive-step state shared across control windows of one trajectory."""

    def __init__(self, opts: IntegratorOptions):
        self.opts = opts
        self.h = opts.first_step

    def advance(self, f, t, y, t_end, on_step):
        """Integrate until t_end, calling on_step after each accepted step.

        ``on_step(t0, y0, f0, t1, y1, f1) -> float | None`` may return a
        truncation time (an event inside the step); integration stops there.
        """
        opts = self.opts
        k1 = f(t, y)
        while t < t_end:
            h = min(self.h, t_end - t)
            accepted = False
            while not accepted:
                if h < opts.min_step:
                    raise StepSizeUnderflow(f"step {h:.3e} below min_step at t={t:.6f}")
                y_new, err_vec, k_last = _rk45_step(f, t, y, h, k1)
                _check_finite(y_new, t + h)
                scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
                err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))
                if err <= 1.0:
                    accepted = True
                    factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                else:
                    factor = max(0.2, 0.9 * err ** -0.2)
                h_next = h * factor
                if not accepted:
                    h = h_next
            stop = on_step(t, y, k1, t + h, y_new, k_last)
            self.h = max(h_next, opts.min_step)
            if stop is not None:
                return stop
            t = t + h
            y = y_new
            k1 = k_last
        return None


def integrate_until_event(
    model: HybridModel,
    state: HybridState,
    controller: Controller,
    guards: Optional[Sequence[Guard]] = None,
    t_max: float = 10.0,
    opts: Optional[IntegratorOptions] = None,
    _stepper: Optional[_Stepper] = None,
    validate: bool = True,
) -> tuple[Trajectory, Optional[Event]]:
    """Advance one phase until the first guard crossing or ``t_max``.

    The controller is sampled zero-order-hold at ``opts.control_rate_hz``.
    On a guard crossing the event time is localized to within
    ``opts.event_tol`` and the model's reset map is applied; the returned
    event carries both the pre- and post-reset states.
    """
    opts = opts or IntegratorOptions()
    if t_max <= state.t:
        raise InvalidArgument(f"t_max={t_max} must exceed state.t={state.t}")
    if validate:
        model.validate_initial(state)

    phase = state.phase
    aux = np.asarray(state.aux, dtype=float)
    guard_list = list(guards) if guards is not None else list(model.guards(phase))
    traj = Trajectory()
    stepper = _stepper or _Stepper(opts)
    dt_ctrl = 1.0 / opts.control_rate_hz

    t = state.t
    y = state.y.copy()
    _check_finite(y, t)

    # Guards arm once their function is seen strictly positive; this keeps
    # e.g. the liftoff guard quiet at the touchdown instant where it is zero.
    armed = [False] * len(guard_list)
    found: list[Optional[Event]] = [None]

    def record(t_s, y_s, u_s, diag):
        extras = model.sample_extras(t_s, y_s, u_s, phase, aux)
        extras.update(diag)
        n = y_s.size // 2
        traj.samples.append(
            Sample(t_s, phase, y_s[:n].copy(), y_s[n:].copy(), u_s.copy(), extras, aux.copy())
        )

    while t < t_max - 1e-15:
        st_view = state_from_vector(phase, y, t, aux)
        u = np.asarray(controller.command(t, st_view), dtype=float)
        diag = controller.diagnostics()
        record(t, y, u, diag)

        f = lambda tt, yy: model.derivative(tt, yy, u, phase, aux)
        gvals = [g.fn(t, y, u, aux) for g in guard_list]
        for i, gv in enumerate(gvals):
            if gv > 0.0:
                armed[i] = True

        def on_step(t0, y0, f0, t1, y1, f1):
            # Check guards at the midpoint and endpoint of the accepted step
            # so brief in-step crossings are not missed.
            interp = lambda tt: _hermite(t0, y0, f0, t1, y1, f1, tt)
            tm = 0.5 * (t0 + t1)
            ym = interp(tm)
            crossings = []
            for i, g in enumerate(guard_list):
                v_prev = gvals[i]
                for (ta, ya, va_known), (tb, yb) in (
                    ((t0, y0, v_prev), (tm, ym)),
                    ((tm, ym, None), (t1, y1)),
                ):
                    va = va_known if va_known is not None else g.fn(ta, ya, u, aux)
                    vb = g.fn(tb, yb, u, aux)
                    if va > 0.0:
                        armed[i] = True
                    if armed[i] and va > 0.0 >= vb:
                        gfn = lambda tt, yy, _g=g: _g.fn(tt, yy, u, aux)
                        t_e, y_e = _localize(gfn, interp, ta, tb, va, vb, opts.event_tol)
                        if g.direction_ok is None or g.direction_ok(t_e, y_e, u, aux):
                            crossings.append((t_e, g, y_e))
                        break
                gvals[i] = g.fn(t1, y1, u, aux)
            if not crossings:
                model.check_state(t1, y1, phase, aux)
                record(t1, y1, u, diag)
                return None
            t_first = min(c[0] for c in crossings)
            near = [c for c in crossings if c[0] - t_first <= opts.event_tol]
            if len(near) > 1 and traj.samples:
                near.sort(key=lambda c: c[1].priority)
                traj.samples[-1].extras.setdefault("degenerate_event", 1.0)
            t_e, g, y_e = near[0]
            if t_e > t0:
                y_e = _advance_exact(f, t0, y0, t_e, opts)
            record(t_e, y_e, u, diag)
            before = state_from_vector(phase, y_e, t_e, aux)
            new_phase, y_after, aux_after = model.reset(g.kind, t_e, y_e, u, phase, aux)
            after = state_from_vector(new_phase, y_after, t_e, aux_after)
            found[0] = Event(g.kind, t_e, before, after)
            return t_e

        t_window = min(t + dt_ctrl, t_max)
        stop = stepper.advance(f, t, y, t_window, on_step)
        if stop is not None:
            ev = found[0]
            traj.events.append(ev)
            traj.termination = "event"
            return traj, ev
        # Window completed: pull the end state from the last recorded sample.
        last = traj.samples[-1]
        t = last.t
        y = np.concatenate([last.q, last.v])
        if abs(t - t_window) > 1e-12:
            t = t_window  # guard against float drift on exact window ends
    traj.termination = "t_max"
    return traj, None


def simulate_hops(
    model: HybridModel,
    state: HybridState,
    controller: Controller,
    n_steps: int,
    t_max: float,
    opts: Optional[IntegratorOptions] = None,
) -> Trajectory:
    """Chain ``integrate_until_event`` across resets until ``n_steps`` apex
    events have occurred (or ``t_max``/an error terminates the run)."""
    if n_steps < 1:
        raise InvalidArgument(f"n_steps must be >= 1, got {n_steps}")
    opts = opts or IntegratorOptions()
    traj = Trajectory()
    stepper = _Stepper(opts)
    apex_count = 0
    current = state.copy()
    first = True
    while True:
        seg, ev = integrate_until_event(
            model, current, controller, None, t_max, opts,
            _stepper=stepper, validate=first,
        )
        first = False
        traj.extend(seg)
        if ev is None:
            traj.termination = "t_max"
            return traj
        controller.notify(ev)
        current = ev.state_after.copy()
        if ev.kind == EventKind.APEX.value:
            apex_count += 1
            if apex_count >= n_steps:
                traj.termination = "completed"
                return traj
