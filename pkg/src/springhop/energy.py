"""Vertical energy shaping via a control-Lyapunov-function QP.

The controlled output is the vertical energy error ``eta = E - E_d`` with

    E = m * g_e * z + m * zdot**2 / 2,

where ``g_e = g - Ft_min / m`` is the equivalent gravity: the thrust floor
that keeps the motors spinning acts as a constant anti-gravitational force,
so it is folded into the energy bookkeeping rather than the input.

Differentiating along the flight dynamics (thrust of magnitude F_t along a
leg tilted ``theta`` from vertical) gives the affine output dynamics

    eta_dot = f_eta + g_eta * F_t,
    g_eta   = zdot * cos(theta),
    f_eta   = -zdot * Ft_min.

With V = P*eta^2 (P solving the closed-loop Lyapunov equation
2*Kp*P = -Q for the feedback-linearizing design F_t = Kp*eta/g_eta),
requiring ``Vdot (<=|=) -gamma*V`` is affine in F_t:

    a_clf * F_t (<=|=) b_clf,
    a_clf = 2*P*eta*g_eta,
    b_clf = -gamma*P*eta^2 - 2*P*eta*f_eta.

The drift term ``f_eta`` is kept exact so that a solution with zero
relaxation delivers Vdot = -gamma*V exactly, not approximately.

Two QP variants are provided: the inequality form (decrease rate at least
gamma) and the relaxed-equality form (decrease rate pinned to gamma through
a slack), which is the deployed one and has a closed-form solution when the
input-smoothing weight p is zero.  Both are two-variable convex programs
solved exactly by enumerating the box-constraint patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

from .errors import InvalidConfig, NonPositiveEquivalentGravity
from .slip import vertical_energy


VARIANT_RELAXED = "relaxed_equality"
VARIANT_INEQUALITY = "inequality"


def equivalent_gravity(ft_min: float, m: float, g: float) -> float:
    """Gravity reduced by the always-on thrust floor: g - Ft_min/m."""
    if ft_min < 0 or m <= 0 or g <= 0:
        raise InvalidConfig("requires Ft_min >= 0, m > 0, g > 0")
    g_e = g - ft_min / m
    if g_e <= 0:
        raise NonPositiveEquivalentGravity(
            f"thrust floor {ft_min} N cancels weight {m * g:.3f} N; hopping degenerates")
    return g_e


@dataclass(frozen=True)
class EnergyControllerConfig:
    E_d: float                      # desired vertical energy, J
    mass: float                     # total mass the energy refers to, kg
    Ft_min: float                   # thrust floor, N
    Ft_max: float                   # thrust cap, N
    g_e: float                      # equivalent gravity, m/s^2
    Kp: float = -5.0                # feedback-linearizing gain, 1/s (< 0)
    Q: float = 1.0                  # Lyapunov equation weight (> 0)
    gamma: float = 20.0             # convergence rate, 1/s (> 0)
    p: float = 0.0                  # input-smoothing weight (>= 0)
    variant: str = VARIANT_RELAXED

    def __post_init__(self):
        if self.Kp >= 0:
            raise InvalidConfig("Kp must be negative")
        if self.Q <= 0 or self.gamma <= 0 or self.p < 0:
            raise InvalidConfig("requires Q > 0, gamma > 0, p >= 0")
        if not self.Ft_min < self.Ft_max:
            raise InvalidConfig("requires Ft_min < Ft_max")
        if self.mass <= 0 or self.g_e <= 0:
            raise InvalidConfig("requires mass > 0 and g_e > 0")
        if self.variant not in (VARIANT_RELAXED, VARIANT_INEQUALITY):
            raise InvalidConfig(f"unknown QP variant {self.variant!r}")

    @property
    def P(self) -> float:
        """Solution of the scalar Lyapunov equation 2*Kp*P = -Q."""
        return self.Q / (-2.0 * self.Kp)

    @property
    def apex_height(self) -> float:
        return self.E_d / (self.mass * self.g_e)

    @classmethod
    def for_apex(cls, m: float, g: float, ft_min: float, ft_max: float,
                 apex_height: float, **gains) -> "EnergyControllerConfig":
        g_e = equivalent_gravity(ft_min, m, g)
        return cls(E_d=m * g_e * apex_height, mass=m, Ft_min=ft_min,
                   Ft_max=ft_max, g_e=g_e, **gains)


class ClfTerms(NamedTuple):
    a_clf: float
    b_clf: float
    V: float
    Vdot_target: float
    f_eta: float
    g_eta: float


def clf_terms(eta: float, zdot: float, config: EnergyControllerConfig,
              tilt_cos: float = 1.0) -> ClfTerms:
    """Affine CLF constraint coefficients at the current output error."""
    P = config.P
    g_eta = zdot * tilt_cos
    f_eta = -zdot * config.Ft_min
    V = P * eta * eta
    a = 2.0 * P * eta * g_eta
    b = -config.gamma * V - 2.0 * P * eta * f_eta
    return ClfTerms(a, b, V, -config.gamma * V, f_eta, g_eta)


@dataclass(frozen=True)
class QpSolution:
    F_t: float
    delta: float
    active_set: tuple
    objective: float
    eta: float = 0.0
    V: float = 0.0

    @property
    def saturated(self) -> bool:
        return "lower" in self.active_set or "upper" in self.active_set


def _clip(x, lo, hi):
    return lo if x < lo else hi if x > hi else x


def _active(f, lo, hi):
    if f <= lo:
        return ("lower",)
    if f >= hi:
        return ("upper",)
    return ()


def _solve_relaxed(terms: ClfTerms, ft_prev: float, cfg: EnergyControllerConfig,
                   closed_form: bool) -> QpSolution:
    """Relaxed-equality QP: min p*(F - F_prev)^2 + delta^2
    s.t. a*F = b + delta, F in [lo, hi].

    The equality pins delta = a*F - b, leaving a one-dimensional convex
    quadratic over the thrust box; the p = 0 closed form is
    F = clip(b/a) for a != 0 and F = clip(F_prev) otherwise.
    """
    a, b = terms.a_clf, terms.b_clf
    lo, hi = cfg.Ft_min, cfg.Ft_max
    p = cfg.p
    if closed_form:
        f = _clip(b / a, lo, hi) if a != 0.0 else _clip(ft_prev, lo, hi)
    else:
        denom = p + a * a
        if denom == 0.0:
            f = _clip(ft_prev, lo, hi)
        else:
            f = _clip((p * ft_prev + a * b) / denom, lo, hi)
    delta = a * f - b
    obj = p * (f - ft_prev) ** 2 + delta * delta
    return QpSolution(f, delta, _active(f, lo, hi), obj)


def _solve_inequality(terms: ClfTerms, ft_prev: float,
                      cfg: EnergyControllerConfig) -> QpSolution:
    """Inequality QP: min p*F^2 + delta^2 s.t. a*F <= b + delta, F in box.

    For fixed F the optimal slack is max(0, a*F - b); the remaining scalar
    objective is convex piecewise-quadratic, minimized over a short list of
    stationary and boundary candidates.
    """
    a, b = terms.a_clf, terms.b_clf
    lo, hi = cfg.Ft_min, cfg.Ft_max
    p = cfg.p

    def obj(f):
        d = max(0.0, a * f - b)
        return p * f * f + d * d

    candidates = [lo, hi, _clip(0.0, lo, hi)]
    if a != 0.0:
        candidates.append(_clip(b / a, lo, hi))
    denom = p + a * a
    if denom > 0.0:
        candidates.append(_clip(a * b / denom, lo, hi))
    if p == 0.0:
        # Zero-cost region a*F <= b: pick the feasible point nearest the
        # previous thrust to keep the tie-break deterministic and smooth.
        if a > 0.0:
            seg = (lo, min(hi, b / a))
        elif a < 0.0:
            seg = (max(lo, b / a), hi)
        else:
            seg = (lo, hi) if b >= 0.0 else None
        if seg is not None and seg[0] <= seg[1]:
            candidates.append(_clip(ft_prev, seg[0], seg[1]))
    f = min(candidates, key=obj)
    delta = max(0.0, a * f - b)
    return QpSolution(f, delta, _active(f, lo, hi), obj(f))


def solve_energy_qp(eta: float, zdot: float, ft_prev: float,
                    config: EnergyControllerConfig, tilt_cos: float = 1.0,
                    force_generic: bool = False) -> QpSolution:
    """Solve the configured CLF-QP variant for the thrust magnitude.

    The relaxed-equality variant with p = 0 uses its closed form unless
    ``force_generic`` requests the generic path (used for cross-checking).
    """
    terms = clf_terms(eta, zdot, config, tilt_cos)
    if config.variant == VARIANT_RELAXED:
        closed = config.p == 0.0 and not force_generic
        sol = _solve_relaxed(terms, ft_prev, config, closed)
    else:
        sol = _solve_inequality(terms, ft_prev, config)
    return replace(sol, eta=eta, V=terms.V)


def vertical_controller_step(phase: str, z: float, zdot: float, ft_prev: float,
                             config: EnergyControllerConfig,
                             tilt_cos: float = 1.0) -> tuple[float, QpSolution]:
    """One control sample: QP thrust in flight, thrust floor in stance.

    The stance hold matches the deployed behavior: the ground phase is too
    short for energy shaping to matter and the floor keeps motors spinning.
    """
    from .hybrid import Phase

    if phase != Phase.AERIAL.value:
        eta = 0.0
        sol = QpSolution(config.Ft_min, 0.0, ("stance_hold",), 0.0, eta, 0.0)
        return config.Ft_min, sol
    energy = vertical_energy(z, zdot, config.mass, config.g_e)
    eta = energy - config.E_d
    sol = solve_energy_qp(eta, zdot, ft_prev, config, tilt_cos)
    return sol.F_t, sol
