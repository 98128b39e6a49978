"""Simulation and controller synthesis for a spring-legged hopping quadrotor.

Subpackages cover the hybrid-dynamics core, the point-mass SLIP and planar
robot models, the vertical energy-shaping QP controller, step-to-step
horizontal stepping control, design/cost-of-transport studies, and a
scenario CLI.
"""

__version__ = "0.1.0"

from .hybrid import (  # noqa: F401
    Event,
    EventKind,
    HybridState,
    IntegratorOptions,
    Phase,
    Trajectory,
    integrate_until_event,
    simulate_hops,
)
