"""Exception hierarchy for simulation, controller, and configuration failures."""


class SpringhopError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgument(SpringhopError):
    """A caller-supplied argument violates a documented precondition."""


class InvalidInitialState(SpringhopError):
    """Initial state is inconsistent with its phase (e.g. foot below ground)."""


class StepSizeUnderflow(SpringhopError):
    """Adaptive integrator step shrank below the configured minimum."""


class NonFiniteState(SpringhopError):
    """A state coordinate became NaN or infinite during integration."""


class FellOver(SpringhopError):
    """Planar robot pitch left the recoverable range (|pitch| > pi/2)."""


class LegFullyCompressed(SpringhopError):
    """Spring leg reached its travel limit during stance."""


class SingularMassMatrix(SpringhopError):
    """Mass matrix could not be factorized; signals a model construction bug."""


class RankDeficientKKT(SpringhopError):
    """Stance/impact KKT block system is singular."""


class InfeasibleMoment(SpringhopError):
    """No propeller moment allocation within bounds achieves the request."""


class NonPositiveEquivalentGravity(SpringhopError):
    """Thrust floor meets or exceeds weight; hopping degenerates to hover."""


class InvalidConfig(SpringhopError):
    """Controller configuration violates its invariants."""


class NoApexReached(SpringhopError):
    """A return-map evaluation failed to complete a full hop."""


class NoBracket(SpringhopError):
    """Periodic-orbit search found no sign change over the scan interval."""


class NotConverged(SpringhopError):
    """Iterative solve exhausted its iteration budget."""


class NumericalNoise(SpringhopError):
    """Finite-difference step halving failed to converge; jitter dominates."""


class UncontrollableMap(SpringhopError):
    """Return-map input gain is numerically zero; deadbeat gain undefined."""


class ConfigError(SpringhopError):
    """Scenario configuration file is malformed or inconsistent."""


class EmptyRun(SpringhopError):
    """Report requested for an empty result set."""
