"""Exception hierarchy.

Every error carries a class-level ``exit_code`` so the command line driver
can map failures to process exit statuses without a lookup table.
"""

from __future__ import annotations


class LoopFloerError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigInvalid(LoopFloerError):
    exit_code = 2


class UnknownRun(LoopFloerError):
    exit_code = 2


class UnsupportedBackend(LoopFloerError):
    """Operation not available on the requested manifold backend."""


class BaseMismatch(LoopFloerError, ValueError):
    """Tangent vectors based at different points."""


class NoConvergence(LoopFloerError):
    pass


class Degenerate(LoopFloerError):
    pass


class IndexMismatch(LoopFloerError):
    pass


class StepRejected(LoopFloerError):
    pass


class EigenvalueCollision(LoopFloerError):
    pass


class ProjectionFailed(LoopFloerError):
    pass


class PreconditionFailed(LoopFloerError, ValueError):
    """Input violates a documented precondition."""


class IterationDiverged(LoopFloerError):
    pass


class LinearSolveFailed(LoopFloerError):
    pass


class InjectivityRadiusExceeded(LoopFloerError):
    pass


class HypothesisViolated(LoopFloerError):
    pass


class NoRoot(LoopFloerError):
    pass


class NotMonotone(LoopFloerError):
    pass


class NotNested(LoopFloerError):
    pass


class UnknownReference(LoopFloerError):
    pass


class DegenerateComplex(LoopFloerError):
    pass


class NoNearbyOrbit(LoopFloerError):
    pass


class AcceptanceFailed(LoopFloerError):
    exit_code = 4
