"""Exception hierarchy with CLI exit codes attached."""
from __future__ import annotations


class CmcTubeError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this failure."""

    exit_code = 4


class ValidationError(CmcTubeError):
    exit_code = 2


class RefusalError(CmcTubeError):
    exit_code = 3


class ConvergenceError(CmcTubeError):
    exit_code = 4


class SingularChart(ValidationError):
    pass


class BadAngle(ValidationError):
    pass


class NotAdmissible(ValidationError):
    pass


class OrderUnsupported(ValidationError):
    pass


class FocalRadiusExceeded(ValidationError):
    pass


class SelfIntersection(ValidationError):
    pass


class OutOfChart(ValidationError):
    pass


class DegenerateMetric(ValidationError):
    pass


class NotCapillary(ValidationError):
    pass


class NotSmallEigenvalue(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NotMinimal(RefusalError):
    pass


class DegenerateK(RefusalError):
    pass


class ResonantEpsilon(RefusalError):
    pass


class EmptyRange(RefusalError):
    pass


class NotSolvable(RefusalError):
    pass


class NoConvergence(ConvergenceError):
    pass


class IllConditioned(ConvergenceError):
    pass


class BranchLost(ConvergenceError):
    pass


class OrderMismatch(ConvergenceError):
    pass
