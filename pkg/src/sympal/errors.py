"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`NumericalFailure` subclasses -> 3, :class:`PreconditionFailed` and
:class:`InvariantMismatch` -> 1.
"""


class SympalError(Exception):
    pass


class ConfigError(SympalError, ValueError):
    pass


class NumericalFailure(SympalError):
    pass


class SolveFailure(NumericalFailure):
    """Implicit generating-function equation did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class DifferentialFailure(NumericalFailure):
    pass


class ConnectFailure(NumericalFailure):
    pass


class RefineNeeded(NumericalFailure):
    """Path sampling too coarse to unwrap the rotation angle unambiguously."""


class NotPeriodic(SympalError):
    pass


class NotCritical(SympalError):
    pass


class PreconditionFailed(SympalError):
    pass


class ConstraintViolation(PreconditionFailed):
    pass


class InvariantMismatch(SympalError):
    pass
