"""Exception types shared across the package."""


class TriflatError(Exception):
    pass


class ExprSyntaxError(TriflatError):
    """Raised by the expression parser; carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(TriflatError):
    """Numeric evaluation failed; ``kind`` is 'division' or 'domain'.

    Callers that sample generic points treat this as a resample signal.
    """

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class SamplerExhausted(TriflatError):
    """No admissible sample point found within the resampling budget."""


class FrameMismatch(TriflatError):
    """Operands live on different coordinate frames."""


class EliminationError(TriflatError):
    """Symbolic Gaussian elimination could not complete."""


class IntegrationError(TriflatError):
    """The codistribution integration heuristic gave up; hints are needed."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotApplicable(TriflatError):
    """A construction method does not apply to the given system."""


class PipelineError(TriflatError):
    """A transformation step could not be carried out."""
