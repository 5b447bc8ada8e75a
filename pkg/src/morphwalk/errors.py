"""Exception hierarchy shared by all morphwalk modules.

The CLI maps :class:`ValidationError` subclasses to exit code 1 and
:class:`ComputationError` subclasses to exit code 2.
"""


class MorphwalkError(Exception):
    pass


class ValidationError(MorphwalkError, ValueError):
    """Bad user input: wrong shapes, out-of-range parameters, bad config."""


class InputError(ValidationError):
    pass


class UnsupportedError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ConfigError(ValidationError):
    pass


class EmptyDomainError(ValidationError):
    pass


class ResourceError(ValidationError):
    pass


class ComputationError(MorphwalkError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy answer."""


class NumericError(ComputationError):
    pass


class ConvergenceError(ComputationError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message}: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class BlowUpError(ComputationError):
    def __init__(self, message, step):
        super().__init__(f"{message} (time step {step})")
        self.step = step


class TopologyError(ComputationError):
    def __init__(self, message, step=None):
        suffix = "" if step is None else f" (time step {step})"
        super().__init__(message + suffix)
        self.step = step
