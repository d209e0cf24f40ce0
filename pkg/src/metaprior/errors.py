"""Exception hierarchy shared across the package."""


class MetaPriorError(Exception):
    """Base class for all errors raised by metaprior."""


class StructuralError(MetaPriorError, ValueError):
    """Shapes, layouts or sizes that do not fit together."""


class NumericError(MetaPriorError, ArithmeticError):
    """Non-finite inputs or intermediate values."""


class DivergenceError(NumericError):
    """Training produced non-finite weights."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegeneratePriorError(NumericError):
    """Network output cannot be turned into a density."""


class IllConditionedError(NumericError):
    """Gram matrix could not be factorized even with maximal jitter."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class CheckpointError(MetaPriorError):
    """Checkpoint file is corrupted, of unknown version, or mismatched."""


class ConfigError(MetaPriorError, ValueError):
    """Configuration file or flag could not be parsed."""
