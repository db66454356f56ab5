"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class TraceParseError(ValidationError):
    """A trace or model file is malformed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigurationError(ValidationError):
    """A configuration value is out of its legal range."""


class DegenerateInputError(ValidationError):
    """Data is too degenerate for the requested operation (e.g. fewer
    distinct points than clusters)."""


class NumericalError(RuntimeError):
    """A numeric routine produced NaN/Inf; carries the failing iteration."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class AmbiguousTrainingError(RuntimeError):
    """Training produced a state/thought assignment too weak to trust."""


class SimulationError(RuntimeError):
    """The swarm integrator could not complete a step."""
