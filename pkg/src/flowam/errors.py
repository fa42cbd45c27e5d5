"""Exception types shared across the library."""


class FlowError(Exception):
    """Base class for all library errors."""


class DomainError(FlowError):
    """Argument outside its mathematical domain."""


class SingularityError(FlowError):
    """A schedule coefficient or conversion denominator vanished."""


class ShapeError(FlowError):
    """Array dimensions do not match the operation's contract."""


class NonFiniteError(FlowError):
    """NaN or Inf encountered where finite values are required."""


class ConfigError(FlowError):
    """Inconsistent or unsupported configuration."""


class ParseError(FlowError):
    """Config file could not be parsed."""


class ValidationError(FlowError):
    """One or more config constraints violated.

    ``violations`` lists every violated constraint, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TooFewSamples(FlowError):
    """Metric requires more samples than were provided."""


class EmptyInput(FlowError):
    """Empty sample set passed to a metric."""
