"""Exception hierarchy shared by all engine modules."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(EngineError):
    """Shapes or dimensions of inputs do not line up."""


class ValidationError(EngineError):
    """Input data violates a declared invariant.

    Carries the full list of problems so callers can surface every issue
    at once instead of fixing them one at a time.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class GridBudgetError(EngineError):
    """Requested grid would exceed the point budget; lower the resolution."""


class UnsupportedProfileError(EngineError):
    """An operation requires a profile kind it was not given."""


class ParameterError(EngineError):
    """A tuning parameter is outside its admissible range."""


class ConfigurationError(EngineError):
    """The configured constants are mutually inconsistent."""
