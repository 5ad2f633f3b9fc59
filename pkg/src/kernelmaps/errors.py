class InvalidParameterError(ValueError):
    """A tunable is outside its admissible range."""


class InvalidArgumentError(ValueError):
    """An operation received inputs violating its preconditions."""


class TraceFormatError(ValueError):
    """A measurement CSV could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
