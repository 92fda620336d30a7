"""Exception types shared across the package."""


class OmniRelayError(Exception):
    """Base class for all package errors."""


class InvalidInputError(OmniRelayError, ValueError):
    """An argument has the wrong shape, sign or domain."""


class InvalidStateError(OmniRelayError, ValueError):
    """A vehicle state violates its invariants (e.g. non-unit quaternion)."""


class InfeasibleError(OmniRelayError):
    """The requested operating point cannot be realized within actuator limits."""


class DegenerateGeometryError(OmniRelayError, ValueError):
    """Two positions coincide, so a line-of-sight direction is undefined."""


class ScenarioValidationError(OmniRelayError, ValueError):
    """A scenario document is well-formed but violates a field invariant.

    ``path`` is the dotted location of the offending field.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ScenarioParseError(OmniRelayError, ValueError):
    """A scenario document is not syntactically valid."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
