"""Exception hierarchy shared by all modules."""


class LevityError(Exception):
    """Base class for every error raised by the package."""


class GeometryError(LevityError):
    """Degenerate or otherwise invalid element geometry."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class MeshError(LevityError):
    """Invalid mesh topology (isolated vertices, non-conforming edges...)."""


class ParameterError(LevityError, ValueError):
    """An input parameter is outside its admissible range."""


class SolverError(LevityError):
    """Linear solve failed or the system is singular."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalError(LevityError):
    """Non-finite values appeared in a computed field."""


class LocationError(LevityError):
    """A point could not be located inside the mesh."""


class ConfigError(LevityError):
    """Malformed configuration file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RunAborted(LevityError):
    """An optimization run failed; the partial history is attached."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
