"""Exception types shared across the package."""


class KigraspError(Exception):
    """Base class for all package-specific errors."""


class SpecFileError(KigraspError, ValueError):
    """A PLY/OBJ/JSON/TOML input file is malformed.

    The message carries file path plus line or field context.
    """


class InfeasibleInitError(KigraspError, ValueError):
    """The requested initial state has penetrating or self-colliding links."""


class QpSolverError(KigraspError, RuntimeError):
    """The QP subproblem solver hit its iteration cap."""
