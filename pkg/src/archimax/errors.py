"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation failures exit with 2,
numerical failures with 3 and capability gaps (requested feature outside
the supported model class) with 4.
"""


class ArchimaxError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ArchimaxError, ValueError):
    """Invalid input: parameter outside its domain, malformed config, ...

    Parameters
    ----------
    message : str
    code : str, optional
        Stable machine-readable error code (e.g. ``"partition-singleton"``).
    path : str, optional
        JSON-pointer-like location of the offending config entry.
    """

    def __init__(self, message, code=None, path=None):
        self.code = code
        self.path = path
        if path is not None:
            message = f"{message} (at {path})"
        if code is not None:
            message = f"[{code}] {message}"
        super().__init__(message)


class NumericalError(ArchimaxError, RuntimeError):
    """A numerical routine failed to converge within its iteration budget."""


class CapabilityError(ArchimaxError):
    """The request is well-formed but outside the supported model class."""
