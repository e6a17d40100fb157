"""
Exception hierarchy shared by the library and the command line.
"""


class TriadError(Exception):
    """Base class for all errors raised by triad_da."""


class ConfigError(TriadError, ValueError):
    """Configuration value missing, malformed or violating an invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GeometryError(TriadError, ValueError):
    """Wavevector triad cannot be built (closure violated or degenerate direction)."""


class ObservationError(TriadError, ValueError):
    """Observation inputs are invalid (non-positive variances, wrong shape)."""


class DivergenceError(TriadError, RuntimeError):
    """A single trajectory left the finite range and the caller cannot continue."""


class FilterDegeneracyError(TriadError, RuntimeError):
    """All particle weights vanished at an assimilation time."""

    def __init__(self, message: str = "filter degeneracy: zero total likelihood", step: int = -1):
        self.step = step
        super().__init__(message)


class RealityConditionError(TriadError, ValueError):
    """Mode coefficients do not satisfy u(-w) = u(w)* for a real velocity field."""
