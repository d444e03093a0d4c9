"""Exception types shared across the package."""


class CornError(Exception):
    """Base class for all package errors."""


class ParseError(CornError):
    """Malformed input file (CSV/JSON structure, bad field values)."""


class ValidationError(CornError):
    """Input data violates a structural contract (overlaps, unknown ids)."""


class DisconnectedError(CornError):
    """Spatial graph does not connect all mapped locations."""


class NotChoppedError(CornError):
    """Visit intervals are not uniform beyond the boundary-fragment rule."""


class InvalidKError(CornError):
    """Bubble count K incompatible with the instance."""


class TooLargeError(CornError):
    """Instance exceeds a guard limit for an exhaustive routine."""


class ClusteringMismatchError(CornError):
    """Clustering does not cover the graph it is applied to."""


class ConfigError(CornError):
    """Inconsistent or incomplete run configuration."""


class SpecError(CornError):
    """Synthetic facility spec has out-of-range or inconsistent fields."""


class NotBracketedError(CornError):
    """Calibration target cannot be bracketed by the search interval."""
