"""Exception hierarchy shared by all graphoscale modules."""


class GraphoscaleError(Exception):
    """Base class for every error raised by the package."""


class InsufficientDataError(GraphoscaleError, ValueError):
    """Too few samples (or subjects) for the requested computation."""


class DegenerateStatisticError(GraphoscaleError, ValueError):
    """A statistic is undefined for the given input (zero median, constant data...)."""


class ParseError(GraphoscaleError, ValueError):
    """Malformed recording, config or feature-key text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(GraphoscaleError, ValueError):
    """Recording violates an ordering invariant (e.g. decreasing timestamps)."""


class SpiralGeometryError(GraphoscaleError, ValueError):
    """Spiral drawing too short or not unwrappable."""


class ConfigMismatchError(GraphoscaleError):
    """Feature configuration hash differs between norms and scored features."""


class MissingNormsError(GraphoscaleError, LookupError):
    """No normative entries exist for the requested grade."""
