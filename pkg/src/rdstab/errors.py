"""Exception types shared across the package."""


class RdstabError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(RdstabError):
    """A scenario file or override is malformed or inconsistent."""


class ExpressionError(ConfigError):
    """An expression string uses syntax outside the supported subset."""


class BracketingError(RdstabError):
    """Eigenvalue root bracketing failed or located fewer roots than requested."""


class TailBoundError(RdstabError):
    """A certified tail bound cannot be produced with the available information."""


class DivergenceError(RdstabError):
    """A simulated trajectory left the admissible norm range."""
