class GrrError(Exception):
    """Base class for library errors."""


class ValidationError(GrrError, ValueError):
    """Bad input: out-of-range parameters, malformed files, broken invariants."""


class StructuralError(GrrError, ValueError):
    """Shapes that cannot be combined, e.g. factor ranks that differ."""


class DivergenceError(GrrError, RuntimeError):
    """Training produced a non-finite loss."""
