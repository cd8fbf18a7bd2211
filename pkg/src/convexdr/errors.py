"""Exception types shared across the package."""


class ConvexDRError(Exception):
    """Base class for all package errors."""


class DegenerateInput(ConvexDRError, ValueError):
    """Point set has fewer than 4 points or is (near) coplanar/collinear."""


class UnboundedOrDegenerate(DegenerateInput):
    """Halfspace intersection is unbounded or lower-dimensional."""


class NonPositiveOffset(ConvexDRError, ValueError):
    """A plane offset is <= 0, so the origin is not strictly feasible."""


class IllConditioned(ConvexDRError, ArithmeticError):
    """A 3x3 plane system is too close to singular to solve reliably."""


class EmptyTopology(ConvexDRError, ValueError):
    pass


class NotManifold(ConvexDRError, ValueError):
    pass


class ShapeMismatch(ConvexDRError, ValueError):
    pass


class BehindCamera(ConvexDRError, ValueError):
    pass


class InvalidConfig(ConvexDRError, ValueError):
    pass


class EmptyInput(ConvexDRError, ValueError):
    pass


class EmptyMesh(EmptyInput):
    pass


class ParseError(ConvexDRError, ValueError):
    """Malformed input text; ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message, lineno=0):
        self.lineno = lineno
        if lineno:
            message = f"line {lineno}: {message}"
        super().__init__(message)
