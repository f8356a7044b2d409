"""Exception hierarchy shared by every module of the package."""


class LozengeError(Exception):
    """Base class for all package errors."""


# domains
class DomainError(LozengeError, ValueError):
    pass


class NonClosedBoundary(DomainError):
    pass


class EmptyDomain(DomainError):
    pass


class DisconnectedDomain(DomainError):
    pass


class DiscretizationInfeasible(DomainError):
    pass


# height functions
class HeightError(LozengeError, ValueError):
    pass


class MissingVertex(HeightError, KeyError):
    pass


class NotInterior(HeightError):
    pass


class IllegalFlip(HeightError):
    pass


class Untilable(HeightError):
    pass


class Infeasible(HeightError):
    pass


# dynamics / exact chain
class CouplingTimeout(LozengeError):
    """Raised when two coupled chains have not met before the time cap."""

    def __init__(self, t_cap, distance):
        super().__init__(f"no coalescence before t_cap={t_cap} (L1 distance {distance})")
        self.t_cap = t_cap
        self.distance = distance


class CapExceeded(LozengeError):
    pass


class DimensionMismatch(LozengeError, ValueError):
    pass


class EmptyBand(LozengeError, ValueError):
    pass


# surface tension / schedule
class OutsideNewtonPolygon(LozengeError, ValueError):
    pass


class TooCloseToBoundary(LozengeError, ValueError):
    pass


class BadParameters(LozengeError, ValueError):
    pass


# PDE
class SlopeEscapedNewtonPolygon(LozengeError):
    pass


class NoConvergence(LozengeError):
    pass


class LinearSolveFailure(LozengeError):
    pass


class DegenerateDenominator(LozengeError):
    pass


# I/O
class ParseError(LozengeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
