"""Exception types shared across the package."""


class DimerflowError(Exception):
    """Base class for all package errors."""


class ConfigError(DimerflowError):
    """Invalid configuration or CLI arguments."""


class UnsupportedLattice(DimerflowError):
    pass


class EmptyDomain(DimerflowError):
    pass


class OddParity(DimerflowError):
    pass


class NoMatching(DimerflowError):
    pass


class NotAMatching(DimerflowError):
    pass


class InvalidHeight(DimerflowError):
    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


class NotRotatable(DimerflowError):
    pass


class OutsideDomain(DimerflowError):
    pass


class SlopeOutsidePolygon(DimerflowError):
    pass


class InterlacingViolation(DimerflowError):
    def __init__(self, msg, thread=None, index=None):
        super().__init__(msg)
        self.thread = thread
        self.index = index


class FrozenBead(DimerflowError):
    pass


class InvalidConstraint(DimerflowError):
    pass


class StateOutsideBand(DimerflowError):
    pass


class DomainMismatch(DimerflowError):
    pass


class NonSquareMatrix(DimerflowError):
    pass


class CapExceeded(DimerflowError):
    pass


class ComputeBudgetExceeded(DimerflowError):
    pass


class HorizonExceeded(DimerflowError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


class NoTorusZero(DimerflowError):
    pass


class DegenerateZero(DimerflowError):
    pass


class SingularGrid(DimerflowError):
    pass


class InsufficientSamples(DimerflowError):
    pass


class NumericalError(DimerflowError):
    pass
