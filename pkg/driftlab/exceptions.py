class DriftLabException(Exception):
    def __init__(self, *args, payload=None):
        super().__init__(*args)
        self.payload = payload

    def __str__(self):
        if self.payload is None:
            return super().__str__()
        return super().__str__() + '\npayload\n' + str(self.payload)


class ConfigException(DriftLabException):
    """Raised in case of configuration errors"""
    pass


class ParseError(ConfigException):
    """Raised when an expression cannot be parsed, offset is the position of the failure"""

    def __init__(self, message, offset=None, text=None, payload=None):
        super().__init__(message, payload=payload)
        self.offset = offset
        self.text = text

    def __str__(self):
        if self.offset is None:
            return DriftLabException.__str__(self)
        return f"{self.args[0]} (at offset {self.offset})"


# geometry

class InvalidWarp(DriftLabException):
    """Raised when the warp profile violates psi(0)=0, psi'(0)=1 or psi > 0"""
    pass


class DimensionConvention(DriftLabException):
    """Raised when m = n and the potential is not constant"""
    pass


class OutOfDomain(DriftLabException):
    """Raised when a radius or region lies outside [0, R_max]"""
    pass


class GridTooCoarse(DriftLabException):
    """Raised when a radial field has too few nodes for the stencil"""
    pass


class HypothesisUnverified(DriftLabException):
    """Raised when a curvature hypothesis cannot be certified"""
    pass


# nonlinearity

class DomainViolation(DriftLabException):
    """Raised when w leaves the positivity window or a nested log is undefined"""
    pass


class NonPositiveSolution(DriftLabException):
    pass


class BoundViolated(DriftLabException):
    """Raised when the solution exceeds the upper bound D"""
    pass


class ParameterOrder(DriftLabException):
    """Raised when estimate parameters are out of order (e.g. alpha <= 1 + beta)"""
    pass


class UnknownPredicate(DriftLabException):
    pass


# cutoff

class BadWindow(DriftLabException):
    """Raised when tau is outside (t0 - T, t0]"""
    pass


# solver

class SolverAbort(DriftLabException):
    pass


class PositivityLost(SolverAbort):
    """Raised when the solution drops below the positivity floor"""
    pass


class BlowUp(SolverAbort):
    """Raised when the solution exceeds the blow-up ceiling"""
    pass


class CFLFailure(SolverAbort):
    """Raised when no admissible time step can be found"""
    pass


class NoConvergence(SolverAbort):
    """Raised when the relaxation budget is exhausted"""
    pass


# estimates

class NotSameRay(DriftLabException):
    pass


class MissingCalibration(DriftLabException):
    """Raised when a Harnack check needs a calibrated constant that was not provided"""
    pass


class NeedFiniteM(DriftLabException):
    pass


class TimeOrder(DriftLabException):
    """Raised when t2 <= t1 for a parabolic Harnack pair"""
    pass


class NotStationary(DriftLabException):
    pass


class MixedKinds(DriftLabException):
    """Raised when calibrating reports of different kinds"""
    pass


class InsufficientData(DriftLabException):
    pass


# reports

class MissingJob(DriftLabException):
    pass
