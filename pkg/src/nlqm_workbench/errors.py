"""Exception hierarchy shared by every module of the workbench."""


class WorkbenchError(Exception):
    """Base class for all errors raised by the package."""


# geometry


class OutOfDomain(WorkbenchError, ValueError):
    pass


class SingularMetric(WorkbenchError, ArithmeticError):
    pass


class StencilClipped(WorkbenchError, ValueError):
    """A finite-difference stencil would leave the chart domain."""


class NoTransition(WorkbenchError, LookupError):
    pass


class OutOfOverlap(WorkbenchError, ValueError):
    pass


class ChartSpecError(WorkbenchError, ValueError):
    """Malformed or out-of-range chart specification string."""


# geodesics and transport


class LeftDomain(WorkbenchError):
    """The integrated path exited the chart box.

    ``partial`` holds the geodesic up to the exit point when available.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StepFailure(WorkbenchError, ArithmeticError):
    pass


class ExceptionalPair(WorkbenchError):
    """No connecting geodesic, or more distinct ones than the search cap."""

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class MismatchedBase(WorkbenchError, ValueError):
    pass


# wave fields and dynamics


class IncommensurateWavevector(WorkbenchError, ValueError):
    pass


class SpecMismatch(WorkbenchError, ValueError):
    pass


class NumericalHermiticityFailure(WorkbenchError, ArithmeticError):
    pass


class UnsupportedGeometry(WorkbenchError, NotImplementedError):
    pass


class CFLViolation(WorkbenchError, ValueError):
    pass


# harness


class ConfigInvalid(WorkbenchError, ValueError):
    def __init__(self, message, issues=()):
        super().__init__(message)
        self.issues = list(issues)
