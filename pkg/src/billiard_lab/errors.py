"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line harness:
3 for geometry problems, 4 for numerical failures.
"""


class BilliardError(Exception):
    exit_code = 1


class GeometryError(BilliardError):
    exit_code = 3


class NumericalError(BilliardError):
    exit_code = 4


class OverlappingScatterers(GeometryError):
    pass


class HorizonUnbounded(GeometryError):
    pass


class TangencyPlacementFailed(GeometryError):
    pass


class NoGrazingCollision(GeometryError):
    pass


class FlightCapExceeded(NumericalError):
    pass


class PrecisionExhausted(NumericalError):
    pass


class GrazingDerivative(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class NonPhysicalCollision(NumericalError):
    pass


class SeedCutBySingularity(NumericalError):
    pass


class InsufficientSpan(NumericalError):
    pass


class NotFoundWithinBudget(NumericalError):
    pass


class GrazingOrbit(NumericalError):
    pass


class NotExceeded(NumericalError):
    pass


class OrbitStepError(NumericalError):
    """Wraps a map failure with the index of the step that failed."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)
