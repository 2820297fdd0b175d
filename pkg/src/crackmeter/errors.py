"""Exception hierarchy.

Each pipeline stage raises a subclass of one of three stage bases so the CLI
can map failures to exit codes without inspecting messages.
"""


class CrackmeterError(Exception):
    """Base class for all package errors."""


# -- parsing / validation ----------------------------------------------------


class AnnotationError(CrackmeterError, ValueError):
    """Schema or invariant violation in an annotation file or record."""

    def __init__(self, message, image_id=None, field=None):
        self.image_id = image_id
        self.field = field
        where = []
        if image_id is not None:
            where.append(f"image_id={image_id!r}")
        if field is not None:
            where.append(f"field={field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class AlignmentError(CrackmeterError, ValueError):
    """Two datasets (or a dataset and references) disagree on image ids."""


# -- geometry / rectification ------------------------------------------------


class GeometryError(CrackmeterError, ArithmeticError):
    pass


class NoIntersection(GeometryError):
    def __init__(self, angle_gap):
        self.angle_gap = angle_gap
        super().__init__(f"lines are (nearly) parallel: |sin(dtheta)| = {angle_gap:.3e}")


class DegenerateQuad(GeometryError):
    pass


class ProjectionError(GeometryError):
    pass


class RectificationError(CrackmeterError):
    pass


class InsufficientBricks(RectificationError):
    pass


class InsufficientLines(RectificationError):
    pass


class NoAnchorBricks(RectificationError):
    pass


class ScaleMismatch(RectificationError):
    pass


# -- measurement ---------------------------------------------------------------


class MeasurementError(CrackmeterError):
    pass


class NoCracks(MeasurementError):
    pass


class ZeroReference(MeasurementError, ZeroDivisionError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"reference value of pair {index} is zero")


# -- synthetic generation --------------------------------------------------------


class OutOfBounds(CrackmeterError, ValueError):
    pass
