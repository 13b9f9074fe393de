"""Exception hierarchy shared by every flatt module."""


class FlattError(Exception):
    """Base class for all library errors."""


class ExprSyntaxError(FlattError, ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset, text=""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class VariableIndexError(ExprSyntaxError):
    """A variable ``xk`` with ``k`` outside ``1..n``."""


class DomainError(FlattError, ArithmeticError):
    """Evaluation left the real domain (log/sqrt/division/pow/overflow).

    ``subexpr`` holds the offending sub-expression.
    """

    def __init__(self, message, subexpr=None, point=None):
        self.subexpr = subexpr
        self.point = None if point is None else tuple(float(v) for v in point)
        where = f" in '{subexpr}'" if subexpr is not None else ""
        at = f" at {self.point}" if point is not None else ""
        super().__init__(f"{message}{where}{at}")


class SingularMatrixError(FlattError, ArithmeticError):
    def __init__(self, point, det, what="matrix"):
        self.point = None if point is None else tuple(float(v) for v in point)
        self.det = float(det)
        super().__init__(f"singular {what} at {self.point}: det = {self.det:.3e}")


class OutOfChartError(FlattError, ValueError):
    def __init__(self, point, bounds):
        self.point = tuple(float(v) for v in point)
        self.bounds = bounds
        super().__init__(f"point {self.point} lies outside chart bounds {bounds}")


class TensorMismatchError(FlattError, ValueError):
    """Operands disagree in type, dimension, base point or frame."""


class CurvatureError(FlattError, ValueError):
    """A connection expected to be flat is not; ``point`` is the worst offender."""

    def __init__(self, max_curvature, point):
        self.max_curvature = float(max_curvature)
        self.point = tuple(float(v) for v in point)
        super().__init__(
            f"connection is not flat: max |R| = {self.max_curvature:.3e} at {self.point}"
        )


class ClosednessError(FlattError, ValueError):
    """The rows of F are not closed 1-forms, so no potential exists."""

    def __init__(self, defects):
        self.defects = tuple(float(d) for d in defects)
        super().__init__(f"rows of F are not closed; defects per row = {self.defects}")


class ScenarioError(FlattError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(f"{loc}{message}")
