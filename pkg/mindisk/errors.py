"""Exception hierarchy shared by every mindisk module.

Each error carries the process exit code the command line reports for it:
0 success, 2 numeric non-convergence, 64 usage, 65 hypothesis violation.
A verification that runs but finds a failed property exits with 1.
"""

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 64
EXIT_HYPOTHESIS = 65


class MindiskError(Exception):
    exit_code = EXIT_USAGE


class UsageError(MindiskError, ValueError):
    """Bad command line, malformed run file, or invalid parameters"""


class InvalidDomainError(UsageError):
    pass


class InvalidRulingError(UsageError):
    pass


class InvalidScaleError(UsageError):
    pass


class ShapeMismatchError(UsageError):
    pass


class HypothesisError(MindiskError):
    """A stated precondition of a check does not hold for the input"""

    exit_code = EXIT_HYPOTHESIS


class CurvatureTooSmallError(HypothesisError):
    def __init__(self, ratio: float):
        self.ratio = ratio
        super().__init__(
            f"curvature too small at the centre: |A|^2(x) r0^2 / (4 C^2) = {ratio:.6g} < 1"
        )


class BallEscapeError(HypothesisError):
    pass


class InvalidRegionError(HypothesisError):
    pass


class MismatchError(HypothesisError):
    pass


class NoOverlapError(HypothesisError):
    pass


class UndefinedHandednessError(HypothesisError):
    pass


class LogSingularityError(HypothesisError):
    pass


class NonGraphError(HypothesisError):
    def __init__(self, level: float, clusters: int):
        self.level = level
        self.clusters = clusters
        super().__init__(f"{clusters} separate clusters at level x3 = {level:.6g}")


class NumericError(MindiskError, ArithmeticError):
    exit_code = EXIT_NUMERIC


class ImmersionError(NumericError):
    def __init__(self, node):
        self.node = tuple(int(k) for k in node)
        super().__init__(f"degenerate tangent vectors at node {self.node}")


class StepTooLargeError(NumericError):
    pass


class FitUndefinedError(NumericError):
    pass


class NonConvergenceError(NumericError):
    def __init__(self, message: str, history=None):
        self.history = list(history or [])
        super().__init__(message)
