import math


class Tolerance:
    """Absolute tolerances shared by every feature"""

    TIME = 1e-6
    LENGTH = 1e-6
    SCORE = 1e-9
    IMPROVEMENT = 1e-6
    SLOPE = 1e-12


def leq(a: float, b: float, tol: float = Tolerance.TIME) -> bool:
    """True when a <= b up to an absolute tolerance; infinities compare exactly."""
    if math.isinf(a) or math.isinf(b):
        return a <= b
    return a <= b + tol
