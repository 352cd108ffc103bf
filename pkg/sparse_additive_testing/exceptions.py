from typing import Optional

"""
Errors raised across the package.
"""


class InvalidProfile(ValueError):
    """
    An eigenvalue profile breaks normalization or monotonicity.

    Parameters
    ----------
    index : int
        The first (1-based) eigenvalue index at which the profile is invalid.
    reason : str
        A short description of the violation.
    """
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f'Invalid eigenvalue profile at index {index}: {reason}')


class RateOverflow(RuntimeError):
    """
    A truncation order search ran past the largest supported order.
    """
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f'Truncation order exceeds {limit}; the problem dimensions are pathological.')


class NonConvergence(RuntimeError):
    """
    A series or continued fraction hit its iteration cap.
    """
    def __init__(self, routine: str, a: float, x: float, iterations: int):
        self.routine = routine
        self.iterations = iterations
        super().__init__(f'{routine} did not converge for a={a!r}, x={x!r} after {iterations} iterations.')


class TailUnderflow(ArithmeticError):
    """
    A tail probability vanished even in log-space.
    """
    def __init__(self, d: int, r: float):
        self.d = d
        self.r = r
        super().__init__(f'Tail probabilities vanish for d={d}, r={r!r}; the threshold is beyond representable range.')


class MissingCalibration(KeyError):
    """
    No calibrated threshold exists for a statistic.
    """
    def __init__(self, key: object):
        self.key = key
        super().__init__(f'No calibrated threshold for {key!r}.')

    def __str__(self) -> str:
        return self.args[0]


class DimensionMismatch(ValueError):
    """
    A test reads more rows or columns than the observation provides.
    """
    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(f'Dimension mismatch: test needs {expected}, observation has {actual}.')


class InfeasibleSpec(ValueError):
    """
    A prior specification cannot produce draws inside the parameter space.
    """
    pass


class EnumerationTooLarge(ValueError):
    """
    Exact overlap enumeration was requested beyond its size gate.
    """
    def __init__(self, p: int, s: int):
        self.p = p
        self.s = s
        super().__init__(f'Exact enumeration is limited to p <= 10^4 and s <= 10^2, got p={p}, s={s}.')


class InsufficientReps(ValueError):
    """
    Too few replications to resolve the requested calibration level.
    """
    def __init__(self, reps: int, level: float):
        self.reps = reps
        self.level = level
        super().__init__(f'Calibration at level {level!r} needs at least {10 / level:.0f} replications, got {reps}.')


class ConfigError(ValueError):
    """
    An experiment config failed to parse or validate.

    Parameters
    ----------
    field : str
        The dotted path of the offending field.
    message : str
        What is wrong with it.
    """
    def __init__(self, field: str, message: str, value: Optional[object] = None):
        self.field = field
        self.value = value
        super().__init__(f'Config field {field!r}: {message}')
