import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from sparse_additive_testing.exceptions import InvalidProfile

"""
Eigenvalue profiles of the univariate RKHS, normalized so that the first eigenvalue is 1.
"""

CHECK_MAX = 10 ** 5


class EigenProfile(ABC):
    """
    A base class for nonincreasing eigenvalue sequences mu_1 = 1 >= mu_2 >= ... >= 0.
    """
    kind: str = ''

    @abstractmethod
    def eigenvalues(self, ks: np.ndarray) -> np.ndarray:
        """
        Evaluates mu_k for an array of 1-based indices.
        """
        pass

    def eigenvalue(self, k: int) -> float:
        if k < 1:
            raise ValueError(f'Eigenvalue index must be at least 1, got {k}.')
        return float(self.eigenvalues(np.array([k]))[0])

    @abstractmethod
    def params(self) -> Dict[str, object]:
        pass


@dataclass(frozen=True)
class SobolevProfile(EigenProfile):
    """
    Polynomial decay mu_k = k^(-2 alpha).

    Examples
    --------
    >>> SobolevProfile(alpha=1.0).eigenvalue(2)
    0.25
    """
    alpha: float
    kind = 'sobolev'

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f'Sobolev smoothness must be positive, got {self.alpha!r}.')

    def eigenvalues(self, ks: np.ndarray) -> np.ndarray:
        return np.power(np.asarray(ks, dtype=float), -2.0 * self.alpha)

    def params(self) -> Dict[str, object]:
        return {'alpha': self.alpha}


@dataclass(frozen=True)
class FiniteRankProfile(EigenProfile):
    """
    A rank-m kernel: mu_k = 1 for k <= m and 0 beyond.
    """
    m: int
    kind = 'finite_rank'

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f'Finite rank must be a positive integer, got {self.m!r}.')

    def eigenvalues(self, ks: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(ks) <= self.m, 1.0, 0.0)

    def params(self) -> Dict[str, object]:
        return {'m': int(self.m)}


@dataclass(frozen=True)
class ExpDecayProfile(EigenProfile):
    """
    Exponential decay shifted so that mu_1 = 1: mu_k = exp(-c2 (k^gamma - 1)).
    """
    c2: float
    gamma: float
    kind = 'exp_decay'

    def __post_init__(self):
        if not (self.c2 > 0 and self.gamma > 0):
            raise ValueError(f'Exponential decay needs c2 > 0 and gamma > 0, got c2={self.c2!r}, gamma={self.gamma!r}.')

    def eigenvalues(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=float)
        return np.exp(-self.c2 * (np.power(ks, self.gamma) - 1.0))

    def params(self) -> Dict[str, object]:
        return {'c2': self.c2, 'gamma': self.gamma}


@dataclass(frozen=True)
class ExplicitProfile(EigenProfile):
    """
    A finite list of eigenvalues, padded with zeros past its last entry.
    """
    values: Tuple[float, ...]
    kind = 'explicit'

    def __post_init__(self):
        object.__setattr__(self, 'values', tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise ValueError('Explicit profiles need at least one eigenvalue.')

    def eigenvalues(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        padded = np.append(np.asarray(self.values, dtype=float), 0.0)
        return padded[np.minimum(ks, len(self.values) + 1) - 1]

    def params(self) -> Dict[str, object]:
        return {'values': list(self.values)}


@dataclass(frozen=True)
class ValidationReport:
    """
    The outcome of probing a profile for normalization and monotonicity.
    """
    valid: bool
    first_violation: Optional[int] = None
    reason: str = ''
    checked: int = field(default=CHECK_MAX)

    def raise_for_violation(self) -> None:
        if not self.valid:
            raise InvalidProfile(self.first_violation, self.reason)


PROFILE_KINDS = {
    SobolevProfile.kind: SobolevProfile,
    FiniteRankProfile.kind: FiniteRankProfile,
    ExpDecayProfile.kind: ExpDecayProfile,
    ExplicitProfile.kind: ExplicitProfile,
}


def eigenvalue(profile: EigenProfile, k: int) -> float:
    """
    Returns mu_k for a profile.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    k : int
        The 1-based index.

    Returns
    -------
    float
        The eigenvalue, zero past the end of finite profiles.
    """
    return profile.eigenvalue(k)


def validate_profile(profile: EigenProfile, check_max: int = CHECK_MAX, strict: bool = False) -> ValidationReport:
    """
    Checks mu_1 = 1, nonnegativity and monotonicity on k = 1..check_max.

    Parameters
    ----------
    profile : EigenProfile
        The profile to check.
    check_max : int
        The largest index checked.
    strict : bool
        Raise InvalidProfile instead of returning an invalid report.

    Returns
    -------
    ValidationReport
        The report, with the first offending index when invalid.

    Raises
    ------
    InvalidProfile
        When strict is set and the profile is invalid.
    """
    values = profile.eigenvalues(np.arange(1, check_max + 1))
    report = ValidationReport(valid=True, checked=check_max)
    if not np.all(np.isfinite(values)):
        index = int(np.argmin(np.isfinite(values))) + 1
        report = ValidationReport(False, index, 'eigenvalue is not finite', check_max)
    elif values[0] != 1.0:
        report = ValidationReport(False, 1, f'mu_1 must equal 1, got {values[0]!r}', check_max)
    elif np.any(values < 0):
        index = int(np.argmax(values < 0)) + 1
        report = ValidationReport(False, index, 'eigenvalue is negative', check_max)
    else:
        increases = np.diff(values) > 0
        if np.any(increases):
            index = int(np.argmax(increases)) + 2
            report = ValidationReport(False, index, 'eigenvalues must be nonincreasing', check_max)
    if strict:
        report.raise_for_violation()
    return report


def profile_from_dict(spec: Dict[str, object]) -> EigenProfile:
    """
    Builds a profile from a `{kind, params...}` mapping as found in experiment configs.

    Raises
    ------
    InvalidProfile
        If the kind is unknown, the parameters do not fit it, or the profile fails validation.
    """
    params = dict(spec)
    kind = params.pop('kind', None)
    if kind not in PROFILE_KINDS:
        raise InvalidProfile(1, f'unknown profile kind {kind!r}, expected one of {sorted(PROFILE_KINDS)}')
    try:
        if kind == ExplicitProfile.kind:
            profile = ExplicitProfile(values=tuple(params['values']))
        else:
            profile = PROFILE_KINDS[kind](**params)
    except (TypeError, KeyError, ValueError) as e:
        raise InvalidProfile(1, f'bad parameters for {kind}: {e}') from e
    validate_profile(profile, strict=True)
    return profile


def profile_to_dict(profile: EigenProfile) -> Dict[str, object]:
    return {'kind': profile.kind, **profile.params()}


def log_eigenvalue_slope(profile: SobolevProfile, k: int) -> float:
    """
    Returns log(mu_k) / log(k), which is -2 alpha for Sobolev profiles.
    """
    return math.log(profile.eigenvalue(k)) / math.log(k)
