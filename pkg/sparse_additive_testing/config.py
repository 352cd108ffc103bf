import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import yaml

from sparse_additive_testing.exceptions import ConfigError, InvalidProfile
from sparse_additive_testing.kernel_spectra import (EigenProfile,
                                                    profile_from_dict,
                                                    profile_to_dict)
from sparse_additive_testing.priors_divergence import PRIOR_KINDS
from sparse_additive_testing.rate_calculus import (DEFAULT_D, DEFAULT_K3,
                                                   ProblemDims)

"""
Experiment configuration: YAML documents parsed into frozen dataclasses.

A config looks like:

    profile: {kind: sobolev, alpha: 1.0}
    dims: {p: 256, s: [4], n: [4096], a: 1.0}
    test: {kind: minimax, level: 0.05, K2: 1.0, K2_tail: 1.0, K3: 1.0, D: 8.0}
    prior: {kind: minimax, c: null, eta: 0.3, scales: [0.5, 1.0, 2.0], options: {case: bulk}}
    reps: 2000
    seed: 0
    output: results
"""

TEST_KINDS = ('minimax', 'sparse', 'dense', 'adaptive', 'sobolev_adaptive')
MIN_REPS = 100
CALIBRATION_EXCEEDANCES = 1000
U64 = 2 ** 64


@dataclass(frozen=True)
class DimsConfig:
    p: int
    s: Tuple[int, ...]
    n: Tuple[float, ...]
    a: float = 1.0

    def instances(self):
        """
        Every (s, n) combination as ProblemDims, s varying slowest.
        """
        return [ProblemDims(self.p, s, n, self.a) for s in self.s for n in self.n]


@dataclass(frozen=True)
class TestConfig:
    __test__ = False
    kind: str = 'minimax'
    level: float = 0.05
    K2: float = 1.0
    K2_tail: float = 1.0
    K3: float = DEFAULT_K3
    D: float = DEFAULT_D
    alpha0: float = 0.5
    alpha1: float = 2.0
    K: Optional[float] = None


@dataclass(frozen=True)
class PriorConfig:
    kind: str = 'minimax'
    c: Optional[float] = None
    eta: float = 0.3
    scales: Tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    options: Dict[str, Any] = field(default_factory=dict)
    mc_pairs: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: a profile, a grid of problem dimensions, a test family and a prior.
    """
    profile: EigenProfile
    dims: DimsConfig
    test: TestConfig = field(default_factory=TestConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    reps: int = 2000
    calibration_reps: Optional[int] = None
    seed: int = 0
    output: str = 'results'

    @property
    def effective_calibration_reps(self) -> int:
        return self.calibration_reps_at(self.test.level)

    def calibration_reps_at(self, level: float) -> int:
        """
        Null replications for calibrating at `level`: the configured count, else enough for about
        CALIBRATION_EXCEEDANCES null draws above the threshold, and never fewer than `reps`.
        """
        if self.calibration_reps is not None:
            return self.calibration_reps
        return max(self.reps, math.ceil(CALIBRATION_EXCEEDANCES / level))

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> 'ExperimentConfig':
        updated = self
        if seed is not None:
            _check_seed(seed)
            updated = replace(updated, seed=seed)
        if output is not None:
            updated = replace(updated, output=output)
        return updated


def _as_tuple(name: str, value: Any, cast) -> tuple:
    values = value if isinstance(value, (list, tuple)) else [value]
    if len(values) == 0:
        raise ConfigError(name, 'must not be empty', value)
    try:
        return tuple(cast(v) for v in values)
    except (TypeError, ValueError) as e:
        raise ConfigError(name, f'cannot read {value!r}: {e}', value) from e


def _section(data: Dict[str, Any], name: str, cls, required: bool = False) -> Any:
    raw = data.get(name)
    if raw is None:
        if required:
            raise ConfigError(name, 'is required')
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(name, 'must be a mapping', raw)
    return raw


def _check_seed(seed: Any) -> None:
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < U64:
        raise ConfigError('seed', 'must be an unsigned 64-bit integer', seed)


def _build(cls, name: str, raw: Dict[str, Any], **converted):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f'{name}.{sorted(unknown)[0]}', 'is not a known field')
    try:
        return cls(**dict(raw, **converted))
    except (TypeError, ValueError) as e:
        raise ConfigError(name, str(e), raw) from e


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validates a parsed config mapping.

    Raises
    ------
    ConfigError
        Naming the first offending field.
    """
    if not isinstance(data, dict):
        raise ConfigError('<root>', 'must be a mapping', data)
    unknown = set(data) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(sorted(unknown)[0], 'is not a known field')
    if 'profile' not in data:
        raise ConfigError('profile', 'is required')
    try:
        profile = profile_from_dict(data['profile'])
    except (InvalidProfile, TypeError) as e:
        raise ConfigError('profile', str(e), data['profile']) from e

    raw_dims = _section(data, 'dims', DimsConfig, required=True)
    if 'p' not in raw_dims:
        raise ConfigError('dims.p', 'is required')
    dims = _build(DimsConfig, 'dims', raw_dims, p=int(raw_dims['p']),
                  s=_as_tuple('dims.s', raw_dims.get('s', 1), int),
                  n=_as_tuple('dims.n', raw_dims.get('n', []), float),
                  a=float(raw_dims.get('a', 1.0)))
    if dims.p < 1:
        raise ConfigError('dims.p', 'must be positive', dims.p)
    if any(not 1 <= s <= dims.p for s in dims.s):
        raise ConfigError('dims.s', f'every sparsity must lie in [1, {dims.p}]', dims.s)
    if any(not n > 0 for n in dims.n):
        raise ConfigError('dims.n', 'every n must be positive', dims.n)
    if not dims.a >= 1:
        raise ConfigError('dims.a', 'must be at least 1', dims.a)

    raw_test = _section(data, 'test', TestConfig)
    test = raw_test if isinstance(raw_test, TestConfig) else _build(TestConfig, 'test', raw_test)
    if test.kind not in TEST_KINDS:
        raise ConfigError('test.kind', f'must be one of {TEST_KINDS}', test.kind)
    if not 0 < test.level < 1:
        raise ConfigError('test.level', 'must lie in (0, 1)', test.level)

    raw_prior = _section(data, 'prior', PriorConfig)
    if isinstance(raw_prior, PriorConfig):
        prior = raw_prior
    else:
        prior = _build(PriorConfig, 'prior', raw_prior,
                       scales=_as_tuple('prior.scales', raw_prior.get('scales', PriorConfig.scales), float),
                       options=dict(raw_prior.get('options') or {}))
    if prior.kind not in PRIOR_KINDS:
        raise ConfigError('prior.kind', f'must be one of {sorted(PRIOR_KINDS)}', prior.kind)
    if prior.c is not None and not prior.c > 0:
        raise ConfigError('prior.c', 'must be positive', prior.c)
    if not prior.eta > 0:
        raise ConfigError('prior.eta', 'must be positive', prior.eta)
    if any(c < 0 for c in prior.scales) or any(b <= a for a, b in zip(prior.scales, prior.scales[1:])):
        raise ConfigError('prior.scales', 'must be nonnegative and increasing', prior.scales)

    reps = data.get('reps', ExperimentConfig.reps)
    if not isinstance(reps, int) or reps < MIN_REPS:
        raise ConfigError('reps', f'must be an integer of at least {MIN_REPS}', reps)
    calibration_reps = data.get('calibration_reps')
    if calibration_reps is not None and (not isinstance(calibration_reps, int) or calibration_reps < MIN_REPS):
        raise ConfigError('calibration_reps', f'must be an integer of at least {MIN_REPS}', calibration_reps)
    seed = data.get('seed', 0)
    _check_seed(seed)
    return ExperimentConfig(profile, dims, test, prior, reps, calibration_reps, seed, str(data.get('output', 'results')))


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError('<root>', f'is not valid YAML: {e}') from e
    return config_from_dict(data)


def load_config(path: str) -> ExperimentConfig:
    """
    Reads and validates a YAML experiment config.

    Parameters
    ----------
    path : str
        The config file.

    Returns
    -------
    ExperimentConfig
        The validated config.

    Raises
    ------
    ConfigError
        If the file does not parse or a field is invalid.
    """
    with open(path, 'r') as f:
        return parse_config(f.read())


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    data = asdict(replace(config, profile=None))
    data['profile'] = profile_to_dict(config.profile)
    data['dims']['s'] = list(config.dims.s)
    data['dims']['n'] = list(config.dims.n)
    data['prior']['scales'] = list(config.prior.scales)
    return data


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def config_hash(config: ExperimentConfig) -> str:
    """
    SHA-256 of the canonical JSON form of the config.
    """
    text = json.dumps(config_to_dict(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()
