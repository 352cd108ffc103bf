import pytest

from sparse_additive_testing.config import (ExperimentConfig, config_hash,
                                            load_config, parse_config,
                                            serialize_config)
from sparse_additive_testing.exceptions import ConfigError
from sparse_additive_testing.kernel_spectra import SobolevProfile
from sparse_additive_testing.rate_calculus import ProblemDims

"""
Tests for the experiment configuration.
"""

CONFIG = """
profile: {kind: sobolev, alpha: 1.0}
dims: {p: 256, s: [2, 4], n: [1024, 4096]}
test: {kind: minimax, level: 0.05}
prior: {kind: minimax, eta: 0.3, scales: [0.5, 1.0, 2.0], options: {case: bulk}}
reps: 500
seed: 7
output: results/test
"""


def test_parse_config():
    """
    Asserts:
        Every section is read into its dataclass with defaults filled in.
    """
    config = parse_config(CONFIG)
    assert isinstance(config, ExperimentConfig)
    assert config.profile == SobolevProfile(1.0)
    assert config.dims.s == (2, 4)
    assert config.dims.n == (1024.0, 4096.0)
    assert config.test.kind == 'minimax'
    assert config.test.K2 == 1.0
    assert config.prior.scales == (0.5, 1.0, 2.0)
    assert config.prior.options == {'case': 'bulk'}
    assert config.reps == 500
    assert config.seed == 7


def test_instances_vary_s_slowest():
    config = parse_config(CONFIG)
    assert config.dims.instances() == [ProblemDims(256, 2, 1024.0), ProblemDims(256, 2, 4096.0),
                                       ProblemDims(256, 4, 1024.0), ProblemDims(256, 4, 4096.0)]


def test_serialized_config_parses_back():
    """
    Asserts:
        Serializing and parsing gives an equal config with the same hash.
    """
    config = parse_config(CONFIG)
    again = parse_config(serialize_config(config))
    assert again == config
    assert config_hash(again) == config_hash(config)


def test_config_hash_tracks_content():
    config = parse_config(CONFIG)
    assert config_hash(config) != config_hash(config.with_overrides(seed=8))
    assert len(config_hash(config)) == 64


def test_load_config(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text(CONFIG)
    assert load_config(str(path)) == parse_config(CONFIG)


@pytest.mark.parametrize(
    'replace, expected_field',
    [
        (('reps: 500', 'reps: 50'), 'reps'),
        (('seed: 7', 'seed: -1'), 'seed'),
        (('kind: sobolev', 'kind: spline'), 'profile'),
        (('s: [2, 4]', 's: [2, 400]'), 'dims.s'),
        (('n: [1024, 4096]', 'n: [0]'), 'dims.n'),
        (('test: {kind: minimax', 'test: {kind: bayes'), 'test.kind'),
        (('level: 0.05', 'level: 1.5'), 'test.level'),
        (('prior: {kind: minimax', 'prior: {kind: gaussian'), 'prior.kind'),
        (('scales: [0.5, 1.0, 2.0]', 'scales: [1.0, 0.5]'), 'prior.scales'),
        (('eta: 0.3', 'eta: 0.0'), 'prior.eta'),
        (('output: results/test', 'outputs: results/test'), 'outputs'),
        (('eta: 0.3', 'eta: 0.3, colour: red'), 'prior.colour'),
    ],
)
def test_invalid_config_names_field(replace, expected_field):
    """
    Test config validation.

    Asserts:
        A ConfigError naming the offending field.
    """
    text = CONFIG.replace(*replace)
    with pytest.raises(ConfigError) as error:
        parse_config(text)
    assert error.value.field == expected_field


@pytest.mark.parametrize('values', ['[1.0, 0.5, 0.7]', '[0.9, 0.5]'])
def test_invalid_explicit_profile(values):
    """
    Asserts:
        An explicit profile failing validation is a ConfigError on the profile field.
    """
    text = CONFIG.replace('profile: {kind: sobolev, alpha: 1.0}', f'profile: {{kind: explicit, values: {values}}}')
    with pytest.raises(ConfigError) as error:
        parse_config(text)
    assert error.value.field == 'profile'


def test_missing_profile():
    with pytest.raises(ConfigError) as error:
        parse_config('dims: {p: 4, n: [10]}')
    assert error.value.field == 'profile'


def test_effective_calibration_reps():
    """
    Asserts:
        Calibration defaults to 1000 / level replications, never fewer than reps, unless set explicitly.
    """
    config = parse_config(CONFIG.replace('reps: 500', 'reps: 100').replace('level: 0.05', 'level: 0.01'))
    assert config.effective_calibration_reps == 100000
    assert config.calibration_reps_at(0.5) == 2000
    assert parse_config(CONFIG.replace('reps: 500', 'reps: 5000')).calibration_reps_at(0.5) == 5000
    assert parse_config(CONFIG + 'calibration_reps: 300\n').effective_calibration_reps == 300


def test_with_overrides():
    config = parse_config(CONFIG).with_overrides(seed=2 ** 64 - 1, output='elsewhere')
    assert config.seed == 2 ** 64 - 1
    assert config.output == 'elsewhere'
    with pytest.raises(ConfigError):
        config.with_overrides(seed=2 ** 64)
