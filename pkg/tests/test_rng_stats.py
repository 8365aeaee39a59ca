import numpy as np
import pytest

from cclab import rng, stats
from cclab.errors import ConfigError, ParameterError


def test_streams_are_reproducible_and_distinct():
    a = rng.stream(7, 3).random(5)
    assert np.array_equal(a, rng.stream(7, 3).random(5))
    assert not np.array_equal(a, rng.stream(7, 4).random(5))
    assert not np.array_equal(a, rng.stream(8, 3).random(5))


def test_per_trial_prefix_property():
    assert np.array_equal(rng.uniforms(1, 4, 3), rng.uniforms(1, 9, 3)[:4])
    assert rng.normals(1, 2, 6).shape == (2, 6)


@pytest.mark.parametrize("seed", [-1, 1.5, "3", True, None])
def test_bad_seeds(seed):
    with pytest.raises(ConfigError):
        rng.stream(seed)


def test_ks_and_chi2_accept_their_null():
    u = rng.uniforms(11, 1, 5000)[0]
    assert stats.ks_uniform(u) > 0.01
    bits = (u < 0.5).astype(int)
    assert stats.chi2_goodness_of_fit(bits, [0.5, 0.5]) > 0.01
    assert stats.chi2_independence(np.column_stack([bits[:-1], bits[1:]])) > 0.01
    assert abs(stats.autocorr(u)) < 0.05


def test_tests_reject_their_alternative():
    u = rng.uniforms(12, 1, 5000)[0]
    assert stats.ks_uniform(u**2) < 1e-6
    bits = (u < 0.7).astype(int)
    assert stats.chi2_goodness_of_fit(bits, [0.5, 0.5]) < 1e-6
    assert stats.chi2_independence(np.column_stack([bits, bits])) < 1e-6
    assert stats.correlation(u, u) == pytest.approx(1.0)


def test_degenerate_inputs():
    x = np.zeros(200, dtype=int)
    assert stats.chi2_independence(np.column_stack([x, x])) == 1.0
    assert stats.correlation(np.ones(200), np.arange(200)) == 0.0
    with pytest.raises(ParameterError):
        stats.ks_uniform(np.full(10, 0.5))
    with pytest.raises(ParameterError):
        stats.chi2_goodness_of_fit(np.full(200, 3), [0.5, 0.5])
    with pytest.raises(ParameterError):
        stats.autocorr(np.zeros(200), lag=0)
