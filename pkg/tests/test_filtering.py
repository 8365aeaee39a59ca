import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cclab.errors import DimensionError, EnumerationCapError, ImpossibleObservationError
from cclab.filtering import belief_trajectory, brute_force_posterior, nlf, ospu, output_predictive
from cclab.models import MarkovSource, bsc, repetition_source

from conftest import random_kernel, random_source

SRC = MarkovSource([0.5, 0.5], [[0.9, 0.1], [0.2, 0.8]])


def test_ospu_is_one_step_prediction():
    assert ospu([1.0, 0.0], SRC) == pytest.approx([0.9, 0.1])


def test_nlf_by_hand():
    # prediction (0.55, 0.45), identity encoder, BSC(0.1), y = 0
    b = nlf([0.5, 0.5], 0, np.array([0, 1]), bsc(0.1).matrix, SRC)
    num = np.array([0.55 * 0.9, 0.45 * 0.1])
    assert b == pytest.approx(num / num.sum(), abs=1e-15)


def test_output_predictive_sums_to_one():
    py = output_predictive([0.3, 0.7], np.array([1, 0]), bsc(0.2).matrix, SRC)
    assert py.sum() == pytest.approx(1.0)


def test_impossible_observation():
    W = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ImpossibleObservationError):
        nlf([0.5, 0.5], 1, np.array([0, 1]), W, SRC)


def test_bad_encoder_map():
    with pytest.raises(DimensionError):
        nlf([0.5, 0.5], 0, np.array([0, 2]), bsc(0.1).matrix, SRC)
    with pytest.raises(DimensionError):
        belief_trajectory([0, 1], [np.array([0, 1])], SRC, bsc(0.1).matrix)


def test_brute_force_cap():
    src = repetition_source(np.full(4, 0.25))
    with pytest.raises(EnumerationCapError):
        brute_force_posterior([0] * 12, [np.zeros(4, dtype=int)] * 12, src, bsc(0.1).matrix, 12, 12, cap=10**6)


def test_repetition_source_collapses_on_noiseless_channel():
    src = repetition_source([0.25, 0.25, 0.5])
    W = np.eye(3)
    traj = belief_trajectory([2], [np.arange(3)], src, W)
    assert traj[1][1].tolist() == [0.0, 0.0, 1.0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_filter_matches_brute_force_everywhere(seed):
    rng = np.random.default_rng(seed)
    nw, nx, ny = rng.integers(1, 4, size=3)
    n = int(rng.integers(1, 5))
    src = random_source(rng, nw, floor=0.05)
    W = random_kernel(rng, nx, ny, floor=0.05)
    emaps = [rng.integers(0, nx, size=nw) for _ in range(n)]
    ys = rng.integers(0, ny, size=n).tolist()
    traj = belief_trajectory(ys, emaps, src, W)
    for i in range(1, n + 1):
        assert traj[i][0] == pytest.approx(brute_force_posterior(ys, emaps, src, W, i - 1, i), abs=1e-12)
        assert traj[i][1] == pytest.approx(brute_force_posterior(ys, emaps, src, W, i, i), abs=1e-12)
    # smoothing is not filtering: a past state conditioned on later outputs is still a law
    assert brute_force_posterior(ys, emaps, src, W, n, 0).sum() == pytest.approx(1.0)
