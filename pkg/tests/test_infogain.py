import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cclab.dp import BeliefState
from cclab.infogain import (
    InfoGainCost,
    bar_d_infogain,
    best_information_rate,
    hmm_mode,
    info_gain_distortion,
    verify_infogain_optimality,
)
from cclab.models import MarkovSource, bsc, repetition_source
from cclab.probability import binary_entropy, expect

from conftest import random_dist, random_kernel, random_source

SRC = MarkovSource([0.5, 0.5], [[0.9, 0.1], [0.2, 0.8]])


def test_pointwise_value():
    zp = np.array([0.5, 0.5])
    z = np.array([0.8, 0.2])
    pred = zp @ SRC.Q
    assert info_gain_distortion(0, zp, z, SRC) == pytest.approx(-math.log(0.8 / pred[0]))


def test_infinite_outside_support():
    src = repetition_source([0.5, 0.5])
    # z puts mass where the prediction has none
    assert info_gain_distortion(0, np.array([1.0, 0.0]), np.array([0.5, 0.5]), src) == math.inf
    s = BeliefState(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    assert bar_d_infogain(s, np.array([1.0, 0.0]), src) == math.inf


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_expected_cost_equals_divergence_difference(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    src = random_source(rng, k, floor=0.01)
    zp, z, b = (random_dist(rng, k, 0.01) for _ in range(3))
    pointwise = expect(b, [info_gain_distortion(w, zp, z, src) for w in range(k)])
    assert bar_d_infogain(BeliefState(zp, b), z, src) == pytest.approx(pointwise, abs=1e-12)


def test_tensor_matches_scalar_form():
    rng = np.random.default_rng(3)
    src = MarkovSource([0.5, 0.5], [[1.0, 0.0], [0.3, 0.7]])
    beliefs = np.vstack([random_dist(rng, 2) for _ in range(4)] + [[1.0, 0.0], [0.0, 1.0]])
    zs = [np.array(v) for v in ([0.5, 0.5], [1.0, 0.0], [0.0, 1.0], [0.2, 0.8])]
    cost = InfoGainCost.make(src)
    T = cost.bar_d_tensor(beliefs, zs, zs)
    for a, zp in enumerate(zs):
        for j, b in enumerate(beliefs):
            for c, z in enumerate(zs):
                want = bar_d_infogain(BeliefState(zp, b), z, src)
                if math.isinf(want):
                    assert math.isinf(T[a, j, c])
                else:
                    assert T[a, j, c] == pytest.approx(want, abs=1e-12)


def test_atom_values_match_pointwise():
    cost = InfoGainCost.make(SRC)
    zs = [np.array([0.5, 0.5]), np.array([0.9, 0.1])]
    w = np.array([0, 1, 0, 1])
    zp = np.array([0, 0, 1, 1])
    z = np.array([1, 1, 0, 0])
    got = cost.atom_values(w, zp, z, zs)
    want = [info_gain_distortion(a, zs[b], zs[c], SRC) for a, b, c in zip(w, zp, z)]
    assert got == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.11, 0.3])
def test_single_use_oracle_is_capacity(eps):
    value, mi, _ = best_information_rate(repetition_source([0.5, 0.5]), bsc(eps).matrix, 1)
    assert mi == pytest.approx(math.log(2) - binary_entropy(eps), abs=1e-12)
    assert value == pytest.approx(-mi)


def test_input_cost_shifts_the_oracle():
    src = repetition_source([0.5, 0.5])
    free, _, _ = best_information_rate(src, bsc(0.1).matrix, 2)
    costly, _, _ = best_information_rate(src, bsc(0.1).matrix, 2, alpha=1.0, eta=[0.0, 10.0])
    assert costly > free


def test_optimality_report_two_uses():
    rep = verify_infogain_optimality(repetition_source([0.3, 0.7]), bsc(0.15).matrix, 0.0, None, 2, 100)
    assert rep.passed
    assert rep.decoder_attains_min and rep.encoder_zprev_independent
    assert abs(rep.identity_residual) <= 1e-9
    assert set(rep.as_dict()) >= {"dp_value", "oracle_value", "value_gap"}


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_filter_decoder_cost_is_minus_information(seed):
    rng = np.random.default_rng(seed)
    src = random_source(rng, 2, floor=0.05)
    W = random_kernel(rng, 2, 2, floor=0.05)
    rep = hmm_mode(src, W, 2, deviation_resolution=8)
    assert abs(rep.difference) <= 1e-9
    assert rep.passed
