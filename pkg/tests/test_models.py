import math

import numpy as np
import pytest

from cclab.errors import DimensionError, ParameterError, TruncationError
from cclab.models import (
    GaussianModel,
    MarkovSource,
    QueueModel,
    TrapdoorModel,
    bsc,
    channel_preset,
    gaussian_steady_state,
    iid_source,
    inverted_e_channel,
    queue_birth_death_chain,
    queue_source,
    repetition_source,
    trapdoor_source,
    trapdoor_source_and_init,
    z_channel,
)


def test_markov_source_shapes():
    with pytest.raises(DimensionError):
        MarkovSource([0.5, 0.5], [[1.0, 0.0, 0.0]] * 2)
    with pytest.raises(DimensionError):
        MarkovSource([1.0], [[0.5, 0.5], [0.5, 0.5]])
    src = MarkovSource([1.0, 0.0], [[0.9, 0.1], [0.2, 0.8]])
    assert src.marginal(2) == pytest.approx([0.83, 0.17])


def test_repetition_and_iid():
    assert np.array_equal(repetition_source([0.3, 0.7]).Q, np.eye(2))
    iid = iid_source([0.3, 0.7])
    assert iid.marginal(5) == pytest.approx([0.3, 0.7])


def test_channels():
    assert bsc(0.1).matrix.tolist() == [[0.9, 0.1], [0.1, 0.9]]
    with pytest.raises(ParameterError):
        bsc(1.2)
    z = z_channel(0.3, n_inputs=4).matrix
    assert z[0].tolist() == [1.0, 0.0] and np.allclose(z[1:], [0.7, 0.3])
    assert inverted_e_channel(4).matrix[3].tolist() == [0.0, 1.0]
    assert channel_preset("bsc", epsilon=0.2) == bsc(0.2)
    with pytest.raises(ParameterError):
        channel_preset("erasure")


def test_queue_validation():
    with pytest.raises(ParameterError):
        QueueModel(1.0, 0.5, 0.01)
    with pytest.raises(ParameterError):
        QueueModel(0.5, 1.0, 2.0)
    with pytest.raises(TruncationError):
        QueueModel(0.9, 1.0, 0.01, K=20)


@pytest.mark.parametrize("kind", ["birth-death", "slotted"])
def test_queue_chain_stationary(kind):
    q = QueueModel(0.5, 1.0, 0.01, 60)
    pi, P = queue_birth_death_chain(q, kind)
    assert np.max(np.abs(pi.probs @ P.matrix - pi.probs)) <= 1e-14
    # birth-death, so tridiagonal
    assert np.allclose(np.triu(P.matrix, 2), 0) and np.allclose(np.tril(P.matrix, -2), 0)


def test_queue_birth_death_chain_is_geometric():
    q = QueueModel(0.5, 1.0, 0.01, 60)
    pi, _ = queue_birth_death_chain(q, "birth-death")
    assert pi.probs[1] / pi.probs[0] == pytest.approx(0.5)


def test_queue_source_counts_arrivals():
    q = QueueModel(0.5, 1.0, 0.01, 60)
    src = queue_source(q, horizon=3)
    Q = src.Q
    ld = 0.5 * 0.01
    assert Q[0, 0] == pytest.approx(1 - ld) and Q[0, 1] == pytest.approx(ld)


def test_trapdoor_laws():
    laws = trapdoor_source_and_init(TrapdoorModel(0.3))
    pi = laws.initial_state.probs
    assert pi @ laws.transition.matrix == pytest.approx(pi, abs=1e-15)
    src = trapdoor_source(TrapdoorModel(0.3), 3)
    assert src.size == 5
    assert src.initial.probs[:2] == pytest.approx([0.3, 0.7])
    with pytest.raises(ParameterError):
        TrapdoorModel(1.0)


def test_gaussian_fixed_point():
    g = gaussian_steady_state(0.5, 1.0, 1.0, 1.0)
    assert g.C == pytest.approx(8 / 7, abs=1e-12)
    assert g.beta == pytest.approx(math.sqrt(7 / 8), abs=1e-12)
    assert g.gamma == pytest.approx(math.sqrt(8 / 7) / 2, abs=1e-12)
    assert g.covariance_step(g.C) == pytest.approx(g.C, abs=1e-14)


@pytest.mark.parametrize("rho, sm, sv, p", [(0.9, 2.0, 0.5, 3.0), (-0.7, 1.0, 4.0, 0.2), (0.0, 1.0, 1.0, 1.0)])
def test_gaussian_fixed_point_general(rho, sm, sv, p):
    g = gaussian_steady_state(rho, sm, sv, p)
    kappa = sv / (p + sv)
    assert g.C == pytest.approx(sm / (1 - rho**2 * kappa), rel=1e-12)


def test_gaussian_validation():
    with pytest.raises(ParameterError):
        GaussianModel(1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ParameterError):
        GaussianModel(0.5, 1.0, 0.0, 1.0)

