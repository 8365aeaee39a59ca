import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cclab.errors import DimensionError, InfeasibleBudgetError, InvalidDistributionError
from cclab.models import bsc, inverted_e_channel, z_channel
from cclab.probability import (
    FiniteDist,
    StochKernel,
    binary_entropy,
    capacity_cost,
    entropy,
    expect,
    kl_divergence,
    mutual_information,
    mutual_information_joint,
    to_base,
)

LN2 = math.log(2)


def _simplex(k):
    return arrays(np.float64, k, elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 1e-3).map(
        lambda a: a / a.sum()
    )


def test_finite_dist_validation():
    with pytest.raises(InvalidDistributionError):
        FiniteDist([0.5, 0.6])
    with pytest.raises(InvalidDistributionError):
        FiniteDist([1.5, -0.5])
    with pytest.raises(InvalidDistributionError):
        FiniteDist([])
    with pytest.raises(InvalidDistributionError):
        FiniteDist([math.nan, 1.0])
    d = FiniteDist([0.25, 0.75])
    assert d.size == 2 and d.support().tolist() == [0, 1]
    assert np.asarray(d) is d.probs
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


def test_kernel_rows_checked():
    with pytest.raises(InvalidDistributionError, match="row 1"):
        StochKernel([[1.0, 0.0], [0.3, 0.3]])
    with pytest.raises(DimensionError):
        StochKernel([0.5, 0.5])
    k = StochKernel([[0.9, 0.1], [0.2, 0.8]])
    assert (k.input_size, k.output_size) == (2, 2)


def test_expect_ignores_zero_mass_infinities():
    assert expect([1.0, 0.0], [2.0, math.inf]) == 2.0
    assert expect([0.5, 0.5], [2.0, math.inf]) == math.inf
    with pytest.raises(ValueError):
        expect([0.5, 0.5], [math.inf, -math.inf])


def test_units():
    assert entropy([0.5, 0.5], base="bits") == pytest.approx(1.0, abs=1e-15)
    assert to_base(LN2, "bits") == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        to_base(1.0, "dits")


def test_kl_off_support_is_infinite():
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(LN2)


@given(_simplex(4), _simplex(4))
def test_kl_nonnegative_and_zero_on_diagonal(p, q):
    assert kl_divergence(p, q) >= -1e-12
    assert abs(kl_divergence(p, p)) <= 1e-12


@given(_simplex(3), arrays(np.float64, (3, 4), elements=st.floats(0.01, 1.0)))
# subnormal input mass: the product of marginals underflows
@example(np.array([2e-323, 0.0, 1.0]), np.array([[0.125] * 4, [0.125] * 4, [1.0, 0.125, 0.125, 0.125]]))
def test_mutual_information_matches_joint_form(px, raw):
    W = raw / raw.sum(axis=1, keepdims=True)
    joint = px[:, None] * W
    a = mutual_information(W, px)
    assert a == pytest.approx(mutual_information_joint(joint), abs=1e-12)
    assert -1e-12 <= a <= min(entropy(px), entropy(joint.sum(axis=0))) + 1e-12


@pytest.mark.parametrize("eps", [0.0, 0.05, 0.11, 0.25, 0.5])
def test_bsc_capacity(eps):
    res = capacity_cost(bsc(eps).matrix)
    assert res.capacity == pytest.approx(LN2 - binary_entropy(eps), abs=1e-9)
    assert res.gap <= 1e-9
    assert res.upper_bound >= res.capacity


def test_capacity_reports_in_bits():
    res = capacity_cost(bsc(0.1).matrix, base="bits")
    assert res.capacity == pytest.approx(0.5310044064107189, abs=1e-9)


def test_inverted_e_capacity_is_one_bit():
    res = capacity_cost(inverted_e_channel().matrix, base="bits")
    assert res.capacity == pytest.approx(1.0, abs=1e-9)
    # the middle input is useless
    assert res.optimal_input.probs[1] == pytest.approx(0.0, abs=1e-6)


def test_budget_constrained_bsc():
    # only input 1 costs; a budget below 1/2 binds
    res = capacity_cost(bsc(0.1).matrix, eta=[0.0, 1.0], budget=0.2)
    q = 0.2
    py1 = q * 0.9 + (1 - q) * 0.1
    assert res.capacity == pytest.approx(binary_entropy(py1) - binary_entropy(0.1), abs=1e-9)
    assert res.expected_cost == pytest.approx(0.2, abs=1e-9)
    assert res.multiplier > 0


def test_infeasible_budget():
    with pytest.raises(InfeasibleBudgetError):
        capacity_cost(bsc(0.1).matrix, eta=[1.0, 2.0], budget=0.5)


def test_infinite_cost_inputs_are_dropped():
    W = inverted_e_channel().matrix
    res = capacity_cost(W, eta=[0.0, 0.0, math.inf], budget=1.0)
    assert res.optimal_input.probs[2] == 0.0
    assert res.capacity == pytest.approx(capacity_cost(W[:2]).capacity, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.0, 0.6), st.floats(0.0, 0.6))
def test_capacity_cost_monotone_and_concave(mu, b1, b2):
    W = z_channel(mu).matrix
    eta = [0.0, 1.0]
    lo, hi = sorted((b1, b2))
    c_lo = capacity_cost(W, eta, lo).capacity
    c_hi = capacity_cost(W, eta, hi).capacity
    c_mid = capacity_cost(W, eta, 0.5 * (lo + hi)).capacity
    assert c_lo <= c_hi + 1e-9
    assert c_mid >= 0.5 * (c_lo + c_hi) - 1e-9


def test_nearly_useless_channel_certifies():
    W = np.array([[0.6223, 0.3777], [0.6122, 0.3878]])
    res = capacity_cost(W, eta=[0.7554, 0.6421], budget=0.7)
    assert res.gap <= 1e-9
