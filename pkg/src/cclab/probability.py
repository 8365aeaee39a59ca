"""Finite-alphabet probability primitives.

Everything here works in nats. Divergences that blow up because absolute
continuity fails are returned as ``math.inf``; the helpers below only ever
multiply an infinite value by a strictly positive weight, so an infinity
propagates through an expectation instead of turning into NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    InfeasibleBudgetError,
    InvalidDistributionError,
)

SUM_TOL = 1e-12
LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# carriers


class FiniteDist:
    """Probability vector on ``{0, ..., size-1}``.

    The stored array is read-only. ``np.asarray(dist)`` gives it back without
    a copy, so a FiniteDist can be dropped into any function taking arrays.
    """

    __slots__ = ("_p",)

    def __init__(self, probs, tol=SUM_TOL):
        p = np.array(probs, dtype=float)
        check_probs(p, tol=tol)
        p.setflags(write=False)
        self._p = p

    @property
    def probs(self):
        return self._p

    @property
    def size(self):
        return self._p.shape[0]

    def support(self):
        return np.flatnonzero(self._p > 0)

    def __len__(self):
        return self.size

    def __getitem__(self, k):
        return self._p[k]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._p
        return self._p.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return np.array_equal(self._p, other._p)

    def __hash__(self):
        return hash(self._p.tobytes())

    def __repr__(self):
        return f"FiniteDist({np.array2string(self._p, precision=6)})"

    def tolist(self):
        return self._p.tolist()


class StochKernel:
    """Row-stochastic matrix: row ``u`` is the law of the output given input ``u``."""

    __slots__ = ("_m",)

    def __init__(self, matrix, tol=SUM_TOL):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2:
            raise DimensionError(f"kernel must be a 2-D table, got shape {m.shape}")
        for u, row in enumerate(m):
            try:
                check_probs(row, tol=tol)
            except InvalidDistributionError as exc:
                raise InvalidDistributionError(f"row {u}: {exc}") from None
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self):
        return self._m

    @property
    def input_size(self):
        return self._m.shape[0]

    @property
    def output_size(self):
        return self._m.shape[1]

    @property
    def rows(self):
        return [FiniteDist(r) for r in self._m]

    def row(self, u):
        return self._m[u]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._m
        return self._m.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, StochKernel):
            return NotImplemented
        return np.array_equal(self._m, other._m)

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"StochKernel({self.input_size}x{self.output_size})"

    def tolist(self):
        return self._m.tolist()


def check_probs(p, tol=SUM_TOL):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError(f"expected a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError("entries must be finite")
    if np.any(p < 0):
        raise InvalidDistributionError(f"negative entry {p.min()!r}")
    s = p.sum()
    if abs(s - 1.0) > tol:
        raise InvalidDistributionError(f"entries sum to {s!r}, not 1")
    return p


def as_probs(p, tol=SUM_TOL):
    """Validated float array view of a distribution-like object."""
    return check_probs(np.asarray(p, dtype=float), tol=tol)


def as_kernel(k, tol=SUM_TOL):
    if isinstance(k, StochKernel):
        return k.matrix
    return StochKernel(k, tol=tol).matrix


# --------------------------------------------------------------------------
# extended-real helpers


def expect(p, values):
    """Sum of ``p * values`` over entries with ``p > 0``.

    Values at zero-probability entries are ignored entirely, so ``0 * inf``
    never happens. Any infinite value on the support makes the result
    infinite.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = p > 0
    vals = v[mask]
    if vals.size and np.isnan(vals).any():
        raise ValueError("NaN on the support of an expectation")
    if np.isposinf(vals).any():
        if np.isneginf(vals).any():
            raise ValueError("expectation of a value that is +inf and -inf on the support")
        return math.inf
    if np.isneginf(vals).any():
        return -math.inf
    return float(np.dot(p[mask], vals))


def log_ratio(p, q):
    """Elementwise ``log(p/q)`` where ``p > 0``; ``+inf`` where ``q == 0 < p``.

    Entries with ``p == 0`` come back as 0 since they are always weighted
    by ``p`` downstream.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    p_b = np.broadcast_to(p, out.shape)
    q_b = np.broadcast_to(q, out.shape)
    pos = p_b > 0
    bad = pos & (q_b <= 0)
    ok = pos & ~bad
    out[ok] = np.log(p_b[ok]) - np.log(q_b[ok])
    out[bad] = np.inf
    return out


def _kl_rows(P, q):
    """KL of every row of ``P`` against the single vector ``q``."""
    lr = log_ratio(P, q[None, :])
    with np.errstate(invalid="ignore"):
        terms = np.where(P > 0, P * lr, 0.0)
    return terms.sum(axis=1)


def to_base(value, base="nats"):
    """Convert a nat-valued scalar (or array) to the requested reporting base."""
    if base in ("nats", "nat", "e", None):
        return value
    if base in ("bits", "bit", 2):
        return value / LN2
    raise ValueError(f"unknown log base {base!r}")


# --------------------------------------------------------------------------
# divergences


def kl_divergence(p, q, base="nats"):
    """Relative entropy D(p||q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionError(f"alphabet sizes differ: {p.shape} vs {q.shape}")
    return to_base(expect(p, log_ratio(p, q)), base)


def entropy(p, base="nats"):
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0]
    return to_base(float(-(nz * np.log(nz)).sum()), base)


def binary_entropy(x, base="nats"):
    return entropy([x, 1.0 - x], base)


def conditional_kl(pv_given_u, qv_given_u, pu, base="nats"):
    """Conditional divergence: the ``pu``-average of the row-wise divergences."""
    P = np.asarray(pv_given_u, dtype=float)
    Q = np.asarray(qv_given_u, dtype=float)
    pu = np.asarray(pu, dtype=float)
    if P.ndim != 2 or P.shape != Q.shape or pu.shape != (P.shape[0],):
        raise DimensionError(f"incompatible shapes {P.shape}, {Q.shape}, {pu.shape}")
    rows = np.empty(P.shape[0])
    for u in range(P.shape[0]):
        rows[u] = kl_divergence(P[u], Q[u]) if pu[u] > 0 else 0.0
    return to_base(expect(pu, rows), base)


def output_distribution(kernel, input_dist):
    W = np.asarray(kernel, dtype=float)
    p = np.asarray(input_dist, dtype=float)
    if W.ndim != 2 or p.shape != (W.shape[0],):
        raise DimensionError(f"input of size {p.shape} does not fit kernel {W.shape}")
    return p @ W


def mutual_information(kernel, input_dist, base="nats"):
    W = np.asarray(kernel, dtype=float)
    p = np.asarray(input_dist, dtype=float)
    r = output_distribution(W, p)
    marg = np.broadcast_to(r, W.shape)
    value = conditional_kl(W, marg, p)
    # a tiny negative is round-off of an exact zero
    return to_base(max(value, 0.0), base)


def mutual_information_joint(joint, base="nats"):
    """I(A;B) from a 2-D joint probability table."""
    J = np.asarray(joint, dtype=float)
    pa = J.sum(axis=1)
    pb = J.sum(axis=0)
    # compare rows of the conditional with pb; pa * pb can underflow to 0
    cond = np.divide(J, pa[:, None], out=np.zeros_like(J), where=pa[:, None] > 0)
    ratios = log_ratio(cond, np.broadcast_to(pb, J.shape))
    return to_base(max(expect(J.ravel(), ratios.ravel()), 0.0), base)


# --------------------------------------------------------------------------
# capacity-cost


@dataclass(frozen=True)
class CostedChannel:
    kernel: StochKernel
    eta: np.ndarray
    budget: float

    def __post_init__(self):
        k = self.kernel if isinstance(self.kernel, StochKernel) else StochKernel(self.kernel)
        eta = np.array(self.eta, dtype=float)
        if eta.shape != (k.input_size,):
            raise DimensionError(f"eta has shape {eta.shape}, expected ({k.input_size},)")
        if np.any(eta < 0) or np.isnan(eta).any():
            raise ValueError("input costs must be non-negative")
        if not self.budget >= 0:
            raise ValueError("budget must be non-negative")
        eta.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "budget", float(self.budget))


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    optimal_input: FiniteDist
    expected_cost: float
    multiplier: float
    upper_bound: float
    gap: float
    iterations: int


def _lagrangian(W, eta, s, q):
    """Primal value ``I(q) - s q.eta`` and the per-input dual terms ``D(W_x||qW) - s eta_x``."""
    g = _kl_rows(W, q @ W) - s * eta
    return expect(q, g), g


def _newton_polish(W, eta, s, q, steps=30):
    """Newton ascent of ``I(q) - s q.eta`` restricted to the support of ``q``.

    Blahut-Arimoto contracts slowly when the channel rows are close, which
    is exactly when the certificate is hardest to reach; a few Newton steps
    on the simplex restore full precision there.
    """
    primal, g = _lagrangian(W, eta, s, q)
    for _ in range(steps):
        S = np.flatnonzero(q > 1e-300)
        if S.size < 2:
            break
        r = q @ W
        pos = r > 0
        WS = W[S][:, pos]
        H = -(WS / r[pos]) @ WS.T
        grad = g[S] - 1.0
        k = S.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H
        K[:k, k] = K[k, :k] = 1.0
        d = np.linalg.lstsq(K, np.concatenate([-grad, [0.0]]), rcond=None)[0][:k]
        t, neg = 1.0, d < 0
        if neg.any():
            t = min(1.0, float(np.min(-q[S][neg] / d[neg])))
        improved = False
        while t > 1e-12:
            cand = q.copy()
            cand[S] = np.clip(q[S] + t * d, 0.0, None)
            cand /= cand.sum()
            cp, cg = _lagrangian(W, eta, s, cand)
            if cp >= primal:
                improved = cp > primal
                q, primal, g = cand, cp, cg
                break
            t *= 0.5
        if not improved:
            break
    return q, primal, g


def _ba_inner(W, eta, s, q, tol, max_iter, polish_every=200):
    """Blahut-Arimoto for max_Q I(Q) - s E_Q[eta].

    Returns the final input, the primal value I(q) - s q.eta, the dual
    bound max_x [D(W_x||qW) - s eta_x] and the iteration count. The dual
    bound is a valid upper bound at every iterate.
    """
    it = 0
    while True:
        primal, g = _lagrangian(W, eta, s, q)
        gmax = g.max()
        if gmax - primal <= tol or it >= max_iter:
            return q, primal, gmax, it
        if it and it % polish_every == 0:
            qn, pn, gn = _newton_polish(W, eta, s, q)
            if gn.max() - pn < gmax - primal:
                q, primal, g, gmax = qn, pn, gn, gn.max()
                if gmax - primal <= tol:
                    return q, primal, gmax, it
        q = q * np.exp(np.where(np.isfinite(g), g - gmax, -np.inf))
        q = q / q.sum()
        it += 1


def capacity_cost(channel, eta=None, budget=None, tol=1e-9, max_iter=100_000, base="nats"):
    """Capacity-cost function via Blahut-Arimoto and a bisection on the multiplier.

    ``channel`` is a CostedChannel, or a kernel with ``eta`` and ``budget``
    given separately. ``eta=None`` means no input cost. The returned gap is
    the certified distance between the best dual bound and the mutual
    information of the returned (feasible) input.
    """
    if not isinstance(channel, CostedChannel):
        k = channel if isinstance(channel, StochKernel) else StochKernel(channel)
        if eta is None:
            eta = np.zeros(k.input_size)
            budget = 0.0 if budget is None else budget
        elif budget is None:
            raise ValueError("a budget is required when input costs are given")
        channel = CostedChannel(k, eta, budget)
    eta = np.asarray(channel.eta)
    finite = np.isfinite(eta)
    if not finite.any():
        raise InfeasibleBudgetError("every input has infinite cost")
    if not finite.all():
        # inputs of infinite cost can never carry mass under a finite budget
        sub = capacity_cost(channel.kernel.matrix[finite], eta[finite], channel.budget, tol, max_iter)
        q = np.zeros(eta.size)
        q[finite] = sub.optimal_input.probs
        return CapacityResult(
            capacity=to_base(sub.capacity, base), optimal_input=FiniteDist(q), expected_cost=sub.expected_cost,
            multiplier=sub.multiplier, upper_bound=to_base(sub.upper_bound, base), gap=to_base(sub.gap, base),
            iterations=sub.iterations,
        )
    W = channel.kernel.matrix
    P = channel.budget
    nx = W.shape[0]

    if eta.min() > P + 1e-15:
        raise InfeasibleBudgetError(f"cheapest input costs {eta.min()!r} > budget {P!r}")

    inner_tol = min(tol * 1e-3, 1e-12)
    total_iter = 0
    q0 = np.full(nx, 1.0 / nx)

    def solve(s, start):
        nonlocal total_iter
        q, primal, dual, it = _ba_inner(W, eta, s, start, inner_tol, max_iter)
        total_iter += it
        return q, float(q @ eta), s * P + dual

    def mi(q):
        return mutual_information(W, q)

    q, cost, upper = solve(0.0, q0)
    best_upper = upper
    best_q, best_val, best_s = None, -math.inf, 0.0
    if cost <= P + 1e-12:
        best_q, best_val = q, mi(q)
    else:
        # bracket the multiplier: the cost of the Lagrangian maximiser is
        # non-increasing in s
        s_lo, q_lo, c_lo = 0.0, q, cost
        s_hi = 1.0
        while True:
            q_hi, c_hi, up = solve(s_hi, q_lo)
            best_upper = min(best_upper, up)
            if c_hi <= P + 1e-12:
                break
            s_lo, q_lo, c_lo = s_hi, q_hi, c_hi
            s_hi *= 2.0
            if s_hi > 1e12:
                break
        for _ in range(200):
            if c_hi <= P + 1e-12 and c_lo > c_hi:
                lam = (P - c_hi) / (c_lo - c_hi)
                lam = min(max(lam, 0.0), 1.0)
                q_mix = lam * q_lo + (1.0 - lam) * q_hi
                q_mix = q_mix / q_mix.sum()
                if q_mix @ eta > P + 1e-12:
                    q_mix = q_hi
                val = mi(q_mix)
                if val > best_val:
                    best_q, best_val, best_s = q_mix, val, 0.5 * (s_lo + s_hi)
            if c_hi <= P + 1e-12:
                val = mi(q_hi)
                if val > best_val:
                    best_q, best_val, best_s = q_hi, val, s_hi
            if best_upper - best_val <= 0.1 * tol or s_hi - s_lo <= 1e-15 * max(1.0, s_hi):
                break
            s_mid = 0.5 * (s_lo + s_hi)
            q_mid, c_mid, up = solve(s_mid, q_lo)
            best_upper = min(best_upper, up)
            if c_mid > P + 1e-12:
                s_lo, q_lo, c_lo = s_mid, q_mid, c_mid
            else:
                s_hi, q_hi, c_hi = s_mid, q_mid, c_mid
        if best_q is None:
            raise ConvergenceError("no feasible input found", gap=math.inf)

    gap = max(best_upper - best_val, 0.0)
    if gap > tol:
        raise ConvergenceError(f"capacity-cost gap {gap:.3e} exceeds {tol:.1e}", gap=gap)
    best_q = np.clip(best_q, 0.0, None)
    best_q = best_q / best_q.sum()
    return CapacityResult(
        capacity=to_base(best_val, base),
        optimal_input=FiniteDist(best_q),
        expected_cost=float(best_q @ eta),
        multiplier=float(best_s),
        upper_bound=float(to_base(best_upper, base)),
        gap=float(to_base(gap, base)),
        iterations=total_iter,
    )
