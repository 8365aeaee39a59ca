"""Exact finite-horizon joint law of (W, X, Y, Z) under a policy, and mutual-information bookkeeping.

Time runs ``z_{i-1} -> w_i -> x_i -> y_i -> z_i`` with ``w_0`` drawn from the
source's initial law and ``z_0`` fixed by the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EnumerationCapError
from .policies import unique_rows
from .probability import to_base

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class JointLaw:
    """Atoms of the joint law; row ``a`` is one trajectory with mass ``p[a] > 0``.

    ``w`` has columns ``w_0..w_n``, ``z`` has ``z_0..z_n`` (codes into
    ``z_values``), ``x`` and ``y`` have columns for times ``1..n``.
    """

    n: int
    p: np.ndarray
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    z_values: tuple

    @property
    def n_atoms(self):
        return self.p.shape[0]

    def mass_by(self, cols):
        """Per-atom probability of the group sharing the values in ``cols``."""
        if cols.shape[1] == 0:
            return np.ones_like(self.p)
        _, inv = unique_rows(cols)
        return np.bincount(inv, weights=self.p)[inv]

    def marginal(self, cols, sizes=None):
        """Distinct rows of ``cols`` with their probabilities."""
        uniq, inv = unique_rows(cols)
        return uniq, np.bincount(inv, weights=self.p, minlength=uniq.shape[0])

    def expect(self, values):
        return float(np.dot(self.p, values))

    def y_joint(self):
        """Dense array ``P(y_1..y_n)``."""
        ny = int(self.y.max()) + 1 if self.y.size else 1
        out = np.zeros((ny,) * self.n)
        np.add.at(out, tuple(self.y.T), self.p)
        return out


def _successors(M):
    """CSR view of the non-zero entries of a row-stochastic matrix."""
    rows, cols = np.nonzero(M)
    indptr = np.zeros(M.shape[0] + 1, dtype=np.intp)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, cols, M[rows, cols]


def _expand(state, indptr, cols, vals):
    counts = indptr[state + 1] - indptr[state]
    parent = np.repeat(np.arange(state.size), counts)
    start = np.repeat(indptr[state], counts)
    local = np.arange(parent.size) - np.repeat(np.cumsum(counts) - counts, counts)
    k = start + local
    return parent, cols[k], vals[k]


def enumerate_joint_law(source, channel, policy, n, cap=DEFAULT_CAP):
    Q = source.kernel.matrix
    Wch = np.asarray(channel, dtype=float)
    init = np.asarray(source.initial.probs, dtype=float)
    w0 = np.flatnonzero(init > 0)
    p = init[w0]
    w = w0[:, None].astype(np.intp)
    x = np.zeros((p.size, 0), dtype=np.intp)
    y = np.zeros((p.size, 0), dtype=np.intp)
    z = np.full((p.size, 1), policy.z0, dtype=np.intp)
    q_ptr, q_cols, q_vals = _successors(Q)
    c_ptr, c_cols, c_vals = _successors(Wch)
    for i in range(1, n + 1):
        counts = q_ptr[w[:, -1] + 1] - q_ptr[w[:, -1]]
        if counts.sum() > cap:
            raise EnumerationCapError(
                f"joint law at horizon {i} needs {int(counts.sum())} atoms (cap {cap})",
                horizon=i, count=int(counts.sum()), cap=cap,
            )
        par, nxt, pr = _expand(w[:, -1], q_ptr, q_cols, q_vals)
        p = p[par] * pr
        w = np.column_stack([w[par], nxt])
        x, y, z = x[par], y[par], z[par]

        xi = np.asarray(policy.encode(i, w, y, z), dtype=np.intp)
        if xi.min() < 0 or xi.max() >= Wch.shape[0]:
            raise DimensionError(f"encoder produced an input outside the channel alphabet at stage {i}")
        x = np.column_stack([x, xi])

        counts = c_ptr[xi + 1] - c_ptr[xi]
        if counts.sum() > cap:
            raise EnumerationCapError(
                f"joint law at horizon {i} needs {int(counts.sum())} atoms (cap {cap})",
                horizon=i, count=int(counts.sum()), cap=cap,
            )
        par, yi, pr = _expand(xi, c_ptr, c_cols, c_vals)
        p = p[par] * pr
        w, x, y, z = w[par], x[par], y[par], z[par]
        y = np.column_stack([y, yi])

        zi = np.asarray(policy.decode(i, y, z), dtype=np.intp)
        z = np.column_stack([z, zi])

        keep = p > 0
        if not keep.all():
            p, w, x, y, z = p[keep], w[keep], x[keep], y[keep], z[keep]
    total = p.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"joint law sums to {total!r}")
    return JointLaw(n=n, p=p, w=w, x=x, y=y, z=z, z_values=tuple(policy.z_values))


# --------------------------------------------------------------------------
# information quantities from the joint law


def _log_ratio_term(law, num_a, num_b, den_a, den_b):
    """``E[log (P(num_a) P(num_b)) / (P(den_a) P(den_b))]`` with groups given as column blocks."""
    la = np.log(law.mass_by(num_a)) + np.log(law.mass_by(num_b))
    lb = np.log(law.mass_by(den_a)) + np.log(law.mass_by(den_b))
    return law.expect(la - lb)


def mutual_info(law, a_cols, b_cols, given_cols=None):
    """I(A;B|C) where A, B, C are column blocks of the atom table."""
    if given_cols is None:
        given_cols = np.zeros((law.n_atoms, 0), dtype=np.intp)
    abc = np.column_stack([a_cols, b_cols, given_cols])
    c = given_cols
    ac = np.column_stack([a_cols, given_cols])
    bc = np.column_stack([b_cols, given_cols])
    return max(_log_ratio_term(law, abc, c, ac, bc), 0.0)


def entropy_of(law, cols):
    return -law.expect(np.log(law.mass_by(cols)))


@dataclass(frozen=True)
class MIDecomposition:
    mi_direct: float
    mi_chain_rule: float
    mi_sequential_gains: float


def mi_decompositions(law, base="nats"):
    """Three evaluations of I(W_1..W_n; Y_1..Y_n).

    The chain-rule sum always equals the direct value. The sum of per-step
    gains ``E log B_{i|i}(W_i) / B_{i|i-1}(W_i)`` equals them when each
    input depends on the source only through its current symbol.
    """
    n = law.n
    W = law.w[:, 1:]
    direct = mutual_info(law, W, law.y)
    chain = 0.0
    gains = 0.0
    for i in range(1, n + 1):
        prev = law.y[:, : i - 1]
        cur = law.y[:, i - 1 : i]
        chain += mutual_info(law, W, cur, prev)
        gains += mutual_info(law, law.w[:, i : i + 1], cur, prev)
    return MIDecomposition(to_base(direct, base), to_base(chain, base), to_base(gains, base))


def directed_terms(law):
    """Per-step ``I(X_i; Y_i)`` from the joint law."""
    return [mutual_info(law, law.x[:, i : i + 1], law.y[:, i : i + 1]) for i in range(law.n)]
