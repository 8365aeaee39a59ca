"""Sequential information-gain cost and the optimality of the posterior decoder.

The distortion ``d(w, z_prev, z) = -log(z(w) / Phi(z_prev)(w))`` rewards a
decoder output ``z`` (a belief) for putting more mass on the true symbol
than the prediction from ``z_prev`` did. It is signed: gains are negative
costs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dp import (
    BeliefGrid,
    CostSpec,
    _transitions,
    evaluate_policy_exact,
    policy_cost_terms,
    stage_q_values,
    value_recursion,
)
from .filtering import ospu
from .joint import enumerate_joint_law, mi_decompositions
from .policies import BeliefPolicy, BeliefRegistry, FilterDecoderPolicy, identity_encoder
from .probability import expect, kl_divergence


def _abs_cont(p, q):
    """True when ``p << q``."""
    return not np.any((np.asarray(p) > 0) & (np.asarray(q) <= 0))


def info_gain_distortion(w, z_prev, z, source):
    pred = ospu(z_prev, source)
    z = np.asarray(z, dtype=float)
    if not _abs_cont(z, pred) or z[w] <= 0:
        return math.inf
    return -(math.log(z[w]) - math.log(pred[w]))


def bar_d_infogain(s, z, source):
    """Expected information-gain distortion under ``s.belief`` via two divergences."""
    b = np.asarray(s.belief, dtype=float)
    pred = ospu(s.z_prev, source)
    z = np.asarray(z, dtype=float)
    if not (_abs_cont(b, z) and _abs_cont(z, pred)):
        return math.inf
    return kl_divergence(b, z) - kl_divergence(b, pred)


def _safe_log(a):
    out = np.zeros(np.shape(a))
    pos = np.asarray(a) > 0
    out[pos] = np.log(np.asarray(a)[pos])
    return out


@dataclass(frozen=True)
class InfoGainCost(CostSpec):
    """Information-gain distortion plus ``alpha * eta``; decoder outputs are beliefs."""

    source: object = field(default=None, repr=False)

    def __post_init__(self):
        src = self.source
        object.__setattr__(self, "d", lambda w, zp, z: info_gain_distortion(w, zp, z, src))
        super().__post_init__()

    @classmethod
    def make(cls, source, alpha=0.0, eta=None, n_inputs=None):
        if eta is None:
            eta = np.zeros(n_inputs if n_inputs is not None else source.size)
        return cls(d=None, eta=eta, alpha=alpha, source=source)

    def bar_d_tensor(self, beliefs, zp_values, z_values):
        B = np.asarray(beliefs, dtype=float)
        Zp = np.asarray(zp_values, dtype=float)
        Z = np.asarray(z_values, dtype=float)
        Phi = Zp @ self.source.kernel.matrix
        # b << z fails, or z << Phi(zp) fails
        fail_bz = ((B > 0).astype(float) @ (Z <= 0).T.astype(float)) > 0
        fail_zp = ((Z > 0).astype(float) @ (Phi <= 0).T.astype(float)) > 0  # [z, zp]
        a = B @ _safe_log(Phi).T  # [b, zp]
        c = B @ _safe_log(Z).T  # [b, z]
        out = a.T[:, :, None] - c[None, :, :]
        out[:, fail_bz] = np.inf
        out[fail_zp.T[:, None, :].repeat(B.shape[0], axis=1)] = np.inf
        return out

    def atom_values(self, w, zp, z, z_values):
        keys = np.stack([zp, z], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        Q = self.source.kernel.matrix
        out = np.empty(w.shape[0])
        for k, (a, c) in enumerate(uniq):
            sel = inv == k
            pred = np.asarray(z_values[a], dtype=float) @ Q
            zc = np.asarray(z_values[c], dtype=float)
            ws = w[sel]
            if not _abs_cont(zc, pred):
                out[sel] = np.inf
                continue
            vals = np.full(ws.shape[0], np.inf)
            ok = zc[ws] > 0
            vals[ok] = np.log(pred[ws[ok]]) - np.log(zc[ws[ok]])
            out[sel] = vals
        return out


# --------------------------------------------------------------------------
# exhaustive oracle over encoders that see (w_i, y^{i-1})


def _markov_encoder_tables(n_w, n_x, n_y, n):
    shapes = [(n_w,) + (n_y,) * (i - 1) for i in range(1, n + 1)]
    choices = [list(itertools.product(range(n_x), repeat=int(np.prod(s)))) for s in shapes]
    for tables in itertools.product(*choices):
        yield [np.array(t, dtype=np.intp).reshape(s) for t, s in zip(tables, shapes)]


def _path_law(source, n):
    """``P(w_1..w_n)`` as a dense tensor."""
    Q = source.kernel.matrix
    p = source.marginal(1)
    for _ in range(1, n):
        p = p[..., None] * Q.reshape((1,) * (p.ndim - 1) + Q.shape)
    return p


def best_information_rate(source, channel, n, alpha=0.0, eta=None):
    """``min over encoders x_i = e_i(w_i, y^{i-1})`` of ``-I(W^n;Y^n) + alpha sum E eta(X_i)``.

    Full tensor evaluation per encoder; feasible for binary models up to n=3.
    Returns ``(value, mutual information, encoder tables)``.
    """
    Wch = np.asarray(channel, dtype=float)
    nw, nx, ny = source.size, Wch.shape[0], Wch.shape[1]
    eta = np.zeros(nx) if eta is None else np.asarray(eta, dtype=float)
    pw = _path_law(source, n)
    shape = (nw,) * n + (ny,) * n
    w_axes = [np.arange(nw).reshape((1,) * i + (nw,) + (1,) * (2 * n - i - 1)) for i in range(n)]
    y_axes = [np.arange(ny).reshape((1,) * (n + i) + (ny,) + (1,) * (n - i - 1)) for i in range(n)]
    best = (math.inf, None, None)
    for tabs in _markov_encoder_tables(nw, nx, ny, n):
        joint = np.broadcast_to(pw.reshape(pw.shape + (1,) * n), shape).copy()
        xs = []
        for i in range(n):
            x = np.broadcast_to(tabs[i][(w_axes[i],) + tuple(y_axes[:i])], shape)
            joint *= Wch[x, np.broadcast_to(y_axes[i], shape)]
            xs.append(x)
        cost = sum(float((joint * eta[x]).sum()) for x in xs) if alpha else 0.0
        J = joint.reshape(nw**n, ny**n)
        pa, pb = J.sum(axis=1), J.sum(axis=0)
        mask = J > 0
        mi = float((J[mask] * np.log(J[mask] / np.outer(pa, pb)[mask])).sum())
        val = -mi + alpha * cost
        if val < best[0] - 1e-15:
            best = (val, mi, tabs)
    return best


# --------------------------------------------------------------------------
# posterior-decoder optimality


@dataclass
class InfoGainOptimalityReport:
    dp_value: float
    oracle_value: float
    oracle_mi: float
    value_gap: float
    tolerance: float
    reachable_states: int
    decoder_attains_min: bool
    decoder_equals_posterior: int
    worst_decoder_state: tuple | None
    worst_decoder_excess: float
    encoder_zprev_independent: bool
    worst_encoder_state: tuple | None
    policy_value: float
    policy_mi: float
    policy_input_cost: float
    identity_residual: float
    passed: bool = False

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def reachable_grid_states(sol):
    """Grid states ``(stage, z_prev index, belief index)`` visited with positive probability."""
    grid = sol.grid
    b0 = np.asarray(sol.source.initial.probs, dtype=float)
    front = set()
    if sol.horizon == 0:
        return []
    T, _ = _transitions(grid, sol.emaps[[sol.initial_emap]], sol.source, sol.channel, b0[None, :], sol.projection)
    for j in T[0].nonzero()[1]:
        front.add((sol.z0, int(j)))
    out = []
    for k in range(1, sol.horizon + 1):
        nxt = set()
        for zp, j in sorted(front):
            out.append((k, zp, j))
            if k == sol.horizon:
                continue
            t = sol.tables[k]
            e = int(t.emap_index[zp, j])
            z = int(t.z_index[zp, j])
            Te, _ = _transitions(grid, sol.emaps[[e]], sol.source, sol.channel, grid.points[j][None, :], sol.projection)
            for jj in Te[0].nonzero()[1]:
                nxt.add((z, int(jj)))
        front = nxt
    return out


def verify_infogain_optimality(source, channel, alpha, eta, n, grid, grid_tol=0.02, tol=1e-6, projection="interp"):
    """Solve the information-gain DP on a grid and check the posterior-decoder structure.

    (i) at every reachable grid state the decoder output equal to the
    state's own belief attains the minimum; (ii) the optimal encoder map
    does not depend on ``z_prev``; (iii) the DP value matches the best
    ``-I(W^n;Y^n) + alpha sum E eta`` over exhaustively enumerated encoders.
    """
    if not isinstance(grid, BeliefGrid):
        grid = BeliefGrid(source.size, int(grid))
    nx = np.asarray(channel).shape[0]
    eta = np.zeros(nx) if eta is None else np.asarray(eta, dtype=float)
    cost = InfoGainCost.make(source, alpha=alpha, eta=eta)
    prior = np.asarray(source.initial.probs, dtype=float)
    sol = value_recursion(n, cost, source, channel, grid, "grid", z0=prior, projection=projection)
    oracle_val, oracle_mi, _ = best_information_rate(source, channel, n, alpha, eta)

    states = reachable_grid_states(sol)
    worst_dec, worst_dec_state, exact_hits = 0.0, None, 0
    enc_ok, worst_enc_state = True, None
    for k, zp, j in states:
        V = sol.tables[k].values[zp, j]
        if not np.isfinite(V):
            continue
        b = grid.points[j]
        q = stage_q_values(sol, k, zp, b)
        excess = float(q[:, j].min() - V)
        if excess > worst_dec:
            worst_dec, worst_dec_state = excess, (k, zp, j)
        if sol.tables[k].z_index[zp, j] == j:
            exact_hits += 1
        if k < n:
            # the encoder chosen at any other z_prev must be optimal here too
            gaps = q.min(axis=1) - V
            t = sol.tables[k]
            for zp2 in range(len(sol.z_values)):
                if not np.isfinite(t.values[zp2, j]):
                    continue
                e2 = int(t.emap_index[zp2, j])
                if gaps[e2] > tol:
                    enc_ok, worst_enc_state = False, (k, zp2, j)
                    break
    # the DP encoder run with the exact filter as decoder: cost = -I + alpha * input cost
    policy = _PosteriorDecoded(sol)
    law = enumerate_joint_law(source, channel, policy, n)
    mi = mi_decompositions(law).mi_direct
    pol_val = expect(law.p, policy_cost_terms(law, cost))
    input_cost = sum(float(law.p @ eta[law.x[:, i]]) for i in range(n))
    identity_residual = pol_val + mi - alpha * input_cost
    gap = sol.initial_value - oracle_val
    bound = tol + grid_tol
    rep = InfoGainOptimalityReport(
        dp_value=sol.initial_value,
        oracle_value=oracle_val,
        oracle_mi=oracle_mi,
        value_gap=gap,
        tolerance=bound,
        reachable_states=len(states),
        decoder_attains_min=worst_dec <= tol,
        decoder_equals_posterior=exact_hits,
        worst_decoder_state=worst_dec_state,
        worst_decoder_excess=worst_dec,
        encoder_zprev_independent=enc_ok,
        worst_encoder_state=worst_enc_state,
        policy_value=pol_val,
        policy_mi=mi,
        policy_input_cost=input_cost,
        identity_residual=identity_residual,
    )
    rep.passed = bool(abs(gap) <= bound and rep.decoder_attains_min and enc_ok and abs(identity_residual) <= bound)
    return rep


class _PosteriorDecoded(BeliefPolicy):
    """Encoder maps from a DP solution, decoder output equal to the exact posterior."""

    def __init__(self, sol):
        self.sol = sol
        self.registry = BeliefRegistry()
        prior = np.asarray(sol.source.initial.probs, dtype=float)
        super().__init__(sol.source, sol.channel, self.registry.code(prior), z_values=self.registry.values)

    def choose(self, i, z_prev, belief):
        sol = self.sol
        if i == 0:
            return self.z0, sol.emaps[sol.initial_emap]
        z = self.registry.code(belief)
        if i == sol.horizon:
            return z, sol.emaps[0]
        g = sol.grid
        a = int(g.nearest(self.registry.values[z_prev])[0])
        e = int(sol.tables[i].emap_index[a, int(g.nearest(belief)[0])])
        return z, sol.emaps[e]


# --------------------------------------------------------------------------
# identity encoder followed by the exact filter


@dataclass
class HMMReport:
    policy_cost: float
    minus_mi: float
    difference: float
    deviations_checked: int
    best_deviation_gain: float
    passed: bool


class _DeviatedFilter(FilterDecoderPolicy):
    """Filter decoder except at one output history, where it emits a fixed belief."""

    def __init__(self, source, channel, history, belief):
        self.history = tuple(history)
        self.override = np.asarray(belief, dtype=float)
        super().__init__(source, channel, identity_encoder)

    def state(self, y_hist):
        y_hist = tuple(int(v) for v in y_hist)
        out = super().state(y_hist)
        if y_hist == self.history:
            b, z, e = out
            out = (b, self.registry.code(self.override), e)
            self._memo[y_hist] = out
        return out


def hmm_mode(source, channel, n, deviation_resolution=20, tol=1e-9):
    """Identity encoder with the filter decoder under the information-gain cost (no input cost)."""
    Wch = np.asarray(channel, dtype=float)
    if Wch.shape[0] != source.size:
        raise ValueError("the identity encoder needs the input alphabet to equal the source alphabet")
    cost = InfoGainCost.make(source, alpha=0.0, eta=np.zeros(Wch.shape[0]))
    policy = FilterDecoderPolicy(source, Wch, identity_encoder)
    law = enumerate_joint_law(source, Wch, policy, n)
    J = expect(law.p, policy_cost_terms(law, cost))
    mi = mi_decompositions(law).mi_direct
    # single-node deviations of the decoder to grid beliefs never help
    grid = BeliefGrid(source.size, deviation_resolution)
    histories = []
    for i in range(1, n + 1):
        histories.extend(itertools.product(range(Wch.shape[1]), repeat=i))
    best_gain = 0.0
    checked = 0
    py = {}
    for row, pr in zip(*law.marginal(law.y)):
        for i in range(1, n + 1):
            key = tuple(int(v) for v in row[:i])
            py[key] = py.get(key, 0.0) + pr
    for h in histories:
        if py.get(h, 0.0) <= 0:
            continue
        for z in grid.points:
            alt = _DeviatedFilter(source, Wch, h, z)
            Jalt = evaluate_policy_exact(alt, cost, source, Wch, n)
            checked += 1
            best_gain = max(best_gain, J - Jalt)
    diff = J + mi
    return HMMReport(J, -mi, diff, checked, best_gain, bool(abs(diff) <= tol and best_gain <= tol))
