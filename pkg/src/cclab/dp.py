"""Belief-state dynamic programming for encoder/decoder coordination.

The state at stage ``i`` is ``s = (z_{i-1}, b_{i|i})`` and the control is
``u = (encoder map for stage i+1, z_i)``. Beliefs live on a regular simplex
grid. After a transition the exact posterior is split over the vertices of
the grid cell containing it (Freudenthal triangulation, barycentric
weights), which keeps the recursion a finite MDP and preserves the
predictive mixture of next beliefs exactly. Nearest-point projection is
available as ``projection="nearest"``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DimensionError, EnumerationCapError, ParameterError
from .filtering import as_emap, nlf, ospu
from .joint import DEFAULT_CAP, enumerate_joint_law
from .policies import BeliefPolicy, HistoryPolicy
from .probability import expect

ENCODER_MAP_CAP = 10**5


# --------------------------------------------------------------------------
# states and controls


@dataclass(frozen=True)
class BeliefState:
    z_prev: object
    belief: np.ndarray


@dataclass(frozen=True)
class Control:
    emap: np.ndarray
    z: object


def enumerate_encoder_maps(src_size, input_size, cap=ENCODER_MAP_CAP):
    """All maps from source symbols to inputs, lexicographic in ``(e(0), e(1), ...)``."""
    count = input_size**src_size
    if count > cap:
        raise EnumerationCapError(f"{input_size}^{src_size} encoder maps exceed the cap {cap}", count=count, cap=cap)
    return np.array(list(itertools.product(range(input_size), repeat=src_size)), dtype=np.intp).reshape(
        count, src_size
    )


# --------------------------------------------------------------------------
# belief grid


class BeliefGrid:
    """All points ``k / R`` of the probability simplex, ``k`` a composition of ``R``."""

    def __init__(self, size, resolution):
        if size < 1 or resolution < 1:
            raise ParameterError("grid needs at least one symbol and resolution >= 1")
        self.size = int(size)
        self.resolution = int(resolution)
        R, d = self.resolution, self.size
        comps = []
        for bars in itertools.combinations(range(R + d - 1), d - 1):
            edges = (-1,) + bars + (R + d - 1,)
            comps.append([edges[j + 1] - edges[j] - 1 for j in range(d)])
        counts = np.array(comps, dtype=np.int64).reshape(-1, d)
        order = np.lexsort(counts.T[::-1])
        self.counts = counts[order]
        self.points = self.counts / R
        self.points.setflags(write=False)
        self._radix = (R + 1) ** np.arange(d - 1, -1, -1, dtype=np.int64)
        self._codes = self.counts @ self._radix
        if np.any(np.diff(self._codes) <= 0):
            raise RuntimeError("grid codes are not sorted")

    def __len__(self):
        return self.points.shape[0]

    def index_of_counts(self, counts):
        counts = np.asarray(counts, dtype=np.int64)
        codes = counts @ self._radix
        idx = np.searchsorted(self._codes, codes)
        if np.any(idx >= len(self)) or np.any(self._codes[np.minimum(idx, len(self) - 1)] != codes):
            raise ValueError("not a grid composition")
        return idx

    def nearest(self, b):
        """Index of the closest grid point (Euclidean); rows of ``b`` are beliefs."""
        b = np.atleast_2d(np.asarray(b, dtype=float))
        y = b * self.resolution
        f = np.floor(y + 1e-9)
        frac = y - f
        deficit = (self.resolution - f.sum(axis=1)).round().astype(int)
        order = np.argsort(-frac, axis=1, kind="stable")
        ranks = np.empty_like(order)
        rows = np.arange(b.shape[0])[:, None]
        ranks[rows, order] = np.arange(b.shape[1])[None, :]
        k = f + (ranks < deficit[:, None])
        return self.index_of_counts(k.astype(np.int64))

    def interpolate(self, b):
        """Vertices and barycentric weights of the cell containing each row of ``b``.

        Returns ``(idx, lam)`` of shape ``(m, size)``; ``lam @ points[idx]``
        reproduces ``b``.
        """
        b = np.atleast_2d(np.asarray(b, dtype=float))
        m, d = b.shape
        R = self.resolution
        cum = np.cumsum((b * R)[:, ::-1], axis=1)[:, ::-1]
        cum[:, 0] = R
        near = np.round(cum)
        # absorb cumsum round-off only, so the mixture stays exact
        cum = np.where(np.abs(cum - near) <= 64 * np.finfo(float).eps * R, near, cum)
        base = np.floor(cum)
        frac = cum - base
        frac[:, 0] = 0.0
        if d == 1:
            return self.index_of_counts(np.full((m, 1), R)).reshape(m, 1), np.ones((m, 1))
        tail = frac[:, 1:]
        order = np.argsort(-tail, axis=1, kind="stable") + 1
        sorted_frac = np.take_along_axis(frac, order, axis=1)
        lam = np.empty((m, d))
        lam[:, 0] = 1.0 - sorted_frac[:, 0]
        lam[:, 1:-1] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
        lam[:, -1] = sorted_frac[:, -1]
        verts = np.empty((m, d, d), dtype=np.int64)
        c = base.astype(np.int64)
        verts[:, 0] = c
        rows = np.arange(m)
        for t in range(1, d):
            c = c.copy()
            c[rows, order[:, t - 1]] += 1
            verts[:, t] = c
        # zero-weight vertices may step off the simplex at its boundary
        verts = np.where((lam == 0)[:, :, None], verts[:, :1], verts)
        counts = verts - np.concatenate([verts[:, :, 1:], np.zeros((m, d, 1), dtype=np.int64)], axis=2)
        idx = self.index_of_counts(counts.reshape(m * d, d)).reshape(m, d)
        return idx, lam


# --------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class CostSpec:
    """Additive cost ``d(w, z_prev, z) + alpha * eta(x)``.

    ``d`` is a table ``d[w, z_prev, z]`` over decoder-output codes, or a
    callable ``d(w, z_prev_value, z_value)``. Values may be negative and may
    be ``inf``.
    """

    d: object
    eta: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float)
        if np.any(eta < 0):
            raise ParameterError("input costs must be non-negative")
        if self.alpha < 0:
            raise ParameterError("alpha must be non-negative")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        if not callable(self.d):
            d = np.array(self.d, dtype=float)
            if d.ndim != 3:
                raise DimensionError("distortion table must be indexed by (w, z_prev, z)")
            d.setflags(write=False)
            object.__setattr__(self, "d", d)

    def table(self, n_w, zp_values, z_values):
        if not callable(self.d):
            return self.d
        out = np.empty((n_w, len(zp_values), len(z_values)))
        for w in range(n_w):
            for a, zp in enumerate(zp_values):
                for c, z in enumerate(z_values):
                    out[w, a, c] = self.d(w, zp, z)
        return out

    def bar_d_tensor(self, beliefs, zp_values, z_values):
        """``[zp, b, z] -> E_b d(W, zp, z)`` for every belief row."""
        D = self.table(beliefs.shape[1], zp_values, z_values)
        return np.stack([_expect_rows(beliefs, D[:, a, :]) for a in range(D.shape[1])])

    def atom_values(self, w, zp, z, z_values):
        """Per-atom distortion for code arrays ``w, zp, z``."""
        if not callable(self.d):
            return self.d[w, zp, z]
        out = np.empty(w.shape[0])
        keys = np.stack([w, zp, z], axis=1)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        vals = np.array([self.d(int(a), z_values[b], z_values[c]) for a, b, c in uniq])
        out[:] = vals[inv.ravel()]
        return out


def _expect_rows(B, D):
    """``B @ D`` with the convention that +inf on the support gives +inf."""
    bad = np.isinf(D)
    finite = np.where(bad, 0.0, D)
    out = B @ finite
    if bad.any():
        hit = (B > 0).astype(float) @ bad.astype(float)
        out[hit > 0] = np.inf
    return out


def bar_d(s, z, spec, zp_values=None, z_values=None):
    """Expected distortion of decoder output ``z`` under the state's belief."""
    b = np.asarray(s.belief, dtype=float)
    if not callable(spec.d):
        return expect(b, spec.d[:, s.z_prev, z])
    return expect(b, [spec.d(w, s.z_prev, z) for w in range(b.size)])


def bar_eta(s, emap, spec, source):
    pred = ospu(s.belief, source)
    e = np.asarray(emap)
    return float(pred @ spec.eta[e])


def mdp_transition(s, u, source, channel):
    """Next states ``(u.z, F(b, y, emap))`` with their probabilities, one per feasible y."""
    W = np.asarray(channel, dtype=float)
    pred = ospu(s.belief, source)
    e = as_emap(u.emap, pred.size, W.shape[0])
    py = pred @ W[e]
    out = []
    for y in np.flatnonzero(py > 0):
        out.append((float(py[y]), BeliefState(u.z, nlf(s.belief, int(y), e, W, source))))
    return out


def stage_cost(s, u, spec, stage, horizon, source):
    if not 0 <= stage <= horizon:
        raise ParameterError(f"stage {stage} outside 0..{horizon}")
    if stage == horizon:
        return bar_d(s, u.z, spec)
    eta = spec.alpha * bar_eta(s, u.emap, spec, source)
    if stage == 0:
        return eta
    dv = bar_d(s, u.z, spec)
    return dv + eta


# --------------------------------------------------------------------------
# value recursion


@dataclass(frozen=True)
class ValueTable:
    """Stage-``k`` cost-to-go on grid states ``(z_prev, belief index)``.

    ``emap_index`` is -1 at the terminal stage, where no encoder acts.
    """

    stage: int
    values: np.ndarray
    emap_index: np.ndarray
    z_index: np.ndarray


@dataclass
class DPSolution:
    horizon: int
    grid: BeliefGrid
    emaps: np.ndarray
    z_values: list
    z0: int
    tables: list
    initial_value: float
    initial_emap: int
    projection: str
    spec: CostSpec = field(repr=False)
    source: object = field(repr=False)
    channel: np.ndarray = field(repr=False)


def _transitions(grid, emaps, source, channel, beliefs, projection):
    """Sparse matrices ``T[e][b, b'] = P(next grid belief b' | belief b, emap e)``."""
    Q = source.kernel.matrix
    Wch = np.asarray(channel, dtype=float)
    pred = beliefs @ Q
    pred = pred / pred.sum(axis=1, keepdims=True)
    mats = []
    nb, ng = beliefs.shape[0], len(grid)
    for e in emaps:
        lik = Wch[e].T  # [y, w]
        joint = pred[:, None, :] * lik[None, :, :]
        py = joint.sum(axis=2)
        bi, yi = np.nonzero(py > 0)
        post = joint[bi, yi] / py[bi, yi][:, None]
        if projection == "interp":
            idx, lam = grid.interpolate(post)
            rows = np.repeat(bi, idx.shape[1])
            cols = idx.ravel()
            vals = (py[bi, yi][:, None] * lam).ravel()
        elif projection == "nearest":
            rows, cols, vals = bi, grid.nearest(post), py[bi, yi]
        else:
            raise ParameterError(f"unknown projection {projection!r}")
        keep = vals > 0
        mats.append(sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(nb, ng)))
    return mats, pred


def _resolve_z(z_alphabet, grid):
    if isinstance(z_alphabet, str):
        if z_alphabet != "grid":
            raise ParameterError(f"unknown decoder alphabet {z_alphabet!r}")
        return [p for p in grid.points], True
    if isinstance(z_alphabet, (int, np.integer)):
        return list(range(int(z_alphabet))), False
    return list(z_alphabet), False


def value_recursion(horizon, spec, source, channel, grid, z_alphabet, z0=0, initial=None, projection="interp"):
    """Backward induction over the gridded state space.

    ``z_alphabet`` is a number of decoder labels, an explicit list of values,
    or ``"grid"`` (decoder outputs range over the grid points). ``z0`` is the
    code of the known initial decoder output; with a grid alphabet it may be
    given as a belief vector that lies on the grid. Returns a DPSolution
    whose ``tables[k]`` is the stage-``k`` ValueTable.
    """
    if horizon < 0:
        raise ParameterError("horizon must be >= 0")
    Wch = np.asarray(channel, dtype=float)
    nw = source.size
    if grid.size != nw:
        raise DimensionError(f"grid on {grid.size} symbols, source on {nw}")
    z_values, z_is_grid = _resolve_z(z_alphabet, grid)
    if z_is_grid and not np.isscalar(z0):
        z0 = int(grid.nearest(np.asarray(z0, dtype=float))[0])
        if np.abs(grid.points[z0] - z_values[z0]).max() > 0:
            raise ValueError("initial decoder output is not a grid point")
    z0 = int(z0)
    nz = len(z_values)
    if not 0 <= z0 < nz:
        raise DimensionError(f"z0={z0} outside the decoder alphabet of size {nz}")
    emaps = enumerate_encoder_maps(nw, Wch.shape[0])
    B = np.asarray(grid.points)
    b0 = np.asarray(source.initial.probs if initial is None else initial, dtype=float)
    T, pred = _transitions(grid, emaps, source, Wch, B, projection)
    eta_bar = np.stack([pred @ spec.eta[e] for e in emaps], axis=1)  # [b, e]
    alpha = spec.alpha
    nb, ne = B.shape[0], emaps.shape[0]

    bar_d_slices = spec.bar_d_tensor(B, z_values, z_values)

    tables = [None] * (horizon + 1)
    # terminal stage: only the decoder acts
    vals = np.empty((nz, nb))
    zarg = np.empty((nz, nb), dtype=np.intp)
    for a in range(nz):
        D = bar_d_slices[a]
        zarg[a] = np.argmin(D, axis=1)
        vals[a] = D[np.arange(nb), zarg[a]]
    tables[horizon] = ValueTable(horizon, vals, np.full((nz, nb), -1, dtype=np.intp), zarg)

    def continuation(V):
        # cont[b, e, z] = sum_b' T_e[b, b'] V[z, b']
        Vt = np.where(np.isinf(V), 0.0, V).T
        inf_mask = np.isinf(V).T.astype(float)
        out = np.empty((nb, ne, nz))
        for k, Te in enumerate(T):
            c = Te @ Vt
            if inf_mask.any():
                hit = (Te @ inf_mask) > 0
                c[hit] = np.inf
            out[:, k, :] = c
        return out

    V_next = vals
    for k in range(horizon - 1, 0, -1):
        cont = continuation(V_next)
        base = alpha * eta_bar[:, :, None] + cont  # [b, e, z]
        vals = np.empty((nz, nb))
        earg = np.empty((nz, nb), dtype=np.intp)
        zarg = np.empty((nz, nb), dtype=np.intp)
        for a in range(nz):
            tot = base + bar_d_slices[a][:, None, :]
            flat = tot.reshape(nb, ne * nz)
            j = np.argmin(flat, axis=1)
            vals[a] = flat[np.arange(nb), j]
            earg[a], zarg[a] = np.divmod(j, nz)
        tables[k] = ValueTable(k, vals, earg, zarg)
        V_next = vals

    if horizon >= 1:
        cont = continuation(V_next)
        tot = alpha * eta_bar + cont[:, :, z0]  # [b, e]
        j = np.argmin(tot, axis=1)
        v = tot[np.arange(nb), j]
        tables[0] = ValueTable(
            0, np.tile(v, (nz, 1)), np.tile(j, (nz, 1)), np.full((nz, nb), z0, dtype=np.intp)
        )
        # the prior itself, which need not be a grid point
        Tb, pb = _transitions(grid, emaps, source, Wch, b0[None, :], projection)
        q0 = np.empty(ne)
        for k_e, Te in enumerate(Tb):
            row = Te.toarray()[0]
            cval = expect(row, V_next[z0])
            q0[k_e] = alpha * float(pb[0] @ spec.eta[emaps[k_e]]) + cval
        init_emap = int(np.argmin(q0))
        init_value = float(q0[init_emap])
    else:
        D = spec.bar_d_tensor(b0[None, :], z_values, z_values)[z0, 0]
        init_emap = -1
        init_value = float(D.min())

    return DPSolution(
        horizon=horizon, grid=grid, emaps=emaps, z_values=z_values, z0=z0, tables=tables,
        initial_value=init_value, initial_emap=init_emap, projection=projection,
        spec=spec, source=source, channel=Wch,
    )


def stage_q_values(sol, k, z_prev, belief):
    """Cost of every control ``[emap index, z]`` at one stage-``k`` state with an exact belief.

    At the terminal stage the emap axis has length 1. At stage 0 only the
    known ``z0`` column is finite.
    """
    b = np.asarray(belief, dtype=float)[None, :]
    spec, zv = sol.spec, sol.z_values
    n = sol.horizon
    if k == n:
        return spec.bar_d_tensor(b, zv, zv)[z_prev, 0][None, :]
    T, pred = _transitions(sol.grid, sol.emaps, sol.source, sol.channel, b, sol.projection)
    V = sol.tables[k + 1].values
    ne, nz = len(sol.emaps), len(zv)
    rows = np.vstack([Te.toarray() for Te in T])
    cont = _expect_rows(rows, V.T)
    eta = spec.alpha * np.array([pred[0] @ spec.eta[m] for m in sol.emaps])
    if k == 0:
        out = np.full((ne, nz), np.inf)
        out[:, sol.z0] = eta + cont[:, sol.z0]
        return out
    D = spec.bar_d_tensor(b, zv, zv)[z_prev, 0]
    return D[None, :] + eta[:, None] + cont


# --------------------------------------------------------------------------
# structural policy


class StructuralPolicy(BeliefPolicy):
    """Executes DP tables on the true posterior, looking up the nearest grid state."""

    def __init__(self, solution: DPSolution):
        self.solution = solution
        super().__init__(solution.source, solution.channel, solution.z0, z_values=solution.z_values)

    def grid_state(self, belief):
        return int(self.solution.grid.nearest(belief)[0])

    def choose(self, i, z_prev, belief):
        sol = self.solution
        n = sol.horizon
        if i == 0:
            e = sol.initial_emap if n >= 1 else 0
            return sol.z0, sol.emaps[max(e, 0)]
        j = self.grid_state(belief)
        t = sol.tables[i]
        z = int(t.z_index[z_prev, j])
        e = int(t.emap_index[z_prev, j])
        return z, sol.emaps[max(e, 0)]

    def encoder_map(self, i, z_prev, belief):
        """Stage ``i+1`` encoder map at a (gridded) state; -1 at the terminal stage."""
        t = self.solution.tables[i]
        return int(t.emap_index[z_prev, self.grid_state(belief)])

    def decoder_output(self, i, z_prev, belief):
        t = self.solution.tables[i]
        return int(t.z_index[z_prev, self.grid_state(belief)])


def extract_structural_policy(solution):
    return StructuralPolicy(solution)


# --------------------------------------------------------------------------
# exact evaluation and the exhaustive oracle


def policy_cost_terms(law, spec):
    """Per-atom total cost of a joint law."""
    total = np.zeros(law.n_atoms)
    for i in range(1, law.n + 1):
        dv = spec.atom_values(law.w[:, i], law.z[:, i - 1], law.z[:, i], law.z_values)
        total = total + dv + spec.alpha * spec.eta[law.x[:, i - 1]]
    return total


def evaluate_policy_exact(policy, spec, source, channel, n, cap=DEFAULT_CAP):
    """Expected total cost ``sum_i E[d(W_i, Z_{i-1}, Z_i) + alpha eta(X_i)]``."""
    law = enumerate_joint_law(source, channel, policy, n, cap=cap)
    return expect(law.p, policy_cost_terms(law, spec))


@dataclass(frozen=True)
class OracleResult:
    value: float
    best_policy: HistoryPolicy
    n_policies: int


def brute_force_optimal(spec, source, channel, n, z_alphabet, z0=0):
    """Minimum cost over every history-dependent encoder and decoder (tiny models only)."""
    Wch = np.asarray(channel, dtype=float)
    nw, nx, ny = source.size, Wch.shape[0], Wch.shape[1]
    nz = int(z_alphabet)
    if max(nw, nx, ny, nz) > 2 or n > 2 or n < 1:
        raise EnumerationCapError("exhaustive search is limited to binary alphabets and n <= 2", horizon=n)
    if callable(spec.d):
        raise ParameterError("the exhaustive oracle needs a tabulated distortion")
    Q = source.kernel.matrix
    p1 = source.marginal(1)

    # decoder side: every tuple of decoder tables, cost as a function of (w^n, y^n)
    dec_shapes = [(ny,) * i for i in range(1, n + 1)]
    dec_choices = [list(itertools.product(range(nz), repeat=int(np.prod(s)))) for s in dec_shapes]
    dec_tuples = list(itertools.product(*dec_choices))
    hist = list(itertools.product(range(nw), repeat=n))
    ys = list(itertools.product(range(ny), repeat=n))
    cost = np.zeros((len(dec_tuples), len(hist), len(ys)))
    for t, tables in enumerate(dec_tuples):
        dec = [np.array(tab).reshape(s) for tab, s in zip(tables, dec_shapes)]
        for yi, yv in enumerate(ys):
            zs = [z0] + [int(dec[i][yv[: i + 1]]) for i in range(n)]
            for hi, wv in enumerate(hist):
                c = 0.0
                for i in range(n):
                    c += spec.d[wv[i], zs[i], zs[i + 1]]
                cost[t, hi, yi] = c

    # source path probabilities of w_1..w_n
    pw = np.array([p1[wv[0]] * np.prod([Q[wv[i - 1], wv[i]] for i in range(1, n)]) for wv in hist])

    enc_shapes = [(nw,) * i + (ny,) * (i - 1) for i in range(1, n + 1)]
    enc_choices = [list(itertools.product(range(nx), repeat=int(np.prod(s)))) for s in enc_shapes]
    best = (math.inf, None, None)
    count = 0
    for tables in itertools.product(*enc_choices):
        enc = [np.array(tab).reshape(s) for tab, s in zip(tables, enc_shapes)]
        joint = np.zeros((len(hist), len(ys)))
        eta_cost = 0.0
        for hi, wv in enumerate(hist):
            for yi, yv in enumerate(ys):
                pr = pw[hi]
                ec = 0.0
                for i in range(n):
                    x = int(enc[i][wv[: i + 1] + yv[:i]])
                    pr *= Wch[x, yv[i]]
                    ec += spec.eta[x]
                joint[hi, yi] = pr
                eta_cost += pr * ec
        flat = joint.ravel()
        mask = flat > 0
        c = cost.reshape(len(dec_tuples), -1)[:, mask]
        with np.errstate(invalid="ignore"):
            vals = np.where(np.isinf(c).any(axis=1), np.inf, (np.where(np.isinf(c), 0, c) @ flat[mask]))
        vals = vals + spec.alpha * eta_cost
        count += len(dec_tuples)
        t = int(np.argmin(vals))
        if vals[t] < best[0]:
            best = (float(vals[t]), enc, t)
    value, enc, t = best
    dec = [np.array(tab).reshape(s) for tab, s in zip(dec_tuples[t], dec_shapes)]
    return OracleResult(value, HistoryPolicy(enc, dec, nz, z0=z0), count)
