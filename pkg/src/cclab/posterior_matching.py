"""Message-point feedback coding by posterior matching.

The message is a point ``W`` uniform on [0, 1]. With noiseless feedback both
ends track the posterior of ``W`` given past outputs, and the encoder sends
``F_X^{-1}(F_{W|Y^{i-1}}(W))``. Over the BSC the posterior stays piecewise
constant and the shaping is a threshold at 1/2, i.e. the encoder reports
which side of the posterior median ``W`` lies on.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy import stats as sp_stats

from . import rng as _rng
from . import stats
from .errors import ParameterError

PREC = 160
ONE = 1 << PREC
MERGE_TOL = 1e-14


def to_fixed(x):
    """``x`` in [0, 1] as a numerator over ``2**PREC`` (exact for floats)."""
    if isinstance(x, MessagePoint):
        return x.num
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool) and x > 1:
        raise ParameterError("pass positions as floats in [0, 1] or MessagePoint")
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"position {x!r} outside [0, 1]")
    return int(x * 2.0**PREC)


@dataclass(frozen=True)
class MessagePoint:
    """A point of [0, 1] held in ``PREC``-bit fixed point."""

    num: int

    def __post_init__(self):
        if not 0 <= self.num <= ONE:
            raise ParameterError("message point outside [0, 1]")

    @classmethod
    def from_float(cls, w):
        return cls(to_fixed(w))

    @classmethod
    def draw(cls, gen):
        words = gen.integers(0, 2**64, size=3, dtype=np.uint64)
        v = (int(words[0]) << 128) | (int(words[1]) << 64) | int(words[2])
        return cls(v >> (192 - PREC))

    @property
    def value(self):
        return self.num / ONE


class PiecewisePosterior:
    """Piecewise-constant density on [0, 1]: breakpoints and the mass of each piece.

    Breakpoints are kept in ``PREC``-bit fixed point. Double precision runs
    out once the posterior is narrower than about 1e-15, which the BSC(0.11)
    scheme reaches within a hundred uses.
    """

    __slots__ = ("_b", "masses", "_cum")

    def __init__(self, breaks, masses, tol=1e-12):
        b = tuple(to_fixed(float(v)) for v in breaks)
        self._init(b, masses, tol)

    @classmethod
    def _fixed(cls, b, masses, tol=1e-12):
        out = cls.__new__(cls)
        out._init(tuple(b), masses, tol)
        return out

    def _init(self, b, masses, tol):
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (len(b) - 1,):
            raise ParameterError("need one mass per interval between consecutive breakpoints")
        if b[0] != 0 or b[-1] != ONE or any(b[j + 1] <= b[j] for j in range(len(b) - 1)):
            raise ParameterError("breakpoints must increase strictly from 0 to 1")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > tol:
            raise ParameterError(f"piece masses must be non-negative and sum to 1, got {masses.sum()!r}")
        masses.setflags(write=False)
        self._b = b
        self.masses = masses
        self._cum = np.concatenate([[0.0], np.cumsum(masses)])

    @classmethod
    def uniform(cls):
        return cls._fixed((0, ONE), [1.0])

    @property
    def n_pieces(self):
        return self.masses.size

    @property
    def fixed_breaks(self):
        return self._b

    @property
    def breaks(self):
        return np.array([v / ONE for v in self._b])

    @property
    def widths(self):
        return np.array([(self._b[j + 1] - self._b[j]) / ONE for j in range(self.n_pieces)])

    @property
    def densities(self):
        return self.masses / self.widths

    def _piece(self, x):
        return min(max(bisect.bisect_right(self._b, x) - 1, 0), self.n_pieces - 1)

    def _cdf_fixed(self, x):
        j = self._piece(x)
        lo, hi = self._b[j], self._b[j + 1]
        return min(max(self._cum[j] + self.masses[j] * ((x - lo) / (hi - lo)), 0.0), 1.0)

    def cdf(self, w):
        """CDF at a MessagePoint (exact breakpoints) or at floats (vectorised)."""
        if isinstance(w, MessagePoint):
            return self._cdf_fixed(w.num)
        w = np.asarray(w, dtype=float)
        br = self.breaks
        j = np.clip(np.searchsorted(br, w, side="right") - 1, 0, self.n_pieces - 1)
        out = self._cum[j] + self.densities[j] * (w - br[j])
        return np.clip(out, 0.0, 1.0)

    def quantile_fixed(self, u):
        j = min(int(np.searchsorted(self._cum[1:], u, side="left")), self.n_pieces - 1)
        while self.masses[j] == 0 and j + 1 < self.n_pieces:
            j += 1
        frac = min(max((u - self._cum[j]) / self.masses[j], 0.0), 1.0)
        width = self._b[j + 1] - self._b[j]
        return self._b[j] + ((width * int(frac * 2**53)) >> 53)

    def quantile(self, u):
        return self.quantile_fixed(u) / ONE

    def median_fixed(self):
        return self.quantile_fixed(0.5)

    def median(self):
        return self.median_fixed() / ONE

    def mass(self, a, b):
        """Posterior probability of ``[a, b)``."""
        return max(self._cdf_fixed(to_fixed(b)) - self._cdf_fixed(to_fixed(a)), 0.0)

    def split(self, m):
        """Same density with ``m`` (fixed point) inserted as a breakpoint."""
        j = bisect.bisect_right(self._b, m) - 1
        if j < 0 or j >= self.n_pieces or m == self._b[j]:
            return self
        lo, hi = self._b[j], self._b[j + 1]
        left = self.masses[j] * ((m - lo) / (hi - lo))
        b = self._b[: j + 1] + (m,) + self._b[j + 1 :]
        masses = np.concatenate([self.masses[:j], [left, self.masses[j] - left], self.masses[j + 1 :]])
        return PiecewisePosterior._fixed(b, masses)

    def density_on(self, grid):
        br = self.breaks
        return self.densities[np.clip(np.searchsorted(br, grid, side="right") - 1, 0, self.n_pieces - 1)]


def _tidy(b, masses):
    """Merge neighbours whose densities agree to ``MERGE_TOL``."""
    keep = [0]
    out_m = [masses[0]]
    for j in range(1, masses.size):
        d_prev = float(out_m[-1]) / float(b[j] - b[keep[-1]])
        d_cur = float(masses[j]) / float(b[j + 1] - b[j])
        if abs(d_cur - d_prev) <= MERGE_TOL * max(d_cur, d_prev):
            out_m[-1] += masses[j]
        else:
            keep.append(j)
            out_m.append(masses[j])
    m = np.array(out_m)
    return tuple(b[k] for k in keep) + (b[-1],), m / m.sum()


def bsc_split_update(posterior, split, y, epsilon):
    """Bayes update after output ``y`` when the input was ``1{W >= split}``."""
    if not 0 <= epsilon <= 1:
        raise ParameterError(f"epsilon={epsilon} outside [0, 1]")
    split = split if isinstance(split, int) else to_fixed(split)
    p = posterior.split(split)
    right = np.array([v >= split for v in p.fixed_breaks[:-1]])
    lik = np.where(right == bool(y), 1.0 - epsilon, epsilon)
    masses = p.masses * lik
    total = masses.sum()
    if total <= 0:
        raise ParameterError("output has probability 0 under the posterior")
    b, m = _tidy(p.fixed_breaks, masses / total)
    return PiecewisePosterior._fixed(b, m)


def bsc_posterior_update(posterior, y, epsilon):
    """Posterior after output ``y`` of the median scheme.

    The input is ``1{W >= median}``; the decoder does not see it, so the
    update depends on the output alone. Both halves carry mass 1/2, so the
    side consistent with ``y`` is scaled by ``2(1 - epsilon)`` and the other
    by ``2 epsilon``.
    """
    return bsc_split_update(posterior, posterior.median_fixed(), y, epsilon)


class StepShaping:
    """Inverse CDF of a law on ``0..k``: ``u`` maps to the number of thresholds at or below it."""

    def __init__(self, thresholds):
        self.thresholds = tuple(float(t) for t in thresholds)

    def __call__(self, u):
        return sum(u >= t for t in self.thresholds)


bsc_shaping = StepShaping([0.5])


def pm_encoder_step(w, posterior, input_cdf_inverse):
    """``F_X^{-1}(F_{W|Y^{i-1}}(w))``.

    With a step shaping the comparison is made against posterior quantiles
    in fixed point, so ``w`` at the median maps to the upper input exactly.
    """
    if isinstance(input_cdf_inverse, StepShaping):
        x = to_fixed(w)
        return sum(x >= posterior.quantile_fixed(t) for t in input_cdf_inverse.thresholds)
    u = posterior.cdf(w) if isinstance(w, MessagePoint) else float(posterior.cdf(float(w)))
    return input_cdf_inverse(u)


# --------------------------------------------------------------------------
# Monte Carlo runs over the BSC


@dataclass
class PMRun:
    """A batch of seeded trials; arrays are ``[trial, i]`` for ``i = 1..n``.

    ``u[:, i-1]`` is ``F_{W|Y^{i-1}}(W)`` and ``median[:, i-1]`` the median
    of that posterior. ``groups[i][t]`` indexes ``posteriors[i]``, the
    posterior after ``i`` outputs, shared by every trial with the same
    output prefix.
    """

    seed: int
    n: int
    epsilon: float
    encoder: str
    points: list = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    median: np.ndarray = field(repr=False)
    groups: list = field(repr=False)
    posteriors: list = field(repr=False)

    @property
    def trials(self):
        return len(self.points)

    @property
    def w(self):
        return np.array([p.value for p in self.points])

    def posterior(self, trial, i):
        return self.posteriors[i][self.groups[i][trial]]


def simulate_bsc_pm(epsilon, n, trials, seed, encoder="pm"):
    """Run the median scheme (``encoder="pm"``) or the fixed split at 1/2 (``"fixed"``).

    Trial ``t`` draws ``W`` and then its ``n`` noise bits from stream ``(seed, t)``.
    Posteriors are computed once per distinct output prefix.
    """
    if encoder not in ("pm", "fixed"):
        raise ParameterError(f"unknown encoder {encoder!r}")
    if not 0 <= epsilon <= 1:
        raise ParameterError(f"epsilon={epsilon} outside [0, 1]")
    points, flips = [], np.empty((trials, n), dtype=bool)
    for t in range(trials):
        g = _rng.stream(seed, t)
        points.append(MessagePoint.draw(g))
        flips[t] = g.random(n) < epsilon
    w_num = [p.num for p in points]
    w_val = np.array([p.value for p in points])
    half = ONE // 2
    x = np.zeros((trials, n), dtype=np.intp)
    y = np.zeros((trials, n), dtype=np.intp)
    u = np.zeros((trials, n))
    med = np.zeros((trials, n))
    groups = [np.zeros(trials, dtype=np.intp)]
    posteriors = [[PiecewisePosterior.uniform()]]
    for i in range(n):
        g = groups[-1]
        posts = posteriors[-1]
        medians = [p.median_fixed() for p in posts]
        splits = medians if encoder == "pm" else [half] * len(posts)
        for k, p in enumerate(posts):
            sel = np.flatnonzero(g == k)
            u[sel, i] = p.cdf(w_val[sel])
            med[sel, i] = medians[k] / ONE
            s = splits[k]
            x[sel, i] = [w_num[t] >= s for t in sel]
        y[:, i] = x[:, i] ^ flips[:, i]
        keys, new_g = np.unique(g * 2 + y[:, i], return_inverse=True)
        groups.append(new_g.ravel())
        posteriors.append([bsc_split_update(posts[k // 2], splits[k // 2], int(k % 2), epsilon) for k in keys])
    return PMRun(seed, n, epsilon, encoder, points, x, y, u, med, groups, posteriors)


def quantizer_cell(w, i, R):
    """Fixed-point ends of the cell ``[k h, (k+1) h)`` (clipped to 1) holding ``w``, ``h = 2^{-iR}``."""
    num = to_fixed(w)
    H = 2.0 ** (PREC - i * R)
    k = math.floor(num / H)
    return int(k * H), min(int((k + 1) * H), ONE)


def achievability_mass(run, R, trial=None):
    """Posterior mass of the quantizer cell holding the true message, for ``i = 1..n``.

    Returns ``[trial, i]`` masses, or one row when ``trial`` is given.
    """
    if R <= 0:
        raise ParameterError("rate must be positive")
    rows = range(run.trials) if trial is None else [trial]
    out = np.empty((len(rows), run.n))
    for r, t in enumerate(rows):
        w = run.points[t]
        for i in range(1, run.n + 1):
            a, b = quantizer_cell(w, i, R)
            post = run.posterior(t, i)
            out[r, i - 1] = max(post._cdf_fixed(b) - post._cdf_fixed(a), 0.0)
    return out if trial is None else out[0]


def write_transcript(run, path, R=None):
    """CSV with columns trial, i, x, y, median, cell_mass (blank without a rate)."""
    masses = achievability_mass(run, R) if R is not None else None
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["trial", "i", "x", "y", "median", "cell_mass"])
        for t in range(run.trials):
            for i in range(run.n):
                cm = "" if masses is None else repr(float(masses[t, i]))
                wr.writerow([t, i + 1, int(run.x[t, i]), int(run.y[t, i]), repr(float(run.median[t, i])), cm])


@dataclass
class TrendReport:
    first: int
    medians: list
    checkpoints: list
    checkpoints_increase: bool
    spearman: float
    min_spearman: float
    passed: bool

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def achievability_trend(masses, first=20, last=None, checkpoint_step=10, min_spearman=0.95):
    """Median cell mass over ``i = first..last``: strictly increasing checkpoints and rank correlation with ``i``.

    Consecutive medians need not increase, because the quantizer cells at
    successive ``i`` are not nested.
    """
    masses = np.asarray(masses, dtype=float)
    last = masses.shape[1] if last is None else last
    if not 1 <= first < last <= masses.shape[1]:
        raise ParameterError(f"need 1 <= first < last <= {masses.shape[1]}, got {first}, {last}")
    med = np.median(masses[:, first - 1 : last], axis=0)
    cps = med[::checkpoint_step]
    # a flat sequence has no rank correlation; count it as no trend
    rho = 0.0 if np.ptp(med) == 0 else float(sp_stats.spearmanr(np.arange(first, last + 1), med).statistic)
    inc = bool(np.all(np.diff(cps) > 0))
    return TrendReport(first, med.tolist(), cps.tolist(), inc, rho, min_spearman, inc and rho >= min_spearman)


@dataclass
class InvarianceReport:
    epsilon: float
    trials: int
    steps: tuple
    ks_p: dict
    input_p: dict
    pair_p: dict
    threshold: float
    passed: bool

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def pm_invariance_checks(epsilon, n, trials, seed, steps=(2, 5, 10), encoder="pm", threshold=0.01):
    """Uniformity of ``F_{W|Y^{i-1}}(W)``, Bernoulli(1/2) inputs and independent consecutive outputs."""
    if trials < 10_000:
        raise ParameterError(f"invariance checks need at least 10**4 trials, got {trials}")
    steps = tuple(int(s) for s in steps)
    if min(steps) < 2 or max(steps) > n:
        raise ParameterError(f"steps {steps} must lie in 2..{n}")
    run = simulate_bsc_pm(epsilon, n, trials, seed, encoder=encoder)
    ks, xin, pair = {}, {}, {}
    for i in steps:
        ks[i] = stats.ks_uniform(run.u[:, i - 1])
        xin[i] = stats.chi2_goodness_of_fit(run.x[:, i - 1], [0.5, 0.5])
        pair[i] = stats.chi2_independence(run.y[:, i - 2 : i])
    ok = all(p > threshold for d in (ks, xin, pair) for p in d.values())
    return InvarianceReport(epsilon, trials, steps, ks, xin, pair, threshold, ok)


def grid_bayes_bsc(y_seq, epsilon, atoms=10_000, encoder="pm"):
    """Reference posterior on a midpoint message grid, updated by brute-force Bayes.

    The split point is the median of the piecewise posterior, which the grid
    cannot resolve; it is recomputed from the exact recursion so only the
    Bayes step is under test.
    """
    grid = (np.arange(atoms) + 0.5) / atoms
    weights = np.full(atoms, 1.0 / atoms)
    exact = PiecewisePosterior.uniform()
    for y in y_seq:
        m = exact.median() if encoder == "pm" else 0.5
        xs = grid >= m
        weights = weights * np.where(xs == bool(y), 1 - epsilon, epsilon)
        weights /= weights.sum()
        exact = bsc_split_update(exact, m, y, epsilon)
    return grid, weights


# --------------------------------------------------------------------------
# AGN channel on a message grid


@dataclass
class AGNRun:
    power: float
    noise_var: float
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray


def simulate_agn_pm(power, noise_var, n, trials, seed, atoms=2**14):
    """Posterior matching over ``Y = X + V`` with Gaussian shaping ``X = sqrt(P) Phi^{-1}(U)``.

    The message is one of ``atoms`` equiprobable midpoints; ``U`` is the
    mid-CDF of the grid posterior at the true atom.
    """
    if power <= 0 or noise_var <= 0:
        raise ParameterError("power and noise variance must be positive")
    sp, sv = math.sqrt(power), math.sqrt(noise_var)
    draws = _rng.per_trial(seed, trials, lambda g: np.concatenate([[g.random()], g.standard_normal(n)]))
    idx = np.minimum((draws[:, 0] * atoms).astype(np.intp), atoms - 1)
    noise = draws[:, 1:] * sv
    x = np.zeros((trials, n))
    y = np.zeros((trials, n))
    u = np.zeros((trials, n))
    for t in range(trials):
        post = np.full(atoms, 1.0 / atoms)
        for i in range(n):
            cum = np.cumsum(post)
            mid = cum - post / 2
            mid = np.clip(mid, 1e-15, 1 - 1e-15)
            xs = sp * special.ndtri(mid)
            u[t, i] = mid[idx[t]]
            x[t, i] = xs[idx[t]]
            y[t, i] = x[t, i] + noise[t, i]
            logl = -((y[t, i] - xs) ** 2) / (2 * noise_var)
            post = post * np.exp(logl - logl.max())
            post /= post.sum()
    return AGNRun(power, noise_var, x, y, u)
