"""Concrete sources and channels: BSC, Z channel, inverted-E, queue, trapdoor, Gauss-Markov."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DimensionError, ParameterError, TruncationError
from .probability import FiniteDist, StochKernel

TAIL_TOL = 1e-10


@dataclass(frozen=True)
class MarkovSource:
    """Time-homogeneous Markov source: ``W_0 ~ initial`` and ``W_i ~ kernel[W_{i-1}]``."""

    initial: FiniteDist
    kernel: StochKernel

    def __post_init__(self):
        init = self.initial if isinstance(self.initial, FiniteDist) else FiniteDist(self.initial)
        ker = self.kernel if isinstance(self.kernel, StochKernel) else StochKernel(self.kernel)
        if ker.input_size != ker.output_size:
            raise DimensionError(f"source kernel must be square, got {ker.input_size}x{ker.output_size}")
        if init.size != ker.input_size:
            raise DimensionError(f"initial law on {init.size} symbols, kernel on {ker.input_size}")
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "kernel", ker)

    @property
    def size(self):
        return self.initial.size

    @property
    def Q(self):
        return self.kernel.matrix

    def marginal(self, i):
        """Law of ``W_i``."""
        b = self.initial.probs
        for _ in range(i):
            b = b @ self.Q
        return b


def repetition_source(prior):
    """``W_i = W_0`` for all i."""
    prior = np.asarray(prior, dtype=float)
    return MarkovSource(prior, np.eye(prior.size))


def iid_source(law):
    law = np.asarray(law, dtype=float)
    return MarkovSource(law, np.tile(law, (law.size, 1)))


# --------------------------------------------------------------------------
# channels


def _unit(name, v, lo=0.0, hi=1.0):
    v = float(v)
    if not (lo <= v <= hi) or math.isnan(v):
        raise ParameterError(f"{name}={v!r} outside [{lo}, {hi}]")
    return v


def bsc(epsilon):
    e = _unit("epsilon", epsilon)
    return StochKernel([[1 - e, e], [e, 1 - e]])


def z_channel(mu_delta, n_inputs=2):
    """Inputs ``0..n_inputs-1``; output 1 has probability 0 from input 0 and ``mu_delta`` otherwise."""
    m = _unit("mu_delta", mu_delta)
    if n_inputs < 2:
        raise ParameterError("the Z channel needs at least two inputs")
    rows = [[1.0, 0.0]] + [[1 - m, m]] * (n_inputs - 1)
    return StochKernel(rows)


def inverted_e_channel(n_inputs=3):
    """Inputs 0, 1, 2 give output 1 with probability 0, 1/2, 1.

    Extra inputs (``n_inputs > 3``) copy the last row so that padded
    alphabets stay total.
    """
    rows = [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]
    rows += [[0.0, 1.0]] * max(0, n_inputs - 3)
    return StochKernel(rows)


def noiseless(n):
    return StochKernel(np.eye(n))


def uninformative(n_inputs, n_outputs):
    return StochKernel(np.full((n_inputs, n_outputs), 1.0 / n_outputs))


# --------------------------------------------------------------------------
# M/M/1 queue in discrete time


@dataclass(frozen=True)
class QueueModel:
    lam: float
    mu: float
    delta: float
    K: int = 60

    def __post_init__(self):
        lam, mu, delta = float(self.lam), float(self.mu), float(self.delta)
        if not (0 <= lam < mu):
            raise ParameterError(f"need 0 <= lambda < mu, got {lam}, {mu}")
        if delta <= 0 or lam * delta >= 1 or mu * delta >= 1:
            raise ParameterError(f"need lambda*delta < 1 and mu*delta < 1, got delta={delta}")
        if int(self.K) != self.K or self.K < 1:
            raise ParameterError(f"truncation K must be a positive integer, got {self.K}")
        tail = self.tail_mass()
        if tail >= TAIL_TOL:
            raise TruncationError(f"geometric tail beyond K={self.K} is {tail:.3e} >= {TAIL_TOL:.0e}")

    @property
    def rho(self):
        return self.lam / self.mu

    @property
    def slotted_ratio(self):
        """Ratio of the exact stationary law of the post-departure queue length."""
        ld, md = self.lam * self.delta, self.mu * self.delta
        return ld * (1 - md) / (md * (1 - ld)) if md > 0 else 0.0

    def tail_mass(self):
        return self.rho ** (self.K + 1)


def _geometric(ratio, K):
    k = np.arange(K + 1)
    p = (1 - ratio) * ratio**k
    return p / p.sum()


def queue_initial_law(q: QueueModel, initial="geometric"):
    """Occupancy law on ``{0..K}``.

    ``"geometric"`` is the continuous-time geometric law with ratio lambda/mu;
    ``"stationary"`` is the exact stationary law of the slotted queue seen
    right after a departure slot, which is what makes the departures an
    i.i.d. Bernoulli(lambda*delta) sequence at every delta.
    """
    if initial == "geometric":
        return _geometric(q.rho, q.K)
    if initial == "stationary":
        return _geometric(q.slotted_ratio, q.K)
    raise ParameterError(f"unknown initial law {initial!r}")


def queue_source(q: QueueModel, horizon=0, initial="geometric"):
    """Arrival counting process with the occupancy law as ``W_0``.

    The alphabet is ``{0..K+horizon}`` so that no trajectory of length
    ``horizon`` started at or below K can leave it; the top state absorbs.
    """
    size = q.K + horizon + 1
    init = np.zeros(size)
    init[: q.K + 1] = queue_initial_law(q, initial)
    ld = q.lam * q.delta
    Q = np.zeros((size, size))
    idx = np.arange(size - 1)
    Q[idx, idx] = 1 - ld
    Q[idx, idx + 1] = ld
    Q[size - 1, size - 1] = 1.0
    return MarkovSource(init, Q)


def queue_birth_death_chain(q: QueueModel, kind="birth-death"):
    """Queue-length chain on ``{0..K}`` and its stationary law.

    ``"birth-death"``: up with lambda*delta, down with mu*delta (the chain drawn
    for the queue length). ``"slotted"``: the exact pre-departure queue
    length of the slotted system, where a departure and an arrival can
    share a slot.
    """
    K, ld, md = q.K, q.lam * q.delta, q.mu * q.delta
    P = np.zeros((K + 1, K + 1))
    if kind == "birth-death":
        up = np.full(K + 1, ld)
        down = np.full(K + 1, md)
        pi = _geometric(q.rho, K)
    elif kind == "slotted":
        up = np.full(K + 1, (1 - md) * ld)
        up[0] = ld
        down = np.full(K + 1, md * (1 - ld))
        pi = np.ones(K + 1)
        pi[1:] = np.cumprod(up[:-1] / down[1:])
        pi = pi / pi.sum()
    else:
        raise ParameterError(f"unknown chain kind {kind!r}")
    up[K] = 0.0
    down[0] = 0.0
    for k in range(K + 1):
        if k < K:
            P[k, k + 1] = up[k]
        if k > 0:
            P[k, k - 1] = down[k]
        P[k, k] = 1.0 - up[k] - down[k]
    return FiniteDist(pi), StochKernel(P)


# --------------------------------------------------------------------------
# trapdoor (chemical) channel


@dataclass(frozen=True)
class TrapdoorModel:
    p: float

    def __post_init__(self):
        if not (0 < float(self.p) < 1):
            raise ParameterError(f"p must lie in (0, 1), got {self.p!r}")


@dataclass(frozen=True)
class TrapdoorLaws:
    input_law: FiniteDist
    initial_state: FiniteDist
    transition: StochKernel


def trapdoor_source_and_init(t: TrapdoorModel):
    """Ball-count chain: state = number of 1-balls in the channel before output."""
    p = t.p
    return TrapdoorLaws(
        input_law=FiniteDist([p, 1 - p]),
        initial_state=FiniteDist([p * p, 2 * p * (1 - p), (1 - p) ** 2]),
        transition=StochKernel(
            [
                [p, 1 - p, 0.0],
                [p / 2, 0.5, (1 - p) / 2],
                [0.0, p, 1 - p],
            ]
        ),
    )


def trapdoor_source(t: TrapdoorModel, horizon):
    """Cumulative count of 1-balls fed in, on ``{0..horizon+1}``.

    ``W_0`` is the ball left in the channel at time 0, distributed as the
    stationary leftover law ``(p, 1-p)``, so that ``X_1 = W_1 - Z_0`` has
    the stationary state law.
    """
    p = t.p
    size = horizon + 2
    init = np.zeros(size)
    init[:2] = [p, 1 - p]
    Q = np.zeros((size, size))
    idx = np.arange(size - 1)
    Q[idx, idx] = p
    Q[idx, idx + 1] = 1 - p
    Q[size - 1, size - 1] = 1.0
    return MarkovSource(init, Q)


# --------------------------------------------------------------------------
# Gauss-Markov source over an additive Gaussian noise channel


@dataclass(frozen=True)
class GaussianModel:
    rho: float
    sigma_m2: float
    sigma_v2: float
    power: float
    C: float = field(init=False)
    beta: float = field(init=False)
    gamma: float = field(init=False)

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ParameterError(f"|rho| must be < 1, got {self.rho}")
        for name in ("sigma_m2", "sigma_v2", "power"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        C = self.sigma_m2 / (1 - self.rho**2 * self.kappa)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", math.sqrt(self.power / C))
        object.__setattr__(self, "gamma", math.sqrt(self.power * C) / (self.power + self.sigma_v2))

    @property
    def kappa(self):
        """Fraction of the output variance that is noise."""
        return self.sigma_v2 / (self.power + self.sigma_v2)

    @property
    def contraction(self):
        return self.rho**2 * self.kappa

    @property
    def w0_var(self):
        """Variance of ``W_0`` that makes the prediction error stationary from step 1."""
        return self.sigma_m2 * self.sigma_v2 / (self.power + self.sigma_v2 * (1 - self.rho**2))

    def covariance_step(self, cov):
        return self.contraction * cov + self.sigma_m2


def gaussian_steady_state(rho, sigma_m2, sigma_v2, power, tol=1e-12):
    """Model with the closed-form error covariance, cross-checked against the recursion."""
    g = GaussianModel(rho, sigma_m2, sigma_v2, power)
    scale = max(1.0, g.C)
    if abs(g.covariance_step(g.C) - g.C) > tol * scale:
        raise ConsistencyError("closed-form covariance is not a fixed point of the recursion")
    cov = g.sigma_m2
    for _ in range(10_000):
        nxt = g.covariance_step(cov)
        if abs(nxt - cov) <= 1e-16 * scale:
            break
        cov = nxt
    if abs(cov - g.C) > tol * scale:
        raise ConsistencyError(f"recursion converges to {cov!r}, closed form gives {g.C!r}")
    return g


# --------------------------------------------------------------------------
# presets addressable by name


def channel_preset(name, **params):
    if name == "bsc":
        return bsc(params.get("epsilon", 0.1))
    if name == "zchannel":
        return z_channel(params.get("mu_delta", 0.5), params.get("n_inputs", 2))
    if name == "inverted-e":
        return inverted_e_channel()
    raise ParameterError(f"unknown channel preset {name!r}")


PRESETS = ("bsc", "zchannel", "inverted-e", "queue", "trapdoor", "gauss-markov")
