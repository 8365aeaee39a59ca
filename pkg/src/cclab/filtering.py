"""Exact belief propagation for a Markov source seen through a memoryless channel.

An encoder map is an integer array ``emap`` with ``emap[w]`` the channel
input sent when the source is in state ``w``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EnumerationCapError, ImpossibleObservationError

DEFAULT_CAP = 10**7


def _source_Q(source):
    return source.kernel.matrix


def _channel_W(channel):
    return np.asarray(channel, dtype=float)


def as_emap(emap, source_size, input_size):
    e = np.asarray(emap)
    if e.shape != (source_size,) or not np.issubdtype(e.dtype, np.integer):
        raise DimensionError(f"encoder map must be {source_size} integers, got {e!r}")
    if e.min() < 0 or e.max() >= input_size:
        raise DimensionError(f"encoder map {e.tolist()} leaves the input alphabet of size {input_size}")
    return e


def ospu(b, source):
    """One-step prediction: push a belief through the source kernel."""
    b = np.asarray(b, dtype=float)
    Q = _source_Q(source)
    if b.shape != (Q.shape[0],):
        raise DimensionError(f"belief of size {b.shape} for a source on {Q.shape[0]} symbols")
    out = b @ Q
    return out / out.sum()


def likelihood(emap, channel):
    """``L[y, w] = P(y | emap[w])``."""
    W = _channel_W(channel)
    return W[emap].T


def output_predictive(b, emap, channel, source):
    pred = ospu(b, source)
    W = _channel_W(channel)
    e = as_emap(emap, pred.size, W.shape[0])
    return pred @ W[e]


def nlf(b, y, emap, channel, source):
    """Bayes update of the belief after observing ``y`` under encoder map ``emap``."""
    pred = ospu(b, source)
    W = _channel_W(channel)
    e = as_emap(emap, pred.size, W.shape[0])
    if not (0 <= y < W.shape[1]):
        raise DimensionError(f"output symbol {y} outside alphabet of size {W.shape[1]}")
    joint = pred * W[e, y]
    norm = joint.sum()
    if norm <= 0:
        raise ImpossibleObservationError(f"output {y} has predictive probability 0")
    return joint / norm


def belief_trajectory(y_seq, emap_seq, source, channel, initial=None):
    """``[(B_{0|-1}, B_{0|0}), (B_{1|0}, B_{1|1}), ...]``; entry 0 is the prior twice."""
    if len(y_seq) != len(emap_seq):
        raise DimensionError("need one encoder map per observation")
    b = np.asarray(source.initial.probs if initial is None else initial, dtype=float)
    out = [(b, b)]
    for y, e in zip(y_seq, emap_seq):
        pred = ospu(b, source)
        b = nlf(b, y, e, channel, source)
        out.append((pred, b))
    return out


def brute_force_posterior(y_seq, emap_seq, source, channel, j, i, cap=DEFAULT_CAP):
    """``P(W_i | Y^j = y^j)`` by summing the full joint over source paths ``w_0..w_m``."""
    if len(y_seq) != len(emap_seq):
        raise DimensionError("need one encoder map per observation")
    if j > len(y_seq):
        raise DimensionError(f"only {len(y_seq)} observations, asked to condition on {j}")
    Q = _source_Q(source)
    W = _channel_W(channel)
    m = max(i, j)
    ns = Q.shape[0]
    if ns ** (m + 1) > cap:
        raise EnumerationCapError(f"{ns}^{m + 1} source paths exceed the cap {cap}", horizon=m, cap=cap)
    joint = np.asarray(source.initial.probs, dtype=float).copy()
    for t in range(1, m + 1):
        shape = (1,) * (t - 1) + (ns, ns)
        joint = joint[..., None] * Q.reshape(shape)
        if t <= j:
            e = as_emap(emap_seq[t - 1], ns, W.shape[0])
            lik = W[e, y_seq[t - 1]]
            joint = joint * lik.reshape((1,) * t + (ns,))
    axes = tuple(a for a in range(m + 1) if a != i)
    marg = joint.sum(axis=axes)
    norm = marg.sum()
    if norm <= 0:
        raise ImpossibleObservationError("the observed outputs have probability 0")
    return marg / norm
