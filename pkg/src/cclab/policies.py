"""Finite coordination policies usable by the exact enumerator.

A policy exposes ``z0`` (code of the initial decoder output), a registry
``z_values`` mapping decoder-output codes to their values, and two
vectorised callbacks evaluated on a batch of partial trajectories:

``encode(i, w, y, z)``: ``w`` holds ``w_0..w_i``, ``y`` holds ``y_1..y_{i-1}``
and ``z`` holds the codes ``z_0..z_{i-1}``; returns the inputs ``x_i``.

``decode(i, y, z)``: ``y`` holds ``y_1..y_i``; returns the codes ``z_i``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, PreconditionError
from .filtering import nlf


def unique_rows(a):
    """Unique rows of a 2-D integer array and the inverse index, with 0-column support."""
    a = np.asarray(a)
    if a.shape[1] == 0:
        return np.zeros((1, 0), dtype=a.dtype), np.zeros(a.shape[0], dtype=np.intp)
    uniq, inv = np.unique(a, axis=0, return_inverse=True)
    return uniq, inv.ravel()


class SMPolicy:
    """Stationary Markov strategy ``x = enc[w, z_prev]``, ``z = dec[z_prev, y]``."""

    def __init__(self, enc, dec, z_values=None, z0=0):
        enc = np.array(enc, dtype=np.intp)
        dec = np.array(dec, dtype=np.intp)
        if enc.ndim != 2 or dec.ndim != 2:
            raise DimensionError("enc and dec must be 2-D tables")
        nz = dec.shape[0]
        if enc.shape[1] != nz:
            raise DimensionError(f"enc covers {enc.shape[1]} decoder states, dec covers {nz}")
        if dec.min() < 0 or dec.max() >= nz:
            raise DimensionError("dec maps outside its own state alphabet")
        if not 0 <= z0 < nz:
            raise DimensionError(f"z0={z0} outside the decoder alphabet")
        enc.setflags(write=False)
        dec.setflags(write=False)
        self.enc = enc
        self.dec = dec
        self.z0 = int(z0)
        self.z_values = list(range(nz)) if z_values is None else list(z_values)
        if len(self.z_values) != nz:
            raise DimensionError("z_values must list one value per decoder state")

    @property
    def n_states(self):
        return self.dec.shape[0]

    def encode(self, i, w, y, z):
        return self.enc[w[:, i], z[:, i - 1]]

    def decode(self, i, y, z):
        return self.dec[z[:, i - 1], y[:, i - 1]]

    def decoder_injective(self):
        return all(len(set(row.tolist())) == row.size for row in self.dec)

    def decoder_inverse(self, z_prev, z):
        """The output ``y`` with ``dec[z_prev, y] == z``, or None."""
        hits = np.flatnonzero(self.dec[z_prev] == z)
        if hits.size > 1:
            raise PreconditionError(f"decoder is not injective at z_prev={z_prev}")
        return int(hits[0]) if hits.size else None


class HistoryPolicy:
    """General causal policy given by lookup tables on full histories.

    ``encoders[i-1]`` is indexed by ``(w_1..w_i, y_1..y_{i-1})`` and
    ``decoders[i-1]`` by ``(y_1..y_i)``; decoder codes index ``z_values``.
    """

    def __init__(self, encoders, decoders, n_z, z0=0, z_values=None):
        if len(encoders) != len(decoders):
            raise DimensionError("one encoder and one decoder table per stage")
        self.encoders = [np.asarray(e, dtype=np.intp) for e in encoders]
        self.decoders = [np.asarray(d, dtype=np.intp) for d in decoders]
        for i, (e, d) in enumerate(zip(self.encoders, self.decoders), start=1):
            if e.ndim != 2 * i - 1 or d.ndim != i:
                raise DimensionError(f"stage {i} tables have the wrong number of axes")
        self.z0 = int(z0)
        self.z_values = list(range(n_z)) if z_values is None else list(z_values)

    @property
    def horizon(self):
        return len(self.encoders)

    def encode(self, i, w, y, z):
        idx = tuple(w[:, 1 : i + 1].T) + tuple(y[:, : i - 1].T)
        return self.encoders[i - 1][idx]

    def decode(self, i, y, z):
        return self.decoders[i - 1][tuple(y[:, :i].T)]


class BeliefRegistry:
    """Codes for belief-valued decoder outputs, de-duplicated after rounding."""

    def __init__(self, decimals=13):
        self.decimals = decimals
        self.values = []
        self._index = {}

    def code(self, b):
        b = np.asarray(b, dtype=float)
        key = np.round(b, self.decimals).tobytes()
        c = self._index.get(key)
        if c is None:
            c = len(self.values)
            self._index[key] = c
            frozen = b.copy()
            frozen.setflags(write=False)
            self.values.append(frozen)
        return c


class BeliefPolicy:
    """Policy that tracks the exact posterior of the source state along each output history.

    Subclasses implement ``choose(i, z_prev_code, belief)`` returning the
    decoder output code ``z_i`` and the encoder map for stage ``i+1``. At
    ``i = 0`` the returned code is ignored and ``z0`` is used.
    """

    def __init__(self, source, channel, z0, z_values=None):
        self.source = source
        self.channel = np.asarray(channel, dtype=float)
        self.z0 = int(z0)
        self.z_values = [] if z_values is None else z_values
        prior = np.asarray(source.initial.probs, dtype=float)
        _, emap = self.choose(0, None, prior)
        # output history -> (posterior, z code, next encoder map)
        self._memo = {(): (prior, self.z0, np.asarray(emap))}

    def choose(self, i, z_prev, belief):
        raise NotImplementedError

    def state(self, y_hist):
        y_hist = tuple(int(v) for v in y_hist)
        hit = self._memo.get(y_hist)
        if hit is not None:
            return hit
        b_prev, z_prev, emap = self.state(y_hist[:-1])
        b = nlf(b_prev, y_hist[-1], emap, self.channel, self.source)
        z, nxt = self.choose(len(y_hist), z_prev, b)
        out = (b, int(z), np.asarray(nxt))
        self._memo[y_hist] = out
        return out

    def encode(self, i, w, y, z):
        uniq, inv = unique_rows(y[:, : i - 1])
        maps = np.stack([self.state(row)[2] for row in uniq])
        return maps[inv, w[:, i]]

    def decode(self, i, y, z):
        uniq, inv = unique_rows(y[:, :i])
        codes = np.array([self.state(row)[1] for row in uniq], dtype=np.intp)
        return codes[inv]


class FilterDecoderPolicy(BeliefPolicy):
    """Decoder outputs the exact posterior; the encoder map is ``encoder_rule(belief)``.

    ``z_values`` is a growing registry of belief vectors, ``z0`` the prior.
    """

    def __init__(self, source, channel, encoder_rule):
        self.encoder_rule = encoder_rule
        self.registry = BeliefRegistry()
        prior = np.asarray(source.initial.probs, dtype=float)
        z0 = self.registry.code(prior)
        super().__init__(source, channel, z0, z_values=self.registry.values)

    def choose(self, i, z_prev, belief):
        return self.registry.code(belief), self.encoder_rule(belief)


def identity_encoder(belief):
    return np.arange(len(belief))
