"""Seeded random streams.

Every trial draws from its own PCG64 generator keyed by ``SeedSequence([seed,
trial])``, so a trial's draws do not depend on how many other trials run or
in which order. There is no module-level generator.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

GENERATOR = "numpy.random.PCG64 via SeedSequence([seed, trial])"


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def stream(seed, trial=0):
    """Generator for one ``(seed, trial)`` pair."""
    seed = _check_seed(seed)
    if trial < 0:
        raise ConfigError(f"trial index must be non-negative, got {trial}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(trial)])))


def per_trial(seed, trials, draw):
    """Stack ``draw(generator)`` over trials ``0..trials-1``."""
    return np.stack([draw(stream(seed, t)) for t in range(int(trials))])


def uniforms(seed, trials, k):
    return per_trial(seed, trials, lambda g: g.random(k))


def normals(seed, trials, k):
    return per_trial(seed, trials, lambda g: g.standard_normal(k))
