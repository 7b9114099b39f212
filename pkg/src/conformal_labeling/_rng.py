"""Deterministic random streams.

Two kinds of streams are used. Tie-break uniforms come from a counter-based
Philox generator so that the draw for test index ``j`` depends only on
``(seed, j)``. Everything else (synthetic data, bootstrap resamples) uses
``numpy.random.Generator`` objects spawned from a ``SeedSequence`` keyed by
the master seed and a tuple of integer labels.
"""

import numpy as np

from .errors import ValidationError

SEED_MASK = (1 << 64) - 1

# Philox key word reserved for tie-break uniforms.
_TIE_STREAM = 0x7469655F62726B00

# Philox emits four 64-bit words per counter increment; word 0 of block j is U_j.
_WORDS_PER_BLOCK = 4


def check_seed(seed):
    """Return ``seed`` as a Python int in [0, 2**64), or raise."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MASK:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def tie_uniforms(seed, m):
    """Uniform(0, 1) draws for test indices ``0..m-1``.

    The value at index ``j`` is a function of ``(seed, j)`` alone, so any
    prefix of a longer batch reproduces the same draws. Values are mapped
    to the open interval (0, 1) by centering each 53-bit lattice point.
    """
    gen = np.random.Philox(key=np.array([seed, _TIE_STREAM], dtype=np.uint64))
    raw = gen.random_raw(_WORDS_PER_BLOCK * m)[::_WORDS_PER_BLOCK]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def generator(seed, *labels):
    """A ``numpy.random.Generator`` keyed by ``seed`` and integer ``labels``."""
    return np.random.default_rng(np.random.SeedSequence([seed, *labels]))


def derive_seed(seed, *labels):
    """A 64-bit child seed, stable for a given ``(seed, labels)``."""
    state = np.random.SeedSequence([seed, *labels]).generate_state(1, dtype=np.uint64)
    return int(state[0])
