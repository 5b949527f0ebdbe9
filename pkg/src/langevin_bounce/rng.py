"""Reproducible random streams.

Every consumer derives its generator from a 64-bit master seed plus an integer
key path (block index, path index, ...).  Streams come from numpy's
counter-based ``Philox`` bit generator keyed through ``SeedSequence``, so any
stream can be rebuilt in isolation and batches can be split across workers
without changing a single output bit.
"""

import numbers

import numpy as np

from ._validation import DomainError

#: Vectorised Monte Carlo batches are cut into blocks of this many items; each
#: block owns one stream, so results never depend on the worker count.
BLOCK_SIZE = 16384


def _seed_sequence(seed, key):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise DomainError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))


def make_rng(seed, *key):
    """Philox generator for stream ``key`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, key)))


def check_random_state(random_state):
    """Turn ``None``/int/Generator into a ``Generator`` (sklearn convention)."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.Generator(np.random.Philox())
    return make_rng(random_state)


def kernel_seeds(seed, n, *key):
    """32-bit seeds for the compiled path kernels, one per path index.

    Word ``i`` does not depend on ``n``, so extending a batch keeps the seeds of
    the paths already drawn.
    """
    return _seed_sequence(seed, key).generate_state(n, dtype=np.uint32)


def block_slices(n, block_size=BLOCK_SIZE):
    """Contiguous ``(block_index, start, stop)`` triples covering ``range(n)``."""
    return [(b, start, min(start + block_size, n)) for b, start in enumerate(range(0, n, block_size))]


def derive_seed(seed, *key):
    """Independent 63-bit master seed for a sub-experiment ``key`` of ``seed``."""
    return int(_seed_sequence(seed, key).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
