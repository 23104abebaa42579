"""Deterministic RNG streams derived from one master seed.

Splitting rule: every consumer of randomness is addressed by a tuple of small
non-negative integers (its *stream key*); the stream is
``numpy.random.SeedSequence(master_seed, spawn_key=key)``.  The rule is part
of the output contract: a (master seed, key) pair fully determines the draws
regardless of scheduling, worker count, or platform.

Monte Carlo kernels use an internal PCG32 whose two 64-bit seeds come from
the same SeedSequence, so chains are reproducible without passing numpy
Generator objects into compiled code.
"""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """The numpy Generator for a stream key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=tuple(key))))


def kernel_seed(master_seed: int, *key: int) -> np.ndarray:
    """Two uint64 words seeding the compiled kernels' PCG32 for a stream key."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(key))
    return seq.generate_state(2, dtype=np.uint64)


class KernelRng:
    """PCG32 stream consumed by the compiled Monte Carlo kernels."""

    def __init__(self, seed_words):
        from clockworm import _kernels

        words = np.asarray(seed_words, dtype=np.uint64)
        if words.shape != (2,):
            raise ValueError("expected two uint64 seed words")
        self.state = _kernels.rng_init(words[0], words[1])

    @staticmethod
    def from_key(master_seed: int, *key: int) -> "KernelRng":
        return KernelRng(kernel_seed(master_seed, *key))
