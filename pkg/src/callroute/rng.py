"""Deterministic, splittable random streams.

Every stochastic component draws from an :class:`RngStream` derived from a
``(master_seed, stream_id)`` pair, so any episode (or any policy's action
noise) can be reproduced in isolation. Stream derivation hashes the pair
through numpy's SeedSequence, giving statistically independent PCG64 streams.

Stream-id layout: episode simulation streams use the episode index directly;
the offsets below keep evaluation action noise and trainer internals from
ever colliding with them.
"""

from __future__ import annotations

import math
import secrets

import numpy as np

from .errors import ConfigError

_MASK64 = (1 << 64) - 1
_BUFFER = 8192

# Reserved stream-id ranges (episode ids stay far below 2**48).
POLICY_EVAL_STREAM_OFFSET = 1 << 48
PPO_ACTION_STREAM_ID = 1 << 62
PPO_SHUFFLE_STREAM_ID = (1 << 62) + 1


def fresh_master_seed() -> int:
    """Entropy-based master seed for unseeded runs."""
    return secrets.randbits(63)


def exponential_from_uniform(u: float, mean: float) -> float:
    """Inverse-CDF exponential draw: ``-mean * ln(1 - u)`` for ``u`` in [0, 1)."""
    return -mean * math.log1p(-u)


class RngStream:
    """Sequential uniform/exponential sampler over a private PCG64 generator.

    Single-owner mutable state: one stream must not be shared across threads.
    Uniforms are drawn in blocks for speed; the delivered sequence is
    identical to drawing one at a time.
    """

    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, generator: np.random.Generator):
        self._gen = generator
        self._buf = generator.random(_BUFFER)
        self._pos = 0

    def uniform(self) -> float:
        """Next unit-uniform real in [0, 1)."""
        pos = self._pos
        if pos == _BUFFER:
            self._buf = self._gen.random(_BUFFER)
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def exponential(self, mean: float) -> float:
        """Exponential draw with the given mean; ``inf`` mean yields ``inf``
        without consuming a uniform (a disabled timer never fires)."""
        if math.isnan(mean) or mean <= 0:
            raise ConfigError(f"exponential mean must be > 0, got {mean}")
        if math.isinf(mean):
            return math.inf
        return -mean * math.log1p(-self.uniform())

    def choice_index(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self.uniform() * n)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def derive_stream(master_seed: int, stream_id: int) -> RngStream:
    """Stateless stream derivation: the same pair always yields the same
    stream, regardless of what other streams were derived before."""
    entropy = [int(master_seed) & _MASK64, int(stream_id) & _MASK64]
    seq = np.random.SeedSequence(entropy)
    return RngStream(np.random.Generator(np.random.PCG64(seq)))
