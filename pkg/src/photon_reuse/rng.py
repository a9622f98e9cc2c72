"""Counter-based random numbers keyed by (seed, stream, epoch, counter, purpose).

Every draw is a pure function of its key, so results do not depend on worker
count or processing order. The hash works on 32-bit words held in int64; all
intermediate products stay below 2**63, which keeps the numba and Python
paths bit-identical.
"""

from dataclasses import dataclass

import numpy as np

from ._jit import kernel

MASK32 = 0xFFFFFFFF

# purpose tags
EMIT = 1
BOUNCE = 2
PRUNE = 3
DM_TARGET = 4
VERIFY = 5


@kernel
def hash32(x):
    x = x & 0xFFFFFFFF
    x ^= x >> 16
    x = (x * 0x21F0AAAD) & 0xFFFFFFFF
    x ^= x >> 15
    x = (x * 0x735A2D97) & 0xFFFFFFFF
    x ^= x >> 15
    return x


@kernel
def _key_hash(seed, stream, epoch, counter, purpose, dim):
    h = hash32(seed & 0xFFFFFFFF)
    h = hash32(h ^ ((seed >> 32) & 0xFFFFFFFF))
    h = hash32(h ^ (stream & 0xFFFFFFFF))
    h = hash32(h ^ ((stream >> 32) & 0xFFFFFFFF))
    h = hash32(h ^ (epoch & 0xFFFFFFFF))
    h = hash32(h ^ (counter & 0xFFFFFFFF))
    h = hash32(h ^ ((purpose << 8) | (dim & 0xFF)))
    return h


@kernel
def uniform(seed, stream, epoch, counter, purpose, dim):
    """Uniform double in [0, 1) with 53 random bits."""
    h1 = _key_hash(seed, stream, epoch, counter, purpose, dim)
    h2 = hash32(h1 ^ 0x5BD1E995)
    return ((h1 << 21) | (h2 >> 11)) * (1.0 / 9007199254740992.0)


@kernel
def _uniform_block(seed, streams, epoch, counter, purpose, ndim, out):
    for i in range(streams.shape[0]):
        for d in range(ndim):
            out[i, d] = uniform(seed, streams[i], epoch, counter, purpose, d)


@dataclass(frozen=True)
class RandomStream:
    """Python-side handle over the keyed generator.

    ``epoch`` and ``counter`` default to zero; tests and tools use ``uniform``
    to draw a block of numbers for a range of stream ids.
    """

    seed: int
    purpose: int = BOUNCE
    epoch: int = 0
    counter: int = 0

    def uniform(self, n, ndim=1, start=0):
        streams = np.arange(start, start + n, dtype=np.int64)
        out = np.empty((n, ndim))
        _uniform_block(int(self.seed), streams, int(self.epoch), int(self.counter),
                       int(self.purpose), ndim, out)
        return out if ndim > 1 else out[:, 0]

    def with_counter(self, counter):
        return RandomStream(self.seed, self.purpose, self.epoch, counter)
