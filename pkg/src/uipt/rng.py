from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RandomSource:
    """A (seed, stream) pair.  Each stream is an independent child of the seed."""

    seed: int
    stream: int = 0

    def generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, i):
        # nested streams for per-replica draws inside a stream
        return RandomSource(self.seed, self.stream * 1_000_003 + 1 + int(i))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomSource):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def replica_sources(seed, replicas, offset=0):
    return [RandomSource(int(seed), offset + i) for i in range(replicas)]
