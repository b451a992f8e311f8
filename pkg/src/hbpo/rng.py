"""Counter-keyed random streams.

Every random draw in the package is addressed by an integer key tuple, e.g.
``(seed, ROLLOUT, step, query)``.  A stream is rebuilt from its key alone,
so work units can run in any order or on any worker and still see the same
numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stream tags keep unrelated consumers of the same seed apart.
DATASET = 1
ROLLOUT = 2
OUTCOME = 3
EVAL_DATASET = 4
EVAL_ROLLOUT = 5
EVAL_OUTCOME = 6


def generator(*key: int) -> np.random.Generator:
    """Return a fresh generator for ``key`` (all entries non-negative ints)."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True)
class RngState:
    """Position in a counted stream: draw ``counter`` of stream ``key``.

    Each draw uses its own generator keyed by ``(*key, counter)``, so a state
    value is enough to reproduce the draw.
    """

    key: tuple[int, ...] = (0,)
    counter: int = 0

    @classmethod
    def from_seed(cls, seed: int, *stream: int) -> RngState:
        return cls(key=(int(seed), *map(int, stream)), counter=0)

    def generator(self) -> np.random.Generator:
        return generator(*self.key, self.counter)

    def uniform(self) -> tuple[float, RngState]:
        return float(self.generator().random()), self.advance()

    def advance(self, n: int = 1) -> RngState:
        return RngState(self.key, self.counter + n)
