"""Input-layer weights: stored matrices or a 16-bit Xorshift stream.

The hashed variant never keeps the ``n x N`` weight matrix as model state.
Its elements are defined by streaming the generator from the seed in
row-major order and mapping each 16-bit output ``u`` to ``scale * (u/32768 - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PERIOD = 65535
SHIFTS = (7, 9, 8)


class Xorshift16:
    """16-bit Xorshift generator with shift triple (7, 9, 8).

    Each step applies ``x ^= x << 7; x ^= x >> 9; x ^= x << 8`` modulo 2**16.

    >>> Xorshift16(1).next()
    33153
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 < seed < 1 << 16:
            raise ValueError(f"xorshift seed must be a nonzero 16-bit value, got {seed}")
        self.state = seed

    def next(self) -> int:
        self.state = step(self.state)
        return self.state

    def __iter__(self):
        return self

    __next__ = next

    def clone(self) -> "Xorshift16":
        return Xorshift16(self.state)


def step(x: int) -> int:
    a, b, c = SHIFTS
    x ^= (x << a) & 0xFFFF
    x ^= x >> b
    x ^= (x << c) & 0xFFFF
    return x


@lru_cache(maxsize=1)
def _cycle():
    # cycle[k] is the state after k steps from 1; position[s] inverts it
    cycle = np.empty(PERIOD, dtype=np.int64)
    x = 1
    for k in range(PERIOD):
        cycle[k] = x
        x = step(x)
    if x != 1:
        raise AssertionError("xorshift triple does not have full period")
    position = np.full(1 << 16, -1, dtype=np.int64)
    position[cycle] = np.arange(PERIOD)
    return cycle, position


def stream(seed: int, count: int) -> np.ndarray:
    """The first ``count`` outputs of the generator started at ``seed``."""
    Xorshift16(seed)  # validates the seed
    cycle, position = _cycle()
    idx = (position[seed] + 1 + np.arange(count, dtype=np.int64)) % PERIOD
    return cycle[idx]


def to_weight(u, scale: float = 1.0):
    """Map 16-bit outputs onto ``[-scale, scale)``."""
    return scale * (np.asarray(u, dtype=np.float64) / 32768.0 - 1.0)


def virtual_alpha_element(seed: int, row: int, col: int, shape, scale: float = 1.0) -> float:
    """Element ``(row, col)`` of the hashed weight matrix with ``shape=(n, N)``."""
    n, N = shape
    if not (0 <= row < n and 0 <= col < N):
        raise IndexError(f"index ({row}, {col}) out of range for shape {shape}")
    k = row * N + col
    cycle, position = _cycle()
    Xorshift16(seed)  # rejects a zero or out of range seed
    u = cycle[(position[seed] + 1 + k) % PERIOD]
    return float(to_weight(u, scale))


@lru_cache(maxsize=8)
def _hashed_matrix(seed, n, N, scale):
    w = to_weight(stream(seed, n * N), scale).reshape(n, N)
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class HashedWeights:
    """Weights regenerated from a Xorshift16 seed on demand."""

    seed: int
    scale: float = 1.0

    def __post_init__(self):
        Xorshift16(self.seed)

    def matrix(self, n: int, N: int) -> np.ndarray:
        return _hashed_matrix(self.seed, n, N, float(self.scale))

    def element(self, row, col, n, N):
        return virtual_alpha_element(self.seed, row, col, (n, N), self.scale)

    def stored_words(self, n, N) -> int:
        return 0


@dataclass(frozen=True, eq=False)
class StoredWeights:
    """An explicit weight matrix kept in memory."""

    alpha: np.ndarray

    def matrix(self, n: int, N: int) -> np.ndarray:
        if self.alpha.shape != (n, N):
            raise ValueError(f"stored weights have shape {self.alpha.shape}, expected {(n, N)}")
        return self.alpha

    def element(self, row, col, n, N):
        return float(self.matrix(n, N)[row, col])

    def stored_words(self, n, N) -> int:
        return n * N

    @classmethod
    def random(cls, n, N, random_state=None, scale=1.0):
        rng = np.random.default_rng(random_state)
        # 32-bit random words mapped onto the same symmetric range
        u = rng.integers(0, 1 << 32, size=(n, N), dtype=np.uint64)
        return cls(scale * (u / float(1 << 31) - 1.0))

    @classmethod
    def from_hash(cls, seed, n, N, scale=1.0):
        return cls(np.array(HashedWeights(seed, scale).matrix(n, N)))
