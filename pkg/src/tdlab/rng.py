"""xoshiro256** generator with splitmix64 seeding.

The generator core is compiled with numba; a single stream produces ~10^8
doubles per second, which keeps seeded experiment runs dominated by the
learner arithmetic rather than by sampling.
"""

from __future__ import annotations

import numba
import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for the 64-bit input ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _fill_u64(state, out):
    s0 = state[0]
    s1 = state[1]
    s2 = state[2]
    s3 = state[3]
    for i in range(out.size):
        out[i] = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3


class Xoshiro256:
    """Seedable xoshiro256** stream.

    The four state words are filled from successive splitmix64 outputs of
    ``seed``, as recommended by the generator's authors. Instances are
    single-owner mutable state; give each worker its own.
    """

    def __init__(self, seed: int):
        words = [splitmix64((seed + i * 0x9E3779B97F4A7C15) & _MASK64) for i in range(4)]
        self.seed = seed
        self._state = np.array(words, dtype=np.uint64)

    @classmethod
    def from_state(cls, words) -> "Xoshiro256":
        rng = cls.__new__(cls)
        rng.seed = None
        rng._state = np.array(words, dtype=np.uint64)
        return rng

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(int(w) for w in self._state)

    def next_u64(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        _fill_u64(self._state, out)
        return out

    def random(self, count: int | None = None):
        """Uniform doubles in [0, 1) built from the top 53 bits."""
        n = 1 if count is None else count
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if count is None else u


def seed_for_run(global_seed: int, run_index: int) -> int:
    return splitmix64((global_seed ^ run_index) & _MASK64)
