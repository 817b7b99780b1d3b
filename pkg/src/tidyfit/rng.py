"""Portable pseudo-random streams.

xoshiro256** seeded through splitmix64, with Lemire's bounded-rejection
method for integer ranges. Everything is done on Python ints so draws are
bit-identical on every platform.
"""

import math

MASK64 = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state):
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed, *salt):
    """Mix extra integers into a seed, for independent sub-streams."""
    state = seed & MASK64
    for s in salt:
        state, out = splitmix64(state ^ (s & MASK64))
        state = out
    return state


class Xoshiro256:
    """xoshiro256** generator.

    >>> rng = Xoshiro256(2014)
    >>> 0 <= rng.bounded(10) < 10
    True
    """

    def __init__(self, seed):
        sm = seed & MASK64
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    @classmethod
    def from_state(cls, state):
        rng = cls.__new__(cls)
        rng._s = [int(v) & MASK64 for v in state]
        return rng

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def bounded(self, n):
        """Uniform integer in ``[0, n)`` (Lemire, nearly divisionless)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        m = self.next_u64() * n
        low = m & MASK64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next_u64() * n
                low = m & MASK64
        return m >> 64

    def integers(self, n, size):
        return [self.bounded(n) for _ in range(size)]

    def uniform(self):
        """Uniform double in ``(0, 1]``; never zero so ``log`` is safe."""
        return ((self.next_u64() >> 11) + 1) * (1.0 / (1 << 53))

    def normals(self, size):
        """Standard normal draws by the Box-Muller transform, pairwise."""
        out = []
        while len(out) < size:
            u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            theta = 2.0 * math.pi * u2
            out.append(r * math.cos(theta))
            out.append(r * math.sin(theta))
        return out[:size]

    def sample(self, n, k):
        """``k`` distinct indices from ``range(n)`` by partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} without replacement")
        pool = list(range(n))
        for i in range(k):
            j = i + self.bounded(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
