"""Seeded pseudo-random streams: splitmix64 seeding and xoshiro256**.

Every random decision in the package goes through :class:`Xoshiro256StarStar`
so that runs are bit-reproducible from a single 64-bit seed.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_DOUBLE_UNIT = 2.0 ** -53


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state):
    """Advance a splitmix64 state once.

    Returns ``(new_state, output)``.
    """
    state = (state + _GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def child_seed(seed, index):
    """Seed for independent chain ``index`` derived from a parent seed."""
    _, out = splitmix64((seed ^ index) & MASK64)
    return out


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


class Xoshiro256StarStar:
    """xoshiro256** 1.0 generator.

    The 256-bit state is filled with four consecutive splitmix64 outputs of the
    seed, which never yields the forbidden all-zero state.
    """

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed=0):
        state = check_seed(seed)
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self.s0, self.s1, self.s2, self.s3 = words

    @classmethod
    def from_state(cls, words):
        if len(words) != 4 or not any(words):
            raise ValueError("state must be four 64-bit words, not all zero")
        rng = cls.__new__(cls)
        rng.s0, rng.s1, rng.s2, rng.s3 = (w & MASK64 for w in words)
        return rng

    @property
    def state(self):
        return (self.s0, self.s1, self.s2, self.s3)

    def next_u64(self):
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self):
        """Uniform double in [0, 1) from the top 53 bits of one output."""
        return (self.next_u64() >> 11) * _DOUBLE_UNIT


def categorical(u, weights):
    """Inverse-CDF draw over unnormalized ``weights`` in their given order.

    Returns the first index ``i`` with ``u * total < w[0] + ... + w[i]``.
    Zero-weight entries are never returned. Raises ``ValueError`` when the
    total mass is zero.
    """
    total = 0.0
    for w in weights:
        total += w
    if not total > 0.0:
        raise ValueError("categorical weights have zero total mass")
    target = u * total
    acc = 0.0
    last = -1
    for i, w in enumerate(weights):
        if w > 0.0:
            acc += w
            last = i
            if target < acc:
                return i
    return last
