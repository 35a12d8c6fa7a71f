"""Counter-based random streams keyed by (seed, tag, i, j).

Every matrix entry gets its own 64-bit hash of its coordinates, so a sample is
a pure function of the seed no matter how (or in what order) entries are
generated. The mixer is the splitmix64 finalizer applied once per key word.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK64 = (1 << 64) - 1

# stream tags; distinct per use so streams never collide
TAG_ENTRY = 0x01
TAG_GOE = 0x02
TAG_LABEL = 0x03
TAG_CONDITIONED = 0x04
TAG_OU = 0x05
TAG_SPLIT = 0x06
TAG_AUX = 0x07


def _mix(x):
    x = x ^ (x >> _S30)
    x = x * _M1
    x = x ^ (x >> _S27)
    x = x * _M2
    return x ^ (x >> _S31)


def _as_u64(value):
    arr = np.asarray(value)
    if arr.dtype.kind in "iu":
        return (arr.astype(np.int64).astype(np.uint64)
                if arr.dtype.kind == "i" else arr.astype(np.uint64))
    raise TypeError(f"integer key expected, got dtype {arr.dtype}")


def seed_key(seed):
    """Reduce an arbitrary Python int seed to a uint64 key."""
    if isinstance(seed, (int, np.integer)):
        return np.uint64(int(seed) & _MASK64)
    return _as_u64(seed) & np.uint64(_MASK64)


def hash_bits(seed, tag, i, j):
    """Raw 64-bit hashes, broadcast over ``seed``, ``i`` and ``j``."""
    with np.errstate(over="ignore"):
        key = _mix(np.asarray(seed_key(seed)) * _GOLDEN + np.uint64(tag))
        key = _mix(key ^ (_as_u64(i) * _M1 + _GOLDEN))
        key = _mix(key ^ (_as_u64(j) * _M2 + _GOLDEN))
        return _mix(key + _GOLDEN)


def bits_to_uniform(bits):
    """Top 53 bits to a float in the open interval (0, 1)."""
    return ((bits >> _S11).astype(np.float64) + 0.5) * 2.0 ** -53


def bits_to_sign(bits):
    """Lowest bit to +1.0 / -1.0."""
    return np.where((bits & np.uint64(1)) == 1, -1.0, 1.0)


def uniforms(seed, tag, i, j):
    return bits_to_uniform(hash_bits(seed, tag, i, j))


def upper_indices(n):
    """Row and column index arrays of the upper triangle (diagonal included)."""
    return np.triu_indices(n)


def symmetric_from_upper(n, rows, cols, values):
    out = np.empty((n, n), dtype=np.float64)
    out[rows, cols] = values
    out[cols, rows] = values
    return out


class Stream:
    """Per-coordinate random words for a batch of (seed, i, j) keys.

    ``words(k)`` is the k-th independent 64-bit word of every key; rejection
    samplers consume successive words for the entries still pending, so each
    entry's value depends on its own key only.
    """

    def __init__(self, seed, tag, i, j):
        s, ii, jj = np.broadcast_arrays(np.asarray(seed_key(seed)), np.asarray(i), np.asarray(j))
        self.shape = s.shape
        self.seed = s.ravel()
        self.i = ii.ravel()
        self.j = jj.ravel()
        self.tag = int(tag)

    @property
    def size(self):
        return self.seed.size

    def words(self, k, idx=None):
        sel = slice(None) if idx is None else idx
        return hash_bits(self.seed[sel], self.tag + (int(k) << 8), self.i[sel], self.j[sel])

    def sub(self, a):
        """An independent stream over the same keys."""
        out = Stream.__new__(Stream)
        out.shape, out.seed, out.i, out.j = self.shape, self.seed, self.i, self.j
        out.tag = self.tag + ((int(a) + 1) << 24)
        return out

    def take(self, idx):
        """Restrict to a subset of keys (flat indices)."""
        out = Stream.__new__(Stream)
        out.seed, out.i, out.j = self.seed[idx], self.i[idx], self.j[idx]
        out.shape, out.tag = out.seed.shape, self.tag
        return out


def generator(seed, tag=TAG_AUX):
    """A numpy Generator for bulk scalar Monte Carlo, keyed like the entry streams."""
    return np.random.Generator(np.random.Philox(key=int(hash_bits(seed, tag, 0, 0))))
