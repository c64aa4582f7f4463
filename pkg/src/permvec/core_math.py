"""Small numeric kernel: dense products, activations, distances and a portable RNG.

Matrices are plain 2-D ``float64`` numpy arrays in row-major order. The helpers
below only add the dimension checks and the numerically careful activation
formulas the rest of the package relies on.
"""

import numpy as np

from permvec.errors import InvalidArgumentError

__all__ = [
    "Rng",
    "matvec",
    "sigmoid",
    "sigmoid_act",
    "sigmoid_grad",
    "squared_euclidean",
    "tanh",
    "tanh_act",
    "tanh_grad",
]


def matvec(m, v):
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise InvalidArgumentError(f"cannot multiply {m.shape} matrix by vector of shape {v.shape}")
    return m @ v


def tanh(x):
    return np.tanh(x)


def tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    # exp of a non-positive number never overflows
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh_act(x):
    """Return ``(tanh(x), d tanh / dx)`` for a scalar."""
    return float(tanh(x)), float(tanh_grad(x))


def sigmoid_act(x):
    """Return ``(sigmoid(x), d sigmoid / dx)`` for a scalar."""
    return float(sigmoid(x)), float(sigmoid_grad(x))


def squared_euclidean(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InvalidArgumentError(f"length mismatch: {u.shape} vs {v.shape}")
    d = u - v
    return float(np.dot(d, d))


_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _splitmix_outputs(state, n):
    # SplitMix64 is counter based: output k depends only on state + k * gamma,
    # so a block of outputs can be produced in one vectorised pass.
    k = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(state) + k * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 generator with a fully specified output stream.

    The raw stream is the reference SplitMix64 sequence (Steele, Lea & Flood),
    so any implementation of that algorithm reproduces it bit for bit. Derived
    draws are defined as follows:

    * ``random``: top 53 bits of a word scaled by ``2**-53``.
    * ``integers``: Lemire's multiply-shift on the top 32 bits, redrawing
      rejected words from the continuing stream (unbiased).
    * ``permutation``: stable argsort of one fresh word per element.
    """

    def __init__(self, seed):
        self.seed = int(seed) & _MASK64
        self._state = self.seed

    def _words(self, n):
        out = _splitmix_outputs(self._state, n)
        self._state = (self._state + n * int(_GAMMA)) & _MASK64
        return out

    def next_u64(self):
        return int(self._words(1)[0])

    def split(self):
        """Independent child generator seeded from this stream."""
        return Rng(self.next_u64())

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = (self._words(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return float(u[0]) if size is None else u.reshape(size)

    def uniform(self, low, high, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def integers(self, low, high=None, size=None):
        """Uniform integers on ``[low, high)``."""
        if high is None:
            low, high = 0, low
        span = int(high) - int(low)
        if span <= 0 or span > (1 << 32):
            raise InvalidArgumentError(f"invalid integer range [{low}, {high})")
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n, dtype=np.int64)
        threshold = np.uint64(((1 << 32) - span) % span)
        pending = np.arange(n)
        while pending.size:
            x = self._words(pending.size) >> np.uint64(32)
            m = x * np.uint64(span)
            ok = (m & np.uint64(0xFFFFFFFF)) >= threshold
            out[pending[ok]] = (m[ok] >> np.uint64(32)).astype(np.int64)
            pending = pending[~ok]
        out += int(low)
        return int(out[0]) if size is None else out.reshape(size)

    def permutation(self, n):
        keys = self._words(int(n))
        return np.argsort(keys, kind="stable")

    def shuffle_rows(self, a):
        return np.asarray(a)[self.permutation(len(a))]
