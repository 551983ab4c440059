"""Numeric kernels: float64 vectors/matrices and a seeded random stream.

Vectors and matrices are plain ``numpy`` float64 arrays. Matrix-vector
products are accumulated column by column in a fixed order instead of
going through BLAS, so that two algebraically identical products
(for example a masked input against a masked weight matrix) give the
same bits.

Random stream algorithm
-----------------------
``RandomStream(seed)`` wraps numpy's PCG64 bit generator seeded through
``SeedSequence(seed)``; both have a frozen output stream across numpy
releases and platforms. Every draw consumes exactly one raw 64-bit word
``u64``:

* uniform on [0, 1):   ``(u64 >> 11) * 2**-53``
* bernoulli(p):        ``1.0 if uniform < p else 0.0``
* uniform(lo, hi):     ``lo + (hi - lo) * uniform``
* gaussian(mu, sigma): ``mu + sigma * ndtri(((u64 >> 11) + 0.5) * 2**-53)``
  (inverse normal CDF of an open-interval uniform)

``split(label)`` derives a child seed from the first 8 bytes
(little endian) of ``blake2b(f"{seed}:{label}")``. It depends only on
the parent's seed and the label, never on how far the parent has advanced.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_TWO_POW_M53 = 2.0**-53
_SEED_LIMIT = 2**64


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


def as_vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {a.shape}")
    return a


def as_mat(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}")
    return a


def hadamard(a, b) -> np.ndarray:
    a, b = as_vec(a), as_vec(b)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {len(a)} != {len(b)}")
    return a * b


def mat_hadamard(A, B) -> np.ndarray:
    A, B = as_mat(A), as_mat(B)
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} != {B.shape}")
    return A * B


def matvec(A, v) -> np.ndarray:
    """``A @ v`` with a fixed left-to-right summation over columns.

    ``v`` may also be a 2-D batch with one vector per row, in which case
    the result has one output row per input row and every row is
    bit-identical to the single-vector product.
    """
    A = as_mat(A)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] != A.shape[1]:
        raise ShapeError(f"cannot multiply {A.shape} matrix by operand of shape {v.shape}")
    if v.ndim == 1:
        out = np.zeros(A.shape[0])
        for j in range(A.shape[1]):
            out += A[:, j] * v[j]
        return out
    out = np.zeros((v.shape[0], A.shape[0]))
    for j in range(A.shape[1]):
        out += v[:, j, None] * A[None, :, j]
    return out


def l1_norm(v) -> float:
    return float(np.sum(np.abs(as_vec(v))))


def l2_norm_sq(v) -> float:
    v = as_vec(v)
    return float(np.dot(v, v))


@dataclass(frozen=True)
class DistSpec:
    """A scalar distribution: ``gaussian``, ``bernoulli`` or ``uniform``.

    Use the :meth:`gaussian`, :meth:`bernoulli` and :meth:`uniform`
    constructors; parameters are validated on construction.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (np.isfinite(a) and np.isfinite(b)):
            raise ValueError(f"{self.kind} parameters must be finite")
        if self.kind == "gaussian":
            if b < 0:
                raise ValueError(f"gaussian stddev must be >= 0, got {b}")
        elif self.kind == "bernoulli":
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"bernoulli p must lie in [0, 1], got {a}")
        elif self.kind == "uniform":
            if a > b:
                raise ValueError(f"uniform needs lo <= hi, got lo={a}, hi={b}")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def gaussian(cls, mean: float = 0.0, stddev: float = 1.0) -> "DistSpec":
        return cls("gaussian", mean, stddev)

    @classmethod
    def bernoulli(cls, p: float) -> "DistSpec":
        return cls("bernoulli", p)

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "DistSpec":
        return cls("uniform", lo, hi)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.b**2
        if self.kind == "bernoulli":
            return self.a * (1.0 - self.a)
        return (self.b - self.a) ** 2 / 12.0

    def params(self) -> dict:
        names = {"gaussian": ("mean", "stddev"), "bernoulli": ("p",), "uniform": ("lo", "hi")}
        return dict(zip(names[self.kind], (self.a, self.b)))

    def __str__(self):
        return f"{self.kind}({', '.join(repr(v) for v in self.params().values())})"


class RandomStream:
    """Single-owner deterministic random stream (see module docstring)."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < _SEED_LIMIT:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._bits = np.random.PCG64(seed)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(int(n)).astype(np.uint64, copy=False)

    def uniform01(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def split(self, label) -> "RandomStream":
        digest = hashlib.blake2b(f"{self.seed}:{label}".encode(), digest_size=8).digest()
        return RandomStream(int.from_bytes(digest, "little"))

    def clone(self) -> "RandomStream":
        """Independent copy at the current position (for shared-stream replay)."""
        return copy.deepcopy(self)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by this stream."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform01(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[k] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` draws uniform on ``{0, ..., high-1}``."""
        return np.minimum((self.uniform01(n) * high).astype(np.int64), high - 1)


def sample(dist: DistSpec, n: int, stream: RandomStream) -> np.ndarray:
    n = int(n)
    if n < 0:
        raise ValueError("sample count must be >= 0")
    if dist.kind == "bernoulli":
        return (stream.uniform01(n) < dist.a).astype(np.float64)
    if dist.kind == "uniform":
        return dist.a + (dist.b - dist.a) * stream.uniform01(n)
    mant = (stream.raw(n) >> np.uint64(11)).astype(np.float64)
    return dist.a + dist.b * ndtri((mant + 0.5) * _TWO_POW_M53)
