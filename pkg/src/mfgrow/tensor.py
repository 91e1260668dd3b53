"""Dense float64 substrate: seeded counter-based RNG, distributions, and
matrix/vector products with a pinned summation order.

Everything downstream works in 64-bit floats. ``matvec`` and ``matmul``
accumulate strictly in ascending inner-index order, so their results are
bit-identical to a naive triple loop; they are the reference kernels for
oracle-style tests and small reconstruction work. Hot training paths use
BLAS batched products (run-to-run deterministic on a fixed platform) and
are cross-checked against these kernels in the test suite.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

# Type aliases: a Matrix is a 2-d float64 ndarray (row-major), a Vector a
# 1-d float64 ndarray.
Matrix = np.ndarray
Vector = np.ndarray


def as_f64(data) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(data, dtype=np.float64)


class Rng:
    """Deterministic counter-based random source (Philox).

    Substreams are keyed by ``(seed, label)``; draws from one substream
    never depend on how many values were taken from another, so per-weight
    streams are independent of iteration order.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed

    def generator(self) -> np.random.Generator:
        """Root stream (substream 0)."""
        return self.substream(0)

    def substream(self, label) -> np.random.Generator:
        """Independent stream for an integer or string label."""
        if isinstance(label, str):
            digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
            key = int.from_bytes(digest, "little")
        else:
            key = int(label)
            if not 0 <= key < 2**64:
                raise ParameterError(f"stream id must fit in 64 bits, got {key}")
        return np.random.Generator(np.random.Philox(key=[self.seed, key]))


@dataclass(frozen=True)
class DistributionSpec:
    """One of uniform(a, b), gaussian(mean, std), constant(c)."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind == "uniform":
            if self.b < self.a:
                raise ParameterError(f"uniform upper bound {self.b} < lower bound {self.a}")
        elif self.kind == "gaussian":
            if self.b < 0:
                raise ParameterError(f"gaussian std must be >= 0, got {self.b}")
        elif self.kind != "constant":
            raise ParameterError(f"unknown distribution kind {self.kind!r}")

    def draw(self, gen: np.random.Generator, n: int) -> Vector:
        if n < 0:
            raise ParameterError(f"sample count must be >= 0, got {n}")
        if self.kind == "uniform":
            return gen.uniform(self.a, self.b, size=n)
        if self.kind == "gaussian":
            return gen.normal(self.a, self.b, size=n)
        return np.full(n, self.a, dtype=np.float64)


def uniform(a: float, b: float) -> DistributionSpec:
    return DistributionSpec("uniform", float(a), float(b))


def gaussian(mean: float, std: float) -> DistributionSpec:
    return DistributionSpec("gaussian", float(mean), float(std))


def constant(c: float) -> DistributionSpec:
    return DistributionSpec("constant", float(c))


def sample(rng, dist: DistributionSpec, n: int) -> Vector:
    """Draw ``n`` values from ``dist`` using an Rng or a Generator."""
    gen = rng.generator() if isinstance(rng, Rng) else rng
    return dist.draw(gen, n)


def matvec(m: Matrix, x: Vector) -> Vector:
    """m @ x with strictly ascending-index accumulation.

    Each output entry is built by adding terms j = 0, 1, ... in order, so
    the result matches a scalar triple loop bit for bit.
    """
    m = np.asarray(m, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or x.ndim != 1:
        raise ShapeError(f"matvec expects a matrix and a vector, got ndim {m.ndim} and {x.ndim}")
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: matrix is {m.shape[0]}x{m.shape[1]}, vector has length {x.shape[0]}")
    out = np.zeros(m.shape[0], dtype=np.float64)
    for j in range(m.shape[1]):
        out += m[:, j] * x[j]
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """a @ b with strictly ascending-index accumulation over the shared axis."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects two matrices, got ndim {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: left is {a.shape[0]}x{a.shape[1]}, right is {b.shape[0]}x{b.shape[1]}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for j in range(a.shape[1]):
        out += a[:, j : j + 1] * b[j, :]
    return out


def pearson_abs(a: Vector, b: Vector) -> float:
    """|Pearson r|, defined as 0.0 when either argument is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"pearson_abs: shapes {a.shape} and {b.shape} do not match")
    da = a - a.mean()
    db = b - b.mean()
    na = math.sqrt(float(da @ da))
    nb = math.sqrt(float(db @ db))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return abs(float(da @ db) / (na * nb))
