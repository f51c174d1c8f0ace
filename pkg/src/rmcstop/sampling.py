"""Deterministic random streams and space-filling point generators.

Randomness is organized around counter-based Philox streams keyed by a
(seed, substream) pair, so that every consumer of noise can be handed its
own statistically independent stream and results never depend on the order
in which work is scheduled.  The quasi-random generators (Sobol, Halton)
are fully deterministic and take no stream at all.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.stats import qmc

__all__ = [
    "RandomStream",
    "standard_normals",
    "sobol",
    "halton",
    "lhs",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

MAX_QMC_DIM = 20

# first 20 primes, the Halton bases
_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


def _splitmix64(z: int) -> int:
    """One round of the splitmix64 finalizer (a 64-bit bijection)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _mix(state: int, tag) -> int:
    if isinstance(tag, str):
        tag = int.from_bytes(tag.encode("utf8")[:8].ljust(8, b"\0"), "little")
    return _splitmix64((state ^ (int(tag) & _MASK64)) & _MASK64)


@dataclass(frozen=True)
class RandomStream:
    """A reproducible, splittable source of randomness.

    Two streams with the same ``(seed, sub)`` produce bit-identical output;
    streams with different substream ids are statistically independent.
    ``child`` derives substreams deterministically from integer or string
    tags, e.g. ``stream.child(k, "paths")`` for the step-k path block.
    """

    seed: int
    sub: int = 0

    def child(self, *tags) -> "RandomStream":
        sub = self.sub
        for tag in tags:
            sub = _mix(sub, tag)
        return RandomStream(self.seed, sub)

    def generator(self) -> Generator:
        return Generator(Philox(key=[self.seed & _MASK64, self.sub & _MASK64]))

    def normals(self, n: int) -> np.ndarray:
        return self.generator().standard_normal(int(n))

    def normal_matrix(self, n: int, d: int) -> np.ndarray:
        return self.generator().standard_normal((int(n), int(d)))

    def uniforms(self, n: int) -> np.ndarray:
        return self.generator().random(int(n))

    def permutation(self, n: int) -> np.ndarray:
        return self.generator().permutation(int(n))


def standard_normals(stream: RandomStream, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. standard normals from ``stream`` (deterministic)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return stream.normals(n)


def _gray_inverse(idx: np.ndarray) -> np.ndarray:
    """Invert the Gray code g(m) = m ^ (m >> 1), vectorized on uint64."""
    n = idx.astype(np.uint64).copy()
    shift = np.uint64(1)
    while True:
        shifted = n >> shift
        if not shifted.any():
            break
        n ^= shifted
        shift = np.uint64(int(shift) * 2)
    return n


def sobol(n: int, d: int) -> np.ndarray:
    """First ``n`` points of the d-dimensional Sobol sequence in [0,1)^d.

    Points are returned in natural (radical-inverse) index order starting at
    index 1, i.e. the all-zeros origin is skipped.  Direction numbers are the
    standard Joe-Kuo table.
    """
    if not 1 <= d <= MAX_QMC_DIM:
        raise ValueError(f"sobol supports 1 <= d <= {MAX_QMC_DIM}, got {d}")
    if n < 1:
        raise ValueError("n must be >= 1")
    m = 1
    while m < n + 1:
        m *= 2
    with warnings.catch_warnings():
        # power-of-two balance warning is irrelevant here: we re-index below
        warnings.simplefilter("ignore")
        pts = qmc.Sobol(d, scramble=False).random(m)
    order = _gray_inverse(np.arange(1, n + 1))
    return pts[order]


def halton(n: int, d: int) -> np.ndarray:
    """First ``n`` Halton points (radical inverse in the first d primes).

    Indexing starts at 1 so every coordinate lies strictly inside (0, 1).
    """
    if not 1 <= d <= MAX_QMC_DIM:
        raise ValueError(f"halton supports 1 <= d <= {MAX_QMC_DIM}, got {d}")
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty((n, d))
    idx = np.arange(1, n + 1, dtype=np.int64)
    for j in range(d):
        base = _PRIMES[j]
        x = np.zeros(n)
        denom = np.ones(n) * base
        rem = idx.copy()
        while rem.any():
            x += (rem % base) / denom
            rem //= base
            denom *= base
        out[:, j] = x
    return out


def lhs(n: int, d: int, stream: RandomStream) -> np.ndarray:
    """Latin hypercube sample: one point per row/column stratum.

    Coordinate j of the i-th point is (perm_j(i) + u)/n with u ~ U(0,1),
    so each 1-D marginal has exactly one point in each interval [k/n,(k+1)/n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = stream.generator()
    out = np.empty((n, d))
    for j in range(d):
        perm = gen.permutation(n)
        u = gen.random(n)
        out[:, j] = (perm + u) / n
    return out
