"""Dense float64 kernels and the seeded random number generator.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.

Randomness comes from numpy's Philox-4x64 counter-based generator, keyed
through ``SeedSequence([seed, *stream])``. Both the bit generator and the
seed hashing are specified by numpy and stable across platforms, so a seed
reproduces the same stream bit for bit. Independent streams for different
purposes (initialisation, training noise, snapshots) are obtained by
passing extra stream words.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, ShapeError

__all__ = [
    "as_matrix",
    "make_rng",
    "rng_state",
    "restore_rng",
    "matmul",
    "rand_normal",
    "pairwise_sq_dists",
]


def as_matrix(x) -> np.ndarray:
    """Coerce *x* to a contiguous 2-D float64 array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {a.ndim} dimensions")
    return a


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def rng_state(rng: np.random.Generator) -> dict:
    """JSON-serialisable snapshot of a generator's internal state."""
    state = rng.bit_generator.state

    def plain(v):
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, np.ndarray):
            return [int(x) for x in v]
        if isinstance(v, np.integer):
            return int(v)
        return v

    return plain(state)


def restore_rng(state: dict) -> np.random.Generator:
    bg = np.random.Philox()
    s = dict(state)
    s["state"] = {k: np.array(v, dtype=np.uint64) for k, v in state["state"].items()}
    s["buffer"] = np.array(state["buffer"], dtype=np.uint64)
    bg.state = s
    return np.random.Generator(bg)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def rand_normal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise InputError(f"shape must be positive, got {rows}x{cols}")
    return rng.standard_normal((rows, cols))


def pairwise_sq_dists(x) -> np.ndarray:
    """Squared Euclidean distances between all rows of *x*.

    Uses the ``|a|^2 + |b|^2 - 2ab`` expansion. The result is forced exactly
    symmetric, its diagonal exactly zero, and rounding negatives clamped to 0.
    """
    x = as_matrix(x)
    if x.shape[0] < 2:
        raise InputError(f"need at least 2 rows for pairwise distances, got {x.shape[0]}")
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d = 0.5 * (d + d.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d
