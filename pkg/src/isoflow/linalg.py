"""Small linear-algebra helpers shared by the numeric modules."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

RANK_RTOL = 1e-9


def numeric_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * max(1.0, s[0])))


def image_basis(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the column space."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    if m.size == 0:
        return np.zeros((m.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(m)
    r = int(np.sum(s > rtol * max(1.0, s[0] if len(s) else 0.0)))
    return u[:, :r]


def null_basis(m: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the kernel."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(m)
    r = int(np.sum(s > rtol * max(1.0, s[0] if len(s) else 0.0)))
    return vh[r:].conj().T


def exact_rank(rows) -> int:
    """Rank over the rationals by fraction-exact elimination."""
    a = [[Fraction(x) for x in row] for row in rows]
    if not a:
        return 0
    nrows, ncols = len(a), len(a[0])
    rank = 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, nrows) if a[r][col] != 0), None)
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        pv = a[rank][col]
        for r in range(rank + 1, nrows):
            if a[r][col] != 0:
                f = a[r][col] / pv
                a[r] = [x - f * y for x, y in zip(a[r], a[rank])]
        rank += 1
        if rank == nrows:
            break
    return rank


def exact_matmul(a, b):
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in zip(*b)] for row in a]


def rng_complex(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def fd_gradient(f, x: np.ndarray, mask: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of f (array valued) in the masked entries of x.

    Returns an array of shape f(x).shape + x.shape; holomorphic f is assumed,
    so a real step suffices.
    """
    base = np.asarray(f(x))
    grad = np.zeros(base.shape + x.shape, dtype=complex)
    for idx in zip(*np.nonzero(mask)):
        e = np.zeros_like(x, dtype=complex)
        e[idx] = h
        grad[(Ellipsis,) + tuple(idx)] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return grad
