"""Adjoint orbits as Jordan data, markings, legs and the QP/PQ duality."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .kacmoody import is_exact
from .linalg import exact_matmul, exact_rank, image_basis, numeric_rank

EIG_TOL = 1e-10


class OrbitError(ValueError):
    pass


def same_value(a, b, tol: float = EIG_TOL) -> bool:
    if is_exact(a) and is_exact(b):
        return a == b
    a, b = complex(a), complex(b)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def _sort_key(x):
    z = complex(x)
    return (z.real, z.imag)


def _clean(x):
    if is_exact(x):
        x = Fraction(x)
        return int(x) if x.denominator == 1 else x
    z = complex(x)
    return z.real if z.imag == 0 else z


@dataclass(frozen=True)
class JordanData:
    """Eigenvalue -> partition (block sizes, weakly decreasing)."""

    blocks: tuple[tuple[object, tuple[int, ...]], ...]

    def __init__(self, blocks: Mapping | Iterable = ()):
        items = blocks.items() if isinstance(blocks, Mapping) else blocks
        merged: list[tuple[object, list[int]]] = []
        for value, parts in items:
            parts = [int(p) for p in parts]
            if any(p <= 0 for p in parts):
                raise OrbitError("partition parts must be positive")
            for entry in merged:
                if same_value(entry[0], value):
                    entry[1].extend(parts)
                    break
            else:
                merged.append((_clean(value), parts))
        canon = tuple(
            (v, tuple(sorted(p, reverse=True)))
            for v, p in sorted(merged, key=lambda e: _sort_key(e[0]))
            if p
        )
        object.__setattr__(self, "blocks", canon)

    @property
    def n(self) -> int:
        return sum(sum(p) for _, p in self.blocks)

    @property
    def eigenvalues(self) -> tuple:
        return tuple(v for v, _ in self.blocks)

    def partition(self, value) -> tuple[int, ...]:
        for v, p in self.blocks:
            if same_value(v, value):
                return p
        return ()

    def shift(self, c) -> "JordanData":
        return JordanData([(v + c, p) for v, p in self.blocks])

    def negate(self) -> "JordanData":
        return JordanData([(-v, p) for v, p in self.blocks])

    def equals(self, other: "JordanData", tol: float = EIG_TOL) -> bool:
        if len(self.blocks) != len(other.blocks):
            return False
        return all(other.partition(v) == p and any(same_value(v, w, tol) for w in other.eigenvalues) for v, p in self.blocks)

    def matrix(self) -> np.ndarray:
        """Upper-triangular Jordan normal form."""
        n = self.n
        m = np.zeros((n, n), dtype=complex)
        k = 0
        for v, parts in self.blocks:
            for size in parts:
                for r in range(size):
                    m[k + r, k + r] = complex(v)
                    if r + 1 < size:
                        m[k + r, k + r + 1] = 1.0
                k += size
        return m

    def minimal_marking(self) -> "Marking":
        """Distinct eigenvalues in stored order, each repeated by its largest block."""
        return Marking(tuple(v for v, p in self.blocks for _ in range(p[0])))

    def rank_after(self, counts: Mapping) -> int:
        """rank of prod (A - s)^{counts[s]} computed blockwise."""
        total = 0
        for v, parts in self.blocks:
            m = next((c for s, c in counts.items() if same_value(s, v)), 0)
            total += sum(max(p - m, 0) for p in parts)
        return total

    def to_json(self):
        from .problem import encode_number

        return [{"value": encode_number(v), "partition": list(p)} for v, p in self.blocks]


@dataclass(frozen=True)
class Marking:
    """Ordered roots (xi_1, ..., xi_w) of an annihilating polynomial."""

    xis: tuple

    def __init__(self, xis: Iterable):
        object.__setattr__(self, "xis", tuple(_clean(x) for x in xis))

    @property
    def length(self) -> int:
        return len(self.xis)

    @property
    def special(self) -> bool:
        return bool(self.xis) and same_value(self.xis[0], 0)

    def annihilates(self, orbit: JordanData) -> bool:
        return orbit.rank_after(self._counts(len(self.xis))) == 0

    def is_minimal(self, orbit: JordanData) -> bool:
        degree = sum(p[0] for _, p in orbit.blocks)
        return self.annihilates(orbit) and len(self.xis) == degree

    def shift(self, c) -> "Marking":
        return Marking(x + c for x in self.xis)

    def swap(self, m: int) -> "Marking":
        """Exchange entries m and m+1 (1-based, as for leg node m)."""
        xs = list(self.xis)
        xs[m - 1], xs[m] = xs[m], xs[m - 1]
        return Marking(xs)

    def _counts(self, upto: int) -> dict:
        counts: list[list] = []
        for x in self.xis[:upto]:
            for entry in counts:
                if same_value(entry[0], x):
                    entry[1] += 1
                    break
            else:
                counts.append([x, 1])
        return {k: c for k, c in counts}


def marking_to_lambda_d(orbit: JordanData, marking: Marking) -> tuple[tuple, tuple[int, ...]]:
    """Leg parameters and dimensions of a marked orbit.

    lam_1 = xi_1, lam_i = xi_i - xi_{i-1}; d_i = rank of (A-xi_1)...(A-xi_{i-1}).
    """
    if not marking.annihilates(orbit):
        raise OrbitError("invalid-marking: marking does not annihilate the orbit")
    xs = marking.xis
    lam = tuple(_clean(xs[0] if i == 0 else xs[i] - xs[i - 1]) for i in range(len(xs)))
    dims = tuple(orbit.rank_after(marking._counts(i)) for i in range(len(xs)))
    return lam, dims


@dataclass
class LegRealization:
    """Chain V_1 -> V_2 -> ... with p_i surjective, q_i injective, endpoint Lambda."""

    Lambda: np.ndarray
    ps: list[np.ndarray]
    qs: list[np.ndarray]
    lam: tuple
    dims: tuple[int, ...]

    def residuals(self) -> list[float]:
        """Norms of every moment-map equation in the chain."""
        out = []
        lam = [complex(x) for x in self.lam]
        w = len(lam)
        if w == 1:
            out.append(np.linalg.norm(self.Lambda - lam[0] * np.eye(len(self.Lambda))))
            return out
        out.append(np.linalg.norm(self.Lambda - (self.qs[0] @ self.ps[0] + lam[0] * np.eye(self.dims[0]))))
        for i in range(1, w - 1):
            lhs = self.ps[i - 1] @ self.qs[i - 1]
            rhs = self.qs[i] @ self.ps[i] + lam[i] * np.eye(self.dims[i])
            out.append(np.linalg.norm(lhs - rhs))
        last = self.ps[-1] @ self.qs[-1]
        out.append(np.linalg.norm(last - lam[-1] * np.eye(self.dims[-1])))
        return out


def realize_leg(orbit: JordanData, marking: Marking, rng: np.random.Generator | None = None) -> LegRealization:
    """Explicit leg representation whose endpoint lies in ``orbit``.

    V_{i+1} is the image of (Lambda - xi_i) on V_i, p_i that map and q_i the
    inclusion.  With ``rng`` the Jordan form is conjugated by a random matrix.
    """
    lam, dims = marking_to_lambda_d(orbit, marking)
    big = orbit.matrix()
    if rng is not None and orbit.n:
        s = rng.standard_normal((orbit.n, orbit.n)) + 1j * rng.standard_normal((orbit.n, orbit.n))
        big = s @ big @ np.linalg.inv(s)
    current = big
    ps, qs = [], []
    for i in range(len(marking.xis) - 1):
        shifted = current - complex(marking.xis[i]) * np.eye(len(current))
        basis = image_basis(shifted)
        if basis.shape[1] != dims[i + 1]:
            raise OrbitError("numerical rank disagrees with the Jordan data")
        ps.append(basis.conj().T @ shifted)
        qs.append(basis)
        current = basis.conj().T @ current @ basis
    return LegRealization(big, ps, qs, lam, dims)


def _zero_key(orbit: JordanData):
    for v, _ in orbit.blocks:
        if same_value(v, 0):
            return v
    return None


def contract_orbit(orbit: JordanData) -> JordanData:
    """Orbit of PQ from the orbit of QP (P surjective, Q injective).

    Nonzero eigenvalues keep their partitions; each zero block shrinks by one.
    """
    out = []
    for v, parts in orbit.blocks:
        if same_value(v, 0):
            parts = tuple(p - 1 for p in parts if p > 1)
        out.append((v, parts))
    return JordanData(out)


def expand_orbit(orbit: JordanData, target_dim: int) -> JordanData:
    """Inverse of contract_orbit: add a first column of length target_dim - n to the zero diagram."""
    col = target_dim - orbit.n
    zero = _zero_key(orbit)
    parts = orbit.partition(0) if zero is not None else ()
    if col < len(parts) or col < 0:
        raise OrbitError("invalid: target dimension too small to host the added column")
    new_zero = tuple(p + 1 for p in parts) + (1,) * (col - len(parts))
    out = [(v, p) for v, p in orbit.blocks if zero is None or v is not zero]
    if new_zero:
        out.append((0, new_zero))
    return JordanData(out)


def specialize_marking(marking: Marking) -> Marking:
    """(xi_1..xi_w) -> (0, -xi_1, ..., -xi_w)."""
    return Marking((0,) + tuple(-x for x in marking.xis))


def scalar_shift(orbits: Mapping, residual: Mapping, shifts: Mapping):
    """Shift each pole orbit O_i by c_i and every residual orbit by the sum of the c_i."""
    total = sum(shifts.values(), 0)
    new_orbits = {k: (o.shift(shifts[k]) if k in shifts else o) for k, o in orbits.items()}
    new_residual = {k: o.shift(total) for k, o in residual.items()}
    return new_orbits, new_residual


# --- Jordan data of explicit matrices -------------------------------------------------


def _partition_from_ranks(ranks: list[int], size: int) -> tuple[int, ...]:
    # ranks[k] = rank of (M - s)^k, ranks[0] = n
    ge = [ranks[k - 1] - ranks[k] for k in range(1, len(ranks))]  # number of blocks of size >= k
    parts = []
    for k in range(len(ge)):
        exactly = ge[k] - (ge[k + 1] if k + 1 < len(ge) else 0)
        if exactly < 0:
            raise OrbitError("inconsistent rank sequence")
        parts += [k + 1] * exactly
    if sum(parts) != size:
        raise OrbitError("rank sequence does not account for the algebraic multiplicity")
    return tuple(sorted(parts, reverse=True))


def jordan_data_exact(m) -> JordanData:
    """Jordan data of a rational matrix with rational spectrum, computed exactly."""
    import sympy

    rows = [[Fraction(x) for x in row] for row in np.asarray(m, dtype=object).tolist()]
    n = len(rows)
    if n == 0:
        return JordanData({})
    lam = sympy.Symbol("lam")
    poly = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in row] for row in rows]).charpoly(lam)
    roots = sympy.Poly(poly.as_expr(), lam).ground_roots()
    if sum(roots.values()) != n:
        raise OrbitError("spectrum is not rational")
    blocks = []
    for root, mult in roots.items():
        s = Fraction(int(sympy.numer(root)), int(sympy.denom(root)))
        shifted = [[x - (s if r == c else 0) for c, x in enumerate(row)] for r, row in enumerate(rows)]
        power = [[Fraction(int(r == c)) for c in range(n)] for r in range(n)]
        ranks = [n]
        while len(ranks) <= mult:
            power = exact_matmul(power, shifted)
            ranks.append(exact_rank(power))
        blocks.append((s, _partition_from_ranks(ranks, mult)))
    return JordanData(blocks)


def jordan_data(m: np.ndarray, cluster_tol: float | None = None, rtol: float = 1e-9) -> JordanData:
    """Numerical Jordan data.

    Eigenvalues closer than ``cluster_tol`` (default 1e-6 relative) are merged,
    since defective eigenvalues split at roughly eps**(1/k).  Each cluster's
    partition comes from numerical ranks of powers of (M - s).
    """
    m = np.asarray(m, dtype=complex)
    n = len(m)
    if n == 0:
        return JordanData({})
    scale = max(1.0, np.linalg.norm(m, 2))
    tol = 1e-6 * scale if cluster_tol is None else cluster_tol
    eig = list(np.linalg.eigvals(m))
    clusters: list[list[complex]] = []
    for e in sorted(eig, key=lambda z: (z.real, z.imag)):
        for c in clusters:
            if min(abs(e - x) for x in c) <= tol:
                c.append(e)
                break
        else:
            clusters.append([e])
    blocks = []
    for c in clusters:
        s = complex(np.mean(c))
        shifted = m - s * np.eye(n)
        power = np.eye(n, dtype=complex)
        ranks = [n]
        for _ in range(len(c)):
            power = power @ shifted
            ranks.append(numeric_rank(power, rtol))
        blocks.append((s, _partition_from_ranks(ranks, len(c))))
    return JordanData(blocks)
