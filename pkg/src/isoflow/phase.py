"""The symplectic space of off-part-diagonal block matrices and its symmetries.

V is graded by core nodes and grouped into parts W_j.  A point is a full
matrix Gamma on V with vanishing diagonal part-blocks; Xi = phi(Gamma)
rescales the (i, j) part-block by phi_ij.  Rows and columns of all matrices
follow the node order of the graded space (parts in order, nodes within a
part in order).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .linalg import image_basis, null_basis, numeric_rank, rng_complex

INF = math.inf


class PhaseError(ValueError):
    pass


class PoleError(PhaseError):
    pass


def is_infinite(a) -> bool:
    if a is None:
        return True
    if isinstance(a, str):
        return a.strip().lower() in ("inf", "infinity", "oo")
    return cmath.isinf(complex(a))


def _point(a):
    return INF if is_infinite(a) else complex(a)


@dataclass(frozen=True)
class FourierConfig:
    """Distinct points a_j of the Riemann sphere, one per part."""

    points: tuple

    def __init__(self, points: Iterable):
        pts = tuple(_point(a) for a in points)
        finite = [a for a in pts if a is not INF]
        if len(finite) + 1 < len(pts):
            raise PhaseError("at most one part may sit at infinity")
        for k, a in enumerate(finite):
            for b in finite[k + 1 :]:
                if abs(a - b) <= 1e-14 * max(1.0, abs(a), abs(b)):
                    raise PhaseError("Fourier points must be distinct")
        object.__setattr__(self, "points", pts)

    @property
    def inf_part(self) -> int | None:
        for j, a in enumerate(self.points):
            if a is INF:
                return j
        return None

    def phi(self, i: int, j: int) -> complex:
        if i == j:
            return 0.0
        ai, aj = self.points[i], self.points[j]
        if ai is INF:
            return -1.0
        if aj is INF:
            return 1.0
        return 1.0 / (ai - aj)

    def phi_table(self) -> np.ndarray:
        k = len(self.points)
        return np.array([[self.phi(i, j) for j in range(k)] for i in range(k)], dtype=complex)


@dataclass(frozen=True)
class GradedSpace:
    """Dimensions d_i of the node spaces V_i, grouped by part."""

    dims: tuple[tuple[int, ...], ...]

    def __init__(self, dims: Iterable[Iterable[int]]):
        dd = tuple(tuple(int(x) for x in part) for part in dims)
        if any(x < 0 for part in dd for x in part):
            raise PhaseError("dimensions must be nonnegative")
        if any(len(part) == 0 for part in dd):
            raise PhaseError("every part needs at least one node")
        object.__setattr__(self, "dims", dd)

    @cached_property
    def node_parts(self) -> tuple[int, ...]:
        return tuple(j for j, part in enumerate(self.dims) for _ in part)

    @cached_property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(x for part in self.dims for x in part)

    @property
    def nnodes(self) -> int:
        return len(self.node_dims)

    @property
    def nparts(self) -> int:
        return len(self.dims)

    @cached_property
    def n(self) -> int:
        return sum(self.node_dims)

    @cached_property
    def node_slices(self) -> tuple[slice, ...]:
        out, k = [], 0
        for d in self.node_dims:
            out.append(slice(k, k + d))
            k += d
        return tuple(out)

    @cached_property
    def part_slices(self) -> tuple[slice, ...]:
        out, k = [], 0
        for part in self.dims:
            out.append(slice(k, k + sum(part)))
            k += sum(part)
        return tuple(out)

    @cached_property
    def row_node(self) -> np.ndarray:
        return np.repeat(np.arange(self.nnodes), self.node_dims).astype(int)

    @cached_property
    def row_part(self) -> np.ndarray:
        return np.asarray(self.node_parts, dtype=int)[self.row_node] if self.n else np.zeros(0, int)

    def nodes_of_part(self, j: int) -> list[int]:
        return [i for i, p in enumerate(self.node_parts) if p == j]


@dataclass(frozen=True)
class Frame:
    """Arrays derived from a graded space and Fourier points."""

    space: GradedSpace
    fourier: FourierConfig
    phi: np.ndarray  # Phi[r, c] = phi_{part(r), part(c)}
    phi_inv: np.ndarray  # 1/Phi off the part diagonal, 0 on it
    offpart: np.ndarray
    samepart: np.ndarray
    samenode: np.ndarray
    inf_rows: np.ndarray
    fin_rows: np.ndarray
    a_rows: np.ndarray  # a_j on finite rows, 0 on rows at infinity


@lru_cache(maxsize=256)
def frame(space: GradedSpace, fourier: FourierConfig) -> Frame:
    if len(fourier.points) != space.nparts:
        raise PhaseError("one Fourier point per part required")
    rp = space.row_part
    table = fourier.phi_table()
    phi = table[np.ix_(rp, rp)]
    offpart = rp[:, None] != rp[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_inv = np.where(offpart, 1.0 / np.where(offpart, phi, 1.0), 0.0)
    rn = space.row_node
    inf = fourier.inf_part
    inf_rows = rp == inf if inf is not None else np.zeros(space.n, bool)
    a_rows = np.array([0.0 if fourier.points[p] is INF else fourier.points[p] for p in rp], dtype=complex)
    return Frame(
        space,
        fourier,
        phi,
        phi_inv,
        offpart,
        ~offpart,
        rn[:, None] == rn[None, :],
        inf_rows,
        ~inf_rows,
        a_rows,
    )


@dataclass(frozen=True)
class TimeConfig:
    """Times t_i, one per core node; distinct within each part."""

    times: tuple[complex, ...]

    def __init__(self, times: Iterable):
        object.__setattr__(self, "times", tuple(complex(t) for t in times))

    def check(self, space: GradedSpace, tol: float = 0.0) -> None:
        if len(self.times) != space.nnodes:
            raise PhaseError("one time per core node required")
        for j in range(space.nparts):
            ts = [self.times[i] for i in space.nodes_of_part(j)]
            for k, a in enumerate(ts):
                for b in ts[k + 1 :]:
                    if abs(a - b) <= tol:
                        raise PhaseError(f"times in part {j} are not distinct")


@dataclass(frozen=True)
class Mobius:
    """Element (a, b; c, d) of SL2, acting by (del, z) -> (a del + b z, c del + d z)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if abs(self.det - 1) > 1e-10 * max(1.0, abs(self.a * self.d), abs(self.b * self.c)):
            raise PhaseError("Mobius element must have determinant 1")

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    @classmethod
    def from_matrix(cls, m) -> "Mobius":
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    def __matmul__(self, other: "Mobius") -> "Mobius":
        return Mobius.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    @classmethod
    def scaling(cls, c) -> "Mobius":
        return cls(1 / complex(c), 0, 0, complex(c))

    @classmethod
    def shear(cls, c) -> "Mobius":
        return cls(1, complex(c), 0, 1)

    @classmethod
    def fourier_laplace(cls) -> "Mobius":
        return cls(0, -1, 1, 0)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Mobius":
        a, b, c = rng_complex(rng, 3)
        a = a + (1.0 if abs(a) < 0.3 else 0.0)
        return cls(a, b, c, (1 + b * c) / a)


@dataclass
class FlowState:
    """A point of the phase space together with its base point (times) and Fourier data."""

    space: GradedSpace
    fourier: FourierConfig
    gamma: np.ndarray
    times: np.ndarray
    log_tau: complex = 0j

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=complex)
        self.times = np.asarray(self.times, dtype=complex)
        n = self.space.n
        if self.gamma.shape != (n, n):
            raise PhaseError(f"Gamma must be {n}x{n}")
        if len(self.times) != self.space.nnodes:
            raise PhaseError("one time per core node required")

    @property
    def frame(self) -> Frame:
        return frame(self.space, self.fourier)

    @property
    def xi(self) -> np.ndarray:
        return self.frame.phi * self.gamma

    @property
    def that(self) -> np.ndarray:
        """Diagonal of T-hat as a vector over rows."""
        return self.times[self.space.row_node]

    def with_gamma(self, gamma, times=None, log_tau=None) -> "FlowState":
        return replace(
            self,
            gamma=np.asarray(gamma, dtype=complex),
            times=self.times if times is None else np.asarray(times, dtype=complex),
            log_tau=self.log_tau if log_tau is None else log_tau,
        )

    def block(self, i: int, j: int) -> np.ndarray:
        """Part block B_ij : W_j -> W_i."""
        ps = self.space.part_slices
        return self.gamma[ps[i], ps[j]]

    def scale(self) -> float:
        return max(1.0, float(np.linalg.norm(self.gamma)), float(np.max(np.abs(self.times), initial=0.0)))


def gamma_from_blocks(space: GradedSpace, blocks: Mapping) -> np.ndarray:
    """Assemble Gamma from part blocks {(i, j): B_ij}, i != j."""
    g = np.zeros((space.n, space.n), dtype=complex)
    ps = space.part_slices
    for (i, j), b in blocks.items():
        if i == j:
            raise PhaseError("diagonal part-blocks are not part of the phase space")
        b = np.asarray(b, dtype=complex).reshape(ps[i].stop - ps[i].start, ps[j].stop - ps[j].start)
        g[ps[i], ps[j]] = b
    return g


def offpart(space: GradedSpace, m: np.ndarray) -> np.ndarray:
    rp = space.row_part
    return np.where(rp[:, None] != rp[None, :], m, 0)


def diagpart(space: GradedSpace, m: np.ndarray) -> np.ndarray:
    rp = space.row_part
    return np.where(rp[:, None] == rp[None, :], m, 0)


def random_gamma(rng: np.random.Generator, space: GradedSpace, scale: float = 1.0) -> np.ndarray:
    return offpart(space, rng_complex(rng, (space.n, space.n), scale))


def random_times(rng: np.random.Generator, space: GradedSpace, spread: float = 2.0) -> np.ndarray:
    """Random times, well separated inside each part."""
    while True:
        t = rng_complex(rng, space.nnodes, spread)
        ok = True
        for j in range(space.nparts):
            ts = t[space.nodes_of_part(j)]
            if len(ts) > 1:
                gaps = np.abs(ts[:, None] - ts[None, :])[~np.eye(len(ts), dtype=bool)]
                ok &= bool(gaps.min() > 0.3 * spread)
        if ok:
            return t


def random_state(rng, dims, points, scale: float = 1.0, spread: float = 2.0) -> FlowState:
    space = GradedSpace(dims)
    fourier = FourierConfig(points)
    return FlowState(space, fourier, random_gamma(rng, space, scale), random_times(rng, space, spread))


# --- the symplectic form ----------------------------------------------------------------


def omega(fourier: FourierConfig, space: GradedSpace, u: np.ndarray, v: np.ndarray) -> complex:
    """omega(u, v) = 1/2 sum phi_ij Tr(u_ij v_ji - v_ij u_ji)."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (space.n, space.n) or v.shape != u.shape:
        raise PhaseError("tangent vectors must match the graded space")
    phi = frame(space, fourier).phi
    return 0.5 * complex(np.sum(phi * (u * v.T - v * u.T)))


def hamiltonian_vector(fr: Frame, grad: np.ndarray) -> np.ndarray:
    """Field v with dH(u) = omega(u, v), from the gradient dH(u) = sum grad * u."""
    # omega(u, v) = Tr(phi(u) v) = sum_rc Phi[r,c] u[r,c] v[c,r]
    return (fr.phi_inv * grad).T


# --- the SL2 action -------------------------------------------------------------------


def _renormalize(alpha: complex, beta: complex, tol: float = 1e-13):
    """Point and left factor for a joint eigenvalue pair (alpha, beta)."""
    if abs(alpha) <= tol * max(abs(alpha), abs(beta)):
        return INF, 1.0 / beta
    return -beta / alpha, 1.0 / alpha


def _pair(a) -> tuple[complex, complex]:
    return (0.0, 1.0) if a is INF else (1.0, -a)


def sl2_direct(g: Mobius, fourier: FourierConfig):
    """New points and per-part left factors, straight from the action on (alpha, beta)."""
    points, eps = [], []
    for a in fourier.points:
        al, be = _pair(a)
        p, e = _renormalize(g.a * al + g.c * be, g.b * al + g.d * be)
        points.append(p)
        eps.append(e)
    return FourierConfig(points), np.array(eps, dtype=complex)


def _generator_step(kind: str, c, points):
    new, eps = [], []
    for a in points:
        if kind == "scaling":
            new.append(INF if a is INF else c * c * a)
            eps.append(1 / c if a is INF else c)
        elif kind == "shear":
            new.append(INF if a is INF else a - c)
            eps.append(1.0)
        else:  # Fourier-Laplace
            if a is INF:
                new.append(0.0)
                eps.append(1.0)
            elif abs(a) <= 1e-13:
                new.append(INF)
                eps.append(-1.0)
            else:
                new.append(-1 / a)
                eps.append(-1 / a)
    return new, np.array(eps, dtype=complex)


def bruhat_factor(g: Mobius) -> list[tuple[str, complex]]:
    """Generators whose product (left to right) is g."""
    if abs(g.c) <= 1e-14 * max(1.0, abs(g.a), abs(g.d)):
        return [("scaling", 1 / g.a), ("shear", g.b / g.a)]
    return [("shear", g.a / g.c), ("fl", 0.0), ("shear", g.c * g.d), ("scaling", 1 / g.c)]


def generator_matrix(kind: str, c) -> Mobius:
    if kind == "scaling":
        return Mobius.scaling(c)
    if kind == "shear":
        return Mobius.shear(c)
    return Mobius.fourier_laplace()


def sl2_epsilon(g: Mobius, fourier: FourierConfig):
    """Compose the generator actions of the factorization of g.

    Acting by g1 then g2 realizes g1 g2, so the factors are applied left to
    right.  Returns new Fourier points and the accumulated per-part factor.
    """
    points = list(fourier.points)
    eps = np.ones(len(points), dtype=complex)
    for kind, c in bruhat_factor(g):
        points, e = _generator_step(kind, c, points)
        eps = e * eps
    return FourierConfig(points), eps


def sl2_act(g: Mobius, state: FlowState) -> FlowState:
    """Transform the data by g and renormalize: Gamma -> eps Gamma, T -> eps T, a -> g.a."""
    fourier, eps = sl2_epsilon(g, state.fourier)
    rows = eps[state.space.row_part]
    node_eps = eps[np.asarray(state.space.node_parts, dtype=int)]
    return FlowState(state.space, fourier, rows[:, None] * state.gamma, node_eps * state.times, state.log_tau)


def sl2_tangent(g: Mobius, state: FlowState, u: np.ndarray) -> np.ndarray:
    _, eps = sl2_epsilon(g, state.fourier)
    return eps[state.space.row_part][:, None] * u


# --- residues ----------------------------------------------------------------------------


@dataclass
class Residue:
    node: int
    Q: np.ndarray  # V_i -> U_i
    P: np.ndarray  # U_i -> V_i
    R: np.ndarray  # Q P in End(U_i)
    Lam: np.ndarray  # -P Q in End(V_i)


def residues(state: FlowState) -> dict[int, Residue]:
    """Q_i = Gamma restricted to V_i, P_i = -(row V_i of Xi); R_i = Q_i P_i, Lam_i = -P_i Q_i."""
    sp = state.space
    xi = state.xi
    out = {}
    for i, sl in enumerate(sp.node_slices):
        rows_u = sp.row_part != sp.node_parts[i]
        q = state.gamma[rows_u][:, sl]
        p = -xi[sl][:, rows_u]
        out[i] = Residue(i, q, p, q @ p, -p @ q)
    return out


def residue_full(state: FlowState, i: int) -> np.ndarray:
    """R_i embedded in End(V) (supported on U_i)."""
    sl = state.space.node_slices[i]
    return -state.gamma[:, sl] @ state.xi[sl, :]


# --- stability -----------------------------------------------------------------------------


@dataclass
class StabilityVerdict:
    status: str  # "reducible" or "probably-irreducible"
    witness: dict[int, np.ndarray] | None = None  # node -> basis of the invariant subspace
    trials: int = 0
    certified: bool = False  # an eigenline argument proved irreducibility

    @property
    def reducible(self) -> bool:
        return self.status == "reducible"


def _closure(gamma, sp: GradedSpace, start: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    sub = {i: start.get(i, np.zeros((d, 0), complex)) for i, d in enumerate(sp.node_dims)}
    live = [i for i, d in enumerate(sp.node_dims) if d]
    changed = True
    while changed:
        changed = False
        for h in live:
            pieces = [sub[h]]
            for t in live:
                if sp.node_parts[t] != sp.node_parts[h] and sub[t].shape[1]:
                    pieces.append(gamma[sp.node_slices[h], sp.node_slices[t]] @ sub[t])
            basis = image_basis(np.hstack(pieces)) if sum(p.shape[1] for p in pieces) else sub[h]
            if basis.shape[1] > sub[h].shape[1]:
                sub[h] = basis
                changed = True
    return sub


def _is_invariant(gamma, sp: GradedSpace, sub: dict[int, np.ndarray], tol: float) -> bool:
    for h, sh in sub.items():
        proj = np.eye(sp.node_dims[h]) - sh @ sh.conj().T
        for t, st in sub.items():
            if sp.node_parts[t] != sp.node_parts[h] and st.shape[1] and sp.node_dims[h]:
                img = gamma[sp.node_slices[h], sp.node_slices[t]] @ st
                if np.linalg.norm(proj @ img) > tol:
                    return False
    return True


def _split(sp: GradedSpace, v: np.ndarray) -> dict[int, np.ndarray]:
    return {i: v[sl][:, None] for i, sl in enumerate(sp.node_slices) if sp.node_dims[i] and np.linalg.norm(v[sl]) > 1e-12}


def _random_path_element(rng, gamma, sp: GradedSpace) -> np.ndarray:
    """Random element of the algebra generated by node projections and edge maps."""

    def one():
        d = rng_complex(rng, sp.nnodes)[sp.row_node]
        w = rng_complex(rng, (sp.nnodes, sp.nnodes))[np.ix_(sp.row_node, sp.row_node)]
        return np.diag(d) + w * gamma

    return one() + one() @ one()


def is_stable(state: FlowState, trials: int = 16, seed: int = 0) -> StabilityVerdict:
    """Randomized irreducibility test for the representation given by Gamma.

    For a random element a of the path algebra, any subrepresentation
    contains an eigenvector of a; eigenvectors are closed under all edge maps,
    for Gamma and for its transpose (whose invariant subspaces are
    annihilators of invariant subspaces).  A proper closure is returned as an
    explicit witness after checking invariance.  When some eigenspace is a
    line and both closures are everything, irreducibility is certain.
    """
    if trials < 1:
        raise PhaseError("trials must be at least 1")
    sp = state.space
    rng = np.random.default_rng(seed)
    n = sp.n
    tol = 1e-9 * max(1.0, float(np.linalg.norm(state.gamma)))
    if n == 0:
        return StabilityVerdict("probably-irreducible", None, 0, True)

    def proper(sub):
        k = sum(b.shape[1] for b in sub.values())
        return 0 < k < n

    def attempt(v, transpose):
        g = state.gamma.T if transpose else state.gamma
        sub = _closure(g, sp, _split(sp, v))
        full = {i: sub.get(i, np.zeros((d, 0), complex)) for i, d in enumerate(sp.node_dims)}
        if sum(b.shape[1] for b in full.values()) == n:
            return None, True
        if transpose:
            full = {k: null_basis(b.T) if b.shape[1] else np.eye(sp.node_dims[k], dtype=complex) for k, b in full.items()}
        if proper(full) and _is_invariant(state.gamma, sp, full, tol):
            return full, False
        return None, False

    for t in range(trials):
        a = _random_path_element(rng, state.gamma, sp)
        certified = False
        for lam in np.linalg.eigvals(a):
            right = null_basis(a - lam * np.eye(n), 1e-8)
            left = null_basis((a - lam * np.eye(n)).T, 1e-8)
            if not right.shape[1] or not left.shape[1]:
                continue
            picks_r = [right[:, 0]] if right.shape[1] == 1 else [right @ rng_complex(rng, right.shape[1]) for _ in range(3)]
            picks_l = [left[:, 0]] if left.shape[1] == 1 else [left @ rng_complex(rng, left.shape[1]) for _ in range(3)]
            full_r = full_l = True
            for v in picks_r:
                wit, ok = attempt(v, False)
                if wit is not None:
                    return StabilityVerdict("reducible", wit, t + 1)
                full_r &= ok
            for w in picks_l:
                wit, ok = attempt(w, True)
                if wit is not None:
                    return StabilityVerdict("reducible", wit, t + 1)
                full_l &= ok
            certified |= right.shape[1] == 1 and full_r and full_l
        if certified:
            return StabilityVerdict("probably-irreducible", None, t + 1, True)
    return StabilityVerdict("probably-irreducible", None, trials)


# --- the rational matrix on U_infinity ----------------------------------------------------


def connection_matrix(state: FlowState, z: complex) -> np.ndarray:
    """B(z) = A z + B + T + sum_{i at infinity} R_i / (z - t_i) on U_infinity."""
    fr = state.frame
    sp = state.space
    u = fr.fin_rows
    out = np.diag(fr.a_rows[u] * z + state.that[u]) + state.gamma[np.ix_(u, u)]
    inf = state.fourier.inf_part
    if inf is not None:
        res = residues(state)
        for i in sp.nodes_of_part(inf):
            if not sp.node_dims[i]:
                continue
            dz = z - state.times[i]
            if abs(dz) <= 1e-14 * max(1.0, abs(z)):
                raise PoleError(f"z = {z} is a pole (time of node {i})")
            out = out + res[i].R / dz
    return out


# --- the cotangent description ---------------------------------------------------------------


def cotangent_twist(state: FlowState, orientation: Iterable[tuple[int, int]], gamma=None) -> dict[tuple[int, int], np.ndarray]:
    """Twisted edge maps rho'(e) for both orientations of every core edge.

    ``orientation`` lists each core edge once as (tail, head).  For an
    oriented edge e: t -> h the map is rho(e) = Gamma[V_h, V_t] and
    phi(e) = phi_{part(h), part(t)}; then rho'(e) = -phi(e) rho(e) and the
    reversed edge keeps rho.  ``gamma`` overrides the state's matrix (used for
    tangent vectors, the twist being linear).
    """
    sp = state.space
    g = state.gamma if gamma is None else gamma
    edges = {frozenset((a, b)) for a in range(sp.nnodes) for b in range(sp.nnodes) if sp.node_parts[a] != sp.node_parts[b]}
    given = [(int(t), int(h)) for t, h in orientation]
    if {frozenset(e) for e in given} != edges or len(given) != len(edges):
        raise PhaseError("invalid: orientation must list every core edge exactly once")
    out = {}
    for t, h in given:
        phi = state.fourier.phi(sp.node_parts[h], sp.node_parts[t])
        out[(t, h)] = -phi * g[sp.node_slices[h], sp.node_slices[t]]
        out[(h, t)] = g[sp.node_slices[t], sp.node_slices[h]]
    return out


def standard_orientation(space: GradedSpace) -> list[tuple[int, int]]:
    """Each core edge oriented from the later part to the earlier one."""
    return [(b, a) for a in range(space.nnodes) for b in range(space.nnodes) if space.node_parts[a] < space.node_parts[b]]


def twisted_moment_map(state: FlowState, orientation, twist) -> dict[int, np.ndarray]:
    """sum over edges e with tail i of eps(e) rho'(e-bar) rho'(e)."""
    sp = state.space
    oriented = {(int(t), int(h)) for t, h in orientation}
    out = {i: np.zeros((d, d), complex) for i, d in enumerate(sp.node_dims)}
    for (t, h), m in twist.items():
        sign = 1 if (t, h) in oriented else -1
        out[t] = out[t] + sign * twist[(h, t)] @ m
    return out


def twisted_form(orientation, tw_u, tw_v) -> complex:
    """sum over oriented edges of Tr(d rho'(e-bar) ^ d rho'(e)) on two tangents."""
    total = 0j
    for t, h in orientation:
        e, eb = (t, h), (h, t)
        total += np.trace(tw_u[eb] @ tw_v[e]) - np.trace(tw_v[eb] @ tw_u[e])
    return total


# --- normalization ---------------------------------------------------------------------------------


@dataclass
class Normalized:
    fourier: FourierConfig
    space: GradedSpace
    gamma: np.ndarray
    times: np.ndarray
    left: np.ndarray  # L with L (alpha lam + beta z - gamma) S = normalized matrix
    right: np.ndarray  # S, the adapted basis

    def state(self) -> FlowState:
        return FlowState(self.space, self.fourier, self.gamma, self.times)

    def alpha_beta(self):
        return normalized_alpha_beta(self.state())


def normalized_alpha_beta(state: FlowState):
    """alpha = 1 on finite parts, 0 at infinity; beta = 1 at infinity, -a_j on finite parts."""
    fr = state.frame
    alpha = np.diag(fr.fin_rows.astype(complex))
    beta = np.diag(np.where(fr.inf_rows, 1.0, -fr.a_rows))
    return alpha, beta


def weyl_matrix(state: FlowState):
    """(alpha, beta, gamma) of the normalized form, gamma = Gamma + T-hat."""
    alpha, beta = normalized_alpha_beta(state)
    return alpha, beta, state.gamma + np.diag(state.that)


def _group(values: Sequence[complex], tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    reps: list = []
    for k, v in enumerate(values):
        for g, r in zip(groups, reps):
            if (r is INF and v is INF) or (r is not INF and v is not INF and abs(r - v) <= tol * max(1.0, abs(r))):
                g.append(k)
                break
        else:
            groups.append([k])
            reps.append(v)
    return groups


def normalize(alpha, beta, gamma, tol: float = 1e-9) -> Normalized:
    """Bring alpha lam + beta z - gamma to the normalized block form.

    Joint eigenspaces of (alpha, beta) become the parts, ordered with infinity
    first and then by (Re a, Im a); each part-diagonal block of gamma is
    diagonalized and its eigenvalues, ordered lexicographically, become the
    node times.
    """
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    n = len(alpha)
    if alpha.shape != (n, n) or beta.shape != (n, n) or gamma.shape != (n, n):
        raise PhaseError("invalid-input: square matrices of equal size required")
    scale = max(1.0, np.linalg.norm(alpha), np.linalg.norm(beta))
    if np.linalg.norm(alpha @ beta - beta @ alpha) > tol * scale**2:
        raise PhaseError("invalid-input: alpha and beta do not commute")
    rng = np.random.default_rng(12345)
    mix = alpha + (0.7 + 0.3j + 0.1 * rng.standard_normal()) * beta
    _, s = np.linalg.eig(mix)
    if np.linalg.cond(s) > 1e8:
        raise PhaseError("invalid-input: alpha and beta are not simultaneously diagonalizable")
    sinv = np.linalg.inv(s)
    da = sinv @ alpha @ s
    db = sinv @ beta @ s
    if np.linalg.norm(da - np.diag(np.diag(da))) + np.linalg.norm(db - np.diag(np.diag(db))) > 1e-7 * scale:
        raise PhaseError("invalid-input: alpha and beta are not simultaneously diagonalizable")
    al, be = np.diag(da), np.diag(db)
    if np.any(np.abs(al) + np.abs(be) <= tol * scale):
        raise PhaseError("invalid-input: alpha and beta have a common kernel")
    pts, left = [], []
    for x, y in zip(al, be):
        p, e = _renormalize(x, y, tol)
        pts.append(p)
        left.append(e)
    groups = _group(pts, 1e-8)
    groups.sort(key=lambda g: (0, 0.0, 0.0) if pts[g[0]] is INF else (1, pts[g[0]].real, pts[g[0]].imag))
    order = [k for g in groups for k in g]
    s = s[:, order]
    lft = np.diag(np.array(left)[order]) @ sinv[order]
    gam = lft @ gamma @ s
    sizes = [len(g) for g in groups]
    # diagonalize each part-diagonal block
    bounds = np.cumsum([0] + sizes)
    change = np.zeros((n, n), complex)
    node_dims, node_times = [], []
    for j in range(len(groups)):
        sl = slice(bounds[j], bounds[j + 1])
        w, u = np.linalg.eig(gam[sl, sl])
        if np.linalg.cond(u) > 1e8:
            raise PhaseError("invalid-input: part-diagonal block of gamma is not semisimple")
        idx = sorted(range(len(w)), key=lambda k: (w[k].real, w[k].imag))
        w, u = w[idx], u[:, idx]
        change[sl, sl] = u
        tgroups = _group(list(w), 1e-8)
        node_dims.append([len(g) for g in tgroups])
        node_times.extend(complex(np.mean(w[g])) for g in tgroups)
    cinv = np.linalg.inv(change)
    gam = cinv @ gam @ change
    space = GradedSpace(node_dims)
    rp = space.row_part
    diag = np.where(rp[:, None] == rp[None, :], gam, 0)
    tvec = np.asarray(node_times)[space.row_node]
    if np.linalg.norm(diag - np.diag(tvec)) > 1e-7 * max(1.0, np.linalg.norm(gam)):
        raise PhaseError("invalid-input: part-diagonal block of gamma is not semisimple")
    fourier = FourierConfig([pts[g[0]] if pts[g[0]] is INF else complex(np.mean([pts[k] for k in g])) for g in groups])
    return Normalized(fourier, space, np.where(rp[:, None] != rp[None, :], gam, 0), np.asarray(node_times), cinv @ lft, s @ change)
