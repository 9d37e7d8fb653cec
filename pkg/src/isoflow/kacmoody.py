"""Graphs, the Kac-Moody form, Weyl reflections and root-theoretic tests.

Vectors are dense tuples over the canonical node order of a graph.  Root
vectors hold integers; parameter vectors may hold ints, ``Fraction`` or
floating/complex numbers.  Exact inputs are compared exactly, floating ones
with a small tolerance.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np

PARAM_TOL = 1e-12


class GraphError(ValueError):
    """Raised for malformed graphs, unknown nodes or bad vectors."""


@dataclass(frozen=True)
class Graph:
    """Simple graph: ordered nodes, undirected edges, no loops or multi-edges.

    ``parts`` is set for complete k-partite graphs and records the partition
    of the nodes.
    """

    nodes: tuple[str, ...]
    edges: frozenset
    parts: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node identifiers")
        known = set(self.nodes)
        for e in self.edges:
            if len(e) != 2:
                raise GraphError(f"edge {sorted(e)} is a loop")
            if not e <= known:
                raise GraphError(f"edge {sorted(e)} references unknown node")

    @classmethod
    def from_edges(cls, nodes: Sequence[str], edges: Iterable[tuple[str, str]], parts=None) -> "Graph":
        seen = set()
        for a, b in edges:
            if a == b:
                raise GraphError(f"self-loop at {a}")
            key = frozenset((a, b))
            if key in seen:
                raise GraphError(f"multiple edges between {a} and {b}")
            seen.add(key)
        return cls(tuple(nodes), frozenset(seen), parts)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def index(self, node) -> int:
        if isinstance(node, (int, np.integer)) and not isinstance(node, bool):
            if 0 <= node < self.size:
                return int(node)
            raise GraphError(f"node index {node} out of range")
        try:
            return self.nodes.index(node)
        except ValueError:
            raise GraphError(f"unknown node {node!r}") from None

    def adjacency(self) -> np.ndarray:
        n = self.size
        adj = np.zeros((n, n), dtype=np.int64)
        pos = {v: k for k, v in enumerate(self.nodes)}
        for e in self.edges:
            a, b = tuple(e)
            adj[pos[a], pos[b]] = adj[pos[b], pos[a]] = 1
        return adj

    def cartan(self) -> np.ndarray:
        return 2 * np.eye(self.size, dtype=np.int64) - self.adjacency()

    def neighbours(self, i) -> list[int]:
        k = self.index(i)
        return [int(j) for j in np.flatnonzero(self.adjacency()[k])]


@dataclass(frozen=True)
class SupernovaGraph:
    """Complete k-partite core with a type A leg glued to every core node."""

    core: Graph
    leg_lengths: tuple[int, ...]
    graph: Graph = field(repr=False)

    @property
    def parts(self) -> tuple[tuple[str, ...], ...]:
        return self.core.parts

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.graph.nodes

    @property
    def core_nodes(self) -> tuple[str, ...]:
        return self.core.nodes

    def part_of(self, node) -> int:
        name = self.graph.nodes[self.graph.index(node)]
        for j, part in enumerate(self.parts):
            if name in part:
                return j
        raise GraphError(f"{name!r} is not a core node")

    def leg(self, core_node) -> list[str]:
        """Leg nodes of a core node, walking outward."""
        k = self.core.index(core_node)
        return [f"leg:{k}:{m}" for m in range(1, self.leg_lengths[k] + 1)]

    # delegation keeps the vector helpers agnostic of the wrapper
    def index(self, node) -> int:
        return self.graph.index(node)

    @property
    def size(self) -> int:
        return self.graph.size

    def cartan(self) -> np.ndarray:
        return self.graph.cartan()


def _as_graph(graph) -> Graph:
    return graph.graph if isinstance(graph, SupernovaGraph) else graph


def build_kpartite(partition) -> Graph:
    """Complete k-partite graph.

    ``partition`` is a list of part sizes (nodes are named ``core:j:k``) or a
    list of explicit parts, each a list of node identifiers.
    """
    parts = []
    for j, part in enumerate(partition):
        if isinstance(part, (int, np.integer)):
            if part <= 0:
                raise GraphError(f"invalid-partition: part {j} is empty")
            parts.append(tuple(f"core:{j}:{k}" for k in range(int(part))))
        else:
            part = tuple(part)
            if not part:
                raise GraphError(f"invalid-partition: part {j} is empty")
            parts.append(part)
    nodes = [v for part in parts for v in part]
    edges = [
        (a, b)
        for j, pa in enumerate(parts)
        for pb in parts[j + 1 :]
        for a in pa
        for b in pb
    ]
    return Graph.from_edges(nodes, edges, tuple(parts))


def build_supernova(core_partition, leg_lengths) -> SupernovaGraph:
    """Supernova graph from a core partition and per-core-node leg lengths.

    ``leg_lengths`` is a mapping keyed by core node or a sequence in core
    order.  Leg node ``m`` on core node number ``i`` is called ``leg:i:m``.
    """
    core = core_partition if isinstance(core_partition, Graph) else build_kpartite(core_partition)
    if core.parts is None:
        raise GraphError("core must be a complete k-partite graph")
    if isinstance(leg_lengths, Mapping):
        if set(leg_lengths) != set(core.nodes):
            raise GraphError("leg lengths must be keyed exactly by the core nodes")
        lengths = tuple(int(leg_lengths[v]) for v in core.nodes)
    else:
        lengths = tuple(int(x) for x in leg_lengths)
        if len(lengths) != core.size:
            raise GraphError("one leg length per core node required")
    if any(x < 0 for x in lengths):
        raise GraphError("invalid: negative leg length")
    nodes = list(core.nodes)
    edges = [tuple(e) for e in core.edges]
    for k, (v, length) in enumerate(zip(core.nodes, lengths)):
        prev = v
        for m in range(1, length + 1):
            name = f"leg:{k}:{m}"
            nodes.append(name)
            edges.append((prev, name))
            prev = name
    full = Graph.from_edges(nodes, edges)
    return SupernovaGraph(core, lengths, full)


def _root_vec(graph, v) -> np.ndarray:
    arr = np.asarray(v)
    if arr.shape != (graph.size,):
        raise GraphError(f"vector of length {arr.shape} does not match {graph.size} nodes")
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise GraphError("root vectors must be integral")
    return arr.astype(np.int64)


def cartan_form(graph, u, v) -> int:
    """The symmetric form (u, v) = u^T C v with C = 2 - adjacency."""
    g = _as_graph(graph)
    return int(_root_vec(g, u) @ g.cartan() @ _root_vec(g, v))


def delta_dim(graph, d) -> int:
    """2 - (d, d)."""
    return 2 - cartan_form(graph, d, d)


def reflect_root(graph, i, beta) -> tuple[int, ...]:
    """Simple reflection s_i(beta) = beta - (beta, e_i) e_i."""
    g = _as_graph(graph)
    k = g.index(i)
    b = _root_vec(g, beta).copy()
    b[k] -= int(b @ g.cartan()[:, k])
    return tuple(int(x) for x in b)


def _check_param(graph, lam) -> list:
    lam = list(lam)
    if len(lam) != graph.size:
        raise GraphError(f"parameter vector of length {len(lam)} does not match {graph.size} nodes")
    return lam


def reflect_param(graph, i, lam) -> tuple:
    """Dual reflection r_i(lam) = lam - lam_i alpha_i.

    Node i changes sign and lam_i is added to every neighbour.
    """
    g = _as_graph(graph)
    k = g.index(i)
    out = _check_param(g, lam)
    li = out[k]
    c = g.cartan()
    for j in range(g.size):
        if c[k, j]:
            out[j] = out[j] - li * int(c[k, j])
    return tuple(out)


def is_exact(x) -> bool:
    return isinstance(x, (int, Fraction, np.integer)) and not isinstance(x, bool)


def pairing(lam, beta):
    """lam . beta, kept exact when lam is exact."""
    return sum((l * int(b) for l, b in zip(lam, beta)), 0)


def param_is_zero(value, scale: float = 1.0, tol: float = PARAM_TOL) -> bool:
    if is_exact(value):
        return value == 0
    return abs(complex(value)) <= tol * max(1.0, scale)


def _pairing_zero(lam, beta) -> bool:
    val = pairing(lam, beta)
    scale = sum(abs(complex(l)) * abs(int(b)) for l, b in zip(lam, beta))
    return param_is_zero(val, scale)


@dataclass(frozen=True)
class RootClass:
    kind: str  # "real", "imaginary" or "not-a-root"
    sign: int  # +1, -1, or 0 for non-roots
    reduced: tuple[int, ...]
    word: tuple[int, ...]  # reflections applied during reduction, in order

    @property
    def is_root(self) -> bool:
        return self.kind != "not-a-root"


def connected_support(graph, beta) -> bool:
    g = _as_graph(graph)
    supp = [k for k, x in enumerate(beta) if x != 0]
    if not supp:
        return False
    adj = g.adjacency()
    seen = {supp[0]}
    todo = [supp[0]]
    allowed = set(supp)
    while todo:
        k = todo.pop()
        for j in np.flatnonzero(adj[k]):
            j = int(j)
            if j in allowed and j not in seen:
                seen.add(j)
                todo.append(j)
    return seen == allowed


def in_fundamental_region(graph, beta) -> bool:
    g = _as_graph(graph)
    b = _root_vec(g, beta)
    if np.any(b < 0) or not np.any(b):
        return False
    return bool(np.all(b @ g.cartan() <= 0)) and connected_support(g, b)


def classify_root(graph, beta) -> RootClass:
    """Decide whether beta is a real root, an imaginary root or not a root.

    Positive vectors are pushed down in height by reflections at nodes with
    (beta, e_i) > 0; the reduction ends at a simple root, in the fundamental
    region, or at a vector with mixed signs.
    """
    g = _as_graph(graph)
    b = _root_vec(g, beta).copy()
    if not np.any(b):
        raise GraphError("invalid: zero vector")
    if np.any(b > 0) and np.any(b < 0):
        return RootClass("not-a-root", 0, tuple(int(x) for x in b), ())
    sign = 1 if np.any(b > 0) else -1
    b = sign * b
    c = g.cartan()
    word = []
    while True:
        supp = np.flatnonzero(b)
        if len(supp) == 1:
            kind = "real" if b[supp[0]] == 1 else "not-a-root"
            return RootClass(kind, sign if kind == "real" else 0, tuple(int(x) for x in b), tuple(word))
        pair = b @ c
        pos = np.flatnonzero(pair > 0)
        if len(pos) == 0:
            if connected_support(g, b):
                return RootClass("imaginary", sign, tuple(int(x) for x in b), tuple(word))
            return RootClass("not-a-root", 0, tuple(int(x) for x in b), tuple(word))
        k = int(pos[0])
        b[k] -= pair[k]
        word.append(k)
        if b[k] < 0:
            return RootClass("not-a-root", 0, tuple(int(x) for x in b), tuple(word))


def is_positive_root(graph, beta) -> bool:
    b = np.asarray(beta)
    if not np.any(b) or np.any(b < 0):
        return False
    return classify_root(graph, beta).is_root


@dataclass(frozen=True)
class DSVerdict:
    """Outcome of the existence test with its certificate."""

    status: str  # "nonempty", "empty" or "budget-exceeded"
    reason: str
    decomposition: tuple[tuple[int, ...], ...] = ()
    delta: int | None = None
    delta_sum: int | None = None

    @property
    def nonempty(self) -> bool:
        return self.status == "nonempty"


class _Budget(Exception):
    pass


def ds_exists(graph, lam, d, budget: int = 10**6) -> DSVerdict:
    """Root-theoretic existence test for stable points with data (lam, d).

    Nonempty iff d is a positive root, lam . d = 0, and every nontrivial
    decomposition of d into positive roots orthogonal to lam has strictly
    smaller total Delta.  The certificate names the failed condition or the
    decomposition with the largest total Delta.
    """
    g = _as_graph(graph)
    dv = _root_vec(g, d)
    lam = _check_param(g, lam)
    if np.any(dv < 0) or not np.any(dv):
        return DSVerdict("empty", "not a positive root")
    if not classify_root(g, dv).is_root:
        return DSVerdict("empty", "not a root")
    if not _pairing_zero(lam, dv):
        return DSVerdict("empty", "lambda . d != 0")

    target = tuple(int(x) for x in dv)
    delta = delta_dim(g, dv)
    count = 0

    candidates = []
    for beta in itertools.product(*(range(x + 1) for x in target)):
        count += 1
        if count > budget:
            return DSVerdict("budget-exceeded", "root enumeration exceeded the budget", delta=delta)
        if not any(beta) or beta == target:
            continue
        if _pairing_zero(lam, beta) and classify_root(g, beta).is_root:
            candidates.append((beta, delta_dim(g, beta)))

    memo: dict = {}
    best_found = [None]

    def best(v):
        # largest total Delta over decompositions of v into candidates
        nonlocal count
        if not any(v):
            return 0, ()
        if v in memo:
            return memo[v]
        result = None
        for beta, db in candidates:
            count += 1
            if count > budget:
                raise _Budget
            if all(x <= y for x, y in zip(beta, v)):
                rest = best(tuple(y - x for x, y in zip(beta, v)))
                if rest is not None:
                    val = (db + rest[0], (beta,) + rest[1])
                    if result is None or val[0] > result[0]:
                        result = val
        memo[v] = result
        return result

    witness = None
    try:
        for beta, db in candidates:
            rest = best(tuple(y - x for x, y in zip(beta, target)))
            if rest is None:
                continue
            total = db + rest[0]
            if witness is None or total > witness[0]:
                witness = (total, tuple(sorted((beta,) + rest[1], reverse=True)))
                best_found[0] = witness
    except _Budget:
        if best_found[0] is not None and best_found[0][0] >= delta:
            total, parts = best_found[0]
            return DSVerdict("empty", "decomposition with Delta(d) <= sum", parts, delta, total)
        return DSVerdict("budget-exceeded", "decomposition search exceeded the budget", delta=delta)

    if witness is not None and witness[0] >= delta:
        return DSVerdict("empty", "decomposition with Delta(d) <= sum", witness[1], delta, witness[0])
    if witness is None:
        return DSVerdict("nonempty", "no proper decomposition", (), delta, None)
    return DSVerdict("nonempty", "all decompositions have smaller total Delta", witness[1], delta, witness[0])


@dataclass(frozen=True)
class OrbitElement:
    lam: tuple
    d: tuple[int, ...]
    word: tuple[int, ...]  # node indices in the order the reflections were applied


def _param_key(lam):
    key = []
    for x in lam:
        if is_exact(x):
            key.append(Fraction(x))
        else:
            z = complex(x)
            key.append((round(z.real, 10) + 0.0, round(z.imag, 10) + 0.0))
    return tuple(key)


def weyl_orbit(graph, lam, d, depth: int) -> list[OrbitElement]:
    """Breadth-first exploration of admissible reflections (lam_i != 0).

    Returns the distinct pairs reached within ``depth`` reflections, each with
    one shortest generating word, in deterministic BFS order.
    """
    if depth < 0:
        raise GraphError("depth must be nonnegative")
    g = _as_graph(graph)
    lam = tuple(_check_param(g, lam))
    d = tuple(int(x) for x in _root_vec(g, d))
    start = OrbitElement(lam, d, ())
    seen = {(_param_key(lam), d)}
    out = [start]
    queue = deque([(start, 0)])
    while queue:
        elem, level = queue.popleft()
        if level == depth:
            continue
        for k in range(g.size):
            if param_is_zero(elem.lam[k]):
                continue
            nl = reflect_param(g, k, elem.lam)
            nd = reflect_root(g, k, elem.d)
            key = (_param_key(nl), nd)
            if key in seen:
                continue
            seen.add(key)
            new = OrbitElement(nl, nd, elem.word + (k,))
            out.append(new)
            queue.append((new, level + 1))
    return out


def apply_word(graph, word, beta) -> tuple[int, ...]:
    """Apply s_{w_1} first, then s_{w_2}, ... (application order)."""
    for k in word:
        beta = reflect_root(graph, k, beta)
    return tuple(beta)


@dataclass(frozen=True)
class Reading:
    """One Lax reading of a supernova graph with a dimension vector."""

    infinity_part: int | None
    rank: int
    finite_poles: int
    infinity_order: int

    @property
    def poles(self) -> int:
        return self.finite_poles + (1 if self.infinity_order > 0 else 0)

    def describe(self) -> str:
        where = "none" if self.infinity_part is None else f"part {self.infinity_part}"
        kind = {1: "simple", 2: "irregular (order 2)", 3: "irregular (order 3)"}[self.infinity_order]
        return (
            f"infinity: {where}; rank {self.rank}; {self.finite_poles} finite simple pole(s); "
            f"pole at infinity {kind}"
        )


def lax_readings(graph: SupernovaGraph, d) -> list[Reading]:
    """Readings as connections on trivial bundles, one per choice of part at infinity.

    The rank is the total core dimension off the chosen part.  Nodes of the
    chosen part give simple poles at their times; the pole at infinity has
    order 3 when at least two finite parts carry dimension, order 2 when one
    finite part has at least two nonzero nodes, and is simple otherwise.
    Readings of rank zero are dropped.
    """
    dv = _root_vec(graph.graph, d)
    core_dims = {v: int(dv[graph.index(v)]) for v in graph.core_nodes}
    readings = []
    for inf in [*range(len(graph.parts)), None]:
        finite = [p for j, p in enumerate(graph.parts) if j != inf]
        rank = sum(core_dims[v] for p in finite for v in p)
        if rank == 0:
            continue
        poles = 0 if inf is None else sum(1 for v in graph.parts[inf] if core_dims[v] > 0)
        live = [p for p in finite if any(core_dims[v] for v in p)]
        if len(live) >= 2:
            order = 3
        elif sum(1 for v in live[0] if core_dims[v]) >= 2:
            order = 2
        else:
            order = 1
        readings.append(Reading(inf, rank, poles, order))
    return readings
