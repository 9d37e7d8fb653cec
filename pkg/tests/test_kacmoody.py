from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isoflow import kacmoody as km

TRIANGLE = km.build_kpartite([1, 1, 1])
INTERVAL = km.build_kpartite([1, 1])
A2PP = km.build_supernova([1, 1, 1], [1, 0, 0])
D4 = km.build_supernova([1, 4], [0] * 5)
DELTA_D4 = (2, 1, 1, 1, 1)


def test_kpartite_shapes():
    assert INTERVAL.size == 2 and len(INTERVAL.edges) == 1
    assert TRIANGLE.size == 3 and len(TRIANGLE.edges) == 3
    assert len(km.build_kpartite([4]).edges) == 0
    with pytest.raises(km.GraphError):
        km.build_kpartite([2, 0])


def test_supernova_shapes():
    star = km.build_supernova([1, 3], [0, 0, 0, 0])
    assert star.size == 4 and len(star.graph.edges) == 3
    assert A2PP.size == 4 and len(A2PP.graph.edges) == 4
    assert km.build_supernova([1, 1], [0, 0]).size == 2
    with pytest.raises(km.GraphError):
        km.build_supernova([1, 1], [0, -1])


def test_form_examples():
    g = D4.graph
    assert km.cartan_form(g, (1, 0, 0, 0, 0), (1, 0, 0, 0, 0)) == 2
    assert km.cartan_form(g, DELTA_D4, DELTA_D4) == 0
    # A2++ in canonical order: triangle nodes (leg carrier first), then the foot
    d = (2, 2, 1, 1)
    assert km.cartan_form(A2PP.graph, d, d) == 0


def test_reflect_examples():
    assert km.reflect_root(TRIANGLE, 0, (1, 1, 1)) == (1, 1, 1)
    assert km.reflect_root(TRIANGLE, 0, (0, 1, 0)) == (1, 1, 0)


def test_reflect_param_leg_rule():
    g = km.build_supernova([1, 1], [3, 0]).graph
    # nodes: core0, core1, leg:0:1, leg:0:2, leg:0:3; leg:0:2 sits between leg:0:1 and leg:0:3
    lam = tuple(Fraction(x) for x in (1, 2, 3, 5, 7))
    i = g.index("leg:0:2")
    out = km.reflect_param(g, i, lam)
    assert out[g.index("leg:0:1")] == 3 + 5
    assert out[i] == -5
    assert out[g.index("leg:0:3")] == 7 + 5
    assert km.reflect_param(g, 0, (0, 1, 1, 1, 1)) == (0, 1, 1, 1, 1)


def test_classify_examples():
    for i in range(4):
        e = tuple(int(k == i) for k in range(4))
        rc = km.classify_root(A2PP.graph, e)
        assert rc.kind == "real" and rc.sign == 1
    assert km.classify_root(TRIANGLE, (1, 1, 1)).kind == "imaginary"
    assert km.classify_root(INTERVAL, (2, 1)).kind == "not-a-root"
    assert km.classify_root(TRIANGLE, (-1, -1, -1)).sign == -1
    with pytest.raises(km.GraphError):
        km.classify_root(TRIANGLE, (0, 0, 0))


def test_delta_examples():
    assert km.delta_dim(D4.graph, DELTA_D4) == 2
    assert km.delta_dim(D4.graph, (0, 1, 0, 0, 0)) == 0


def _brute_roots(graph, bound: int, depth: int = 8):
    """Positive real roots with entries <= bound, reached from simple roots by reflections."""
    roots = set()
    frontier = {tuple(int(k == i) for k in range(graph.size)) for i in range(graph.size)}
    for _ in range(depth):
        roots |= frontier
        nxt = set()
        for b in frontier:
            for i in range(graph.size):
                r = km.reflect_root(graph, i, b)
                if all(x >= 0 for x in r) and max(r) <= bound and r not in roots:
                    nxt.add(r)
        frontier = nxt
    return roots


def test_classify_matches_orbit_enumeration_on_finite_type():
    # A3 is finite type: every root is real and reachable from a simple root.
    g = km.build_supernova([1, 1], [1, 1]).graph
    real = _brute_roots(g, 3)
    for b in product(range(3), repeat=g.size):
        if any(b):
            assert km.classify_root(g, b).is_root == (b in real)


vectors = st.lists(st.integers(-3, 3), min_size=4, max_size=4).map(tuple)
nodes = st.integers(0, 3)


@given(vectors, nodes)
def test_reflection_is_involution(b, i):
    g = A2PP.graph
    assert km.reflect_root(g, i, km.reflect_root(g, i, b)) == b


@given(vectors, vectors, nodes)
def test_reflection_preserves_form(u, v, i):
    g = A2PP.graph
    assert km.cartan_form(g, km.reflect_root(g, i, u), km.reflect_root(g, i, v)) == km.cartan_form(g, u, v)


@given(vectors, st.lists(st.fractions(-5, 5, max_denominator=7), min_size=4, max_size=4), nodes)
def test_reflection_preserves_pairing(d, lam, i):
    g = A2PP.graph
    assert km.pairing(km.reflect_param(g, i, lam), km.reflect_root(g, i, d)) == km.pairing(lam, d)


@given(st.sampled_from([(0, 1), (0, 2), (1, 2), (0, 3)]), vectors)
def test_braid_relations(pair, b):
    g = A2PP.graph
    i, j = pair
    adjacent = km.cartan_form(g, tuple(int(k == i) for k in range(4)), tuple(int(k == j) for k in range(4))) == -1
    word = [i, j, i] if adjacent else [i, j]
    other = [j, i, j] if adjacent else [j, i]
    assert km.apply_word(g, word, b) == km.apply_word(g, other, b)


@settings(max_examples=60)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=4).map(tuple))
def test_classify_is_weyl_invariant(b):
    g = A2PP.graph
    if not any(b):
        return
    rc = km.classify_root(g, b)
    for i in range(4):
        r = km.reflect_root(g, i, b)
        if r == tuple(-x for x in b):
            continue
        if any(r) and (all(x >= 0 for x in r) or all(x <= 0 for x in r)):
            assert km.classify_root(g, r).is_root == rc.is_root


def _generic_d4_lam():
    feet = [Fraction(1), Fraction(1, 2), Fraction(1, 3), Fraction(1, 5)]
    return (-sum(feet) / 2, *feet)


def test_ds_documented_instances():
    g = D4.graph
    lam = _generic_d4_lam()
    assert km.pairing(lam, DELTA_D4) == 0
    v = km.ds_exists(g, lam, DELTA_D4)
    assert v.status == "nonempty"
    v = km.ds_exists(g, lam, (3, 0, 0, 0, 0))
    assert v.status == "empty" and v.reason == "not a root"
    v = km.ds_exists(g, lam, tuple(2 * x for x in DELTA_D4))
    assert v.status == "empty"
    assert v.decomposition == (DELTA_D4, DELTA_D4)
    assert (v.delta, v.delta_sum) == (2, 4)


def test_ds_rejects_nonorthogonal_lambda():
    v = km.ds_exists(D4.graph, (1, 0, 0, 0, 0), DELTA_D4)
    assert v.status == "empty"


def test_ds_budget():
    v = km.ds_exists(D4.graph, (0,) * 5, tuple(3 * x for x in DELTA_D4), budget=5)
    assert v.status == "budget-exceeded"


def test_weyl_orbit_depth():
    lam = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 7), Fraction(-38, 21))
    d = (2, 2, 1, 1)
    assert km.pairing(lam, d) == 0
    assert len(km.weyl_orbit(A2PP.graph, lam, d, 0)) == 1
    found = {e.d: e.word for e in km.weyl_orbit(A2PP.graph, lam, d, 3)}
    assert found[(1, 1, 1, 0)] == (1, 0, 3)


def test_lax_readings_d4():
    sg = km.build_supernova([3, 1], [0, 0, 0, 1])
    rs = km.lax_readings(sg, (1, 1, 1, 2, 1))
    assert sorted(r.rank for r in rs) == [2, 3, 5]
    by_rank = {r.rank: r for r in rs}
    assert by_rank[2].finite_poles == 3 and by_rank[2].infinity_order == 1
    assert by_rank[3].finite_poles == 1 and by_rank[3].infinity_order == 2
    assert by_rank[5].finite_poles == 0 and by_rank[5].infinity_order == 3


def test_single_part_core_has_one_reading():
    sg = km.build_supernova([2], [1, 0])
    assert len(km.lax_readings(sg, (1, 1, 1))) == 1


def test_cartan_matrix_symmetric():
    c = A2PP.graph.cartan()
    assert np.array_equal(c, c.T) and np.all(np.diag(c) == 2)
