from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popgraph import graph as G


def brute_expansion(g: G.Graph) -> Fraction:
    """Independent oracle: loop over subsets with Python sets."""
    best = None
    nodes = range(g.n)
    for size in range(1, g.n // 2 + 1):
        for S in itertools.combinations(nodes, size):
            s = set(S)
            cut = sum(1 for u, v in g.edges if (u in s) != (v in s))
            val = Fraction(cut, size)
            best = val if best is None or val < best else best
    return best


def test_cycle_edges():
    assert G.generate("cycle", n=4).edges == ((0, 1), (0, 3), (1, 2), (2, 3))


@pytest.mark.parametrize("family,params,n,m,deg", [
    ("hypercube", {"dim": 3}, 8, 12, 3),
    ("complete-bipartite", {"r": 3}, 6, 9, 3),
    ("clique", {"n": 5}, 5, 10, 4),
    ("torus", {"side": 3, "dims": 2}, 9, 18, 4),
    ("torus", {"side": 4, "dims": 3}, 64, 192, 6),
    ("cycle", {"n": 7}, 7, 7, 2),
])
def test_regular_families(family, params, n, m, deg):
    g = G.generate(family, **params)
    assert (g.n, g.m) == (n, m)
    assert set(g.degrees) == {deg}
    assert G.metrics(g, mode="spectral").is_regular


def test_star_and_path_are_not_regular():
    s = G.generate("star", leaves=4)
    assert (s.n, s.m) == (5, 4)
    mt = G.metrics(s)
    assert not mt.is_regular and mt.conductance is None
    assert not G.metrics(G.generate("path", n=5)).is_regular


@pytest.mark.parametrize("family,params", [
    ("hypercube", {"dim": 0}), ("torus", {"side": 2}), ("cycle", {"n": 2}), ("clique", {"n": 1}),
    ("random-regular", {"n": 5, "d": 3}), ("random-regular", {"n": 4, "d": 4}), ("nosuch", {"n": 3}),
])
def test_invalid_parameters(family, params):
    with pytest.raises(G.GraphError):
        G.generate(family, **params)


def test_missing_parameter():
    with pytest.raises(G.GraphError, match="missing"):
        G.generate("cycle")


def test_construction_validation():
    with pytest.raises(G.GraphError, match="self-loop"):
        G.Graph.from_edges(3, [(0, 0), (0, 1), (1, 2)])
    with pytest.raises(G.GraphError, match="parallel"):
        G.Graph.from_edges(3, [(0, 1), (1, 0), (1, 2)])
    with pytest.raises(G.GraphError, match="connected"):
        G.Graph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(G.GraphError, match="range"):
        G.Graph.from_edges(2, [(0, 2)])


def test_adjacency_consistent():
    g = G.generate("random-regular", n=20, d=3, seed=4)
    assert sum(g.degrees) == 2 * g.m
    for u, v in g.edges:
        assert u < v and v in g.adjacency[u] and u in g.adjacency[v]
    assert list(g.edges) == sorted(g.edges)


def test_random_regular_deterministic():
    a = G.generate("random-regular", n=30, d=4, seed=11)
    b = G.generate("random-regular", n=30, d=4, seed=11)
    c = G.generate("random-regular", n=30, d=4, seed=12)
    assert a.edges == b.edges
    assert a.edges != c.edges
    assert set(a.degrees) == {4}


@pytest.mark.parametrize("g,beta", [
    (G.generate("cycle", n=4), Fraction(1)),
    (G.generate("clique", n=4), Fraction(2)),
    (G.generate("complete-bipartite", r=2), Fraction(1)),
])
def test_exact_expansion_examples(g, beta):
    assert G.edge_expansion(g, "exact") == beta


@pytest.mark.parametrize("g", [
    G.generate("cycle", n=9), G.generate("hypercube", dim=3), G.generate("star", leaves=5),
    G.generate("path", n=7), G.generate("complete-bipartite", r=3), G.generate("random-regular", n=10, d=3, seed=2),
])
def test_exact_expansion_matches_bruteforce(g):
    assert G.edge_expansion(g, "exact") == brute_expansion(g)


def test_exact_expansion_size_cap():
    with pytest.raises(G.GraphError):
        G.edge_expansion(G.generate("cycle", n=25), "exact")


@pytest.mark.parametrize("g", [G.generate("cycle", n=8), G.generate("hypercube", dim=3),
                               G.generate("clique", n=6), G.generate("torus", side=3)])
def test_expansion_invariant_under_relabeling(g):
    rng = np.random.default_rng(0)
    beta = G.edge_expansion(g, "exact")
    for _ in range(5):
        assert G.edge_expansion(G.relabel(g, rng.permutation(g.n)), "exact") == beta


@pytest.mark.parametrize("g", [G.generate("cycle", n=n) for n in (4, 8, 12, 16)]
                         + [G.generate("hypercube", dim=d) for d in (2, 3, 4)]
                         + [G.generate("clique", n=n) for n in (3, 6, 10)]
                         + [G.generate("random-regular", n=12, d=3, seed=s) for s in range(3)]
                         + [G.generate("complete-bipartite", r=4), G.generate("torus", side=4)])
def test_spectral_bound_below_exact(g):
    assert G.edge_expansion(g, "spectral") <= float(G.edge_expansion(g, "exact")) + 1e-12


@pytest.mark.parametrize("g", [G.generate("cycle", n=10), G.generate("hypercube", dim=3),
                               G.generate("random-regular", n=16, d=4, seed=1), G.generate("star", leaves=6)])
def test_sweep_cut_is_upper_bound(g):
    assert G.edge_expansion(g, "sweep") >= G.edge_expansion(g, "exact")


@pytest.mark.parametrize("g", [G.generate("clique", n=7), G.generate("cycle", n=11), G.generate("hypercube", dim=4),
                               G.generate("torus", side=4), G.generate("complete-bipartite", r=3),
                               G.generate("complete-bipartite", r=4)])
def test_closed_forms_match_enumeration(g):
    assert G.closed_form_expansion(g) == G.edge_expansion(g, "exact")


def test_expansion_for_large_graphs():
    assert G.expansion_for(G.generate("cycle", n=100)) == Fraction(2, 50)
    with pytest.raises(G.GraphError):
        G.expansion_for(G.generate("random-regular", n=40, d=3, seed=0))


@pytest.mark.parametrize("g,d", [(G.generate("clique", n=5), 1), (G.generate("cycle", n=8), 4),
                                 (G.generate("hypercube", dim=3), 3), (G.generate("path", n=6), 5),
                                 (G.generate("star", leaves=4), 2), (G.generate("torus", side=5), 4)])
def test_diameter(g, d):
    assert G.diameter(g) == d


def test_metrics_fields():
    mt = G.metrics(G.generate("clique", n=16))
    assert mt.edge_expansion == 8 and mt.degree_max == 15
    assert mt.conductance == Fraction(8, 15)
    assert mt.expansion_method == "exact-enumeration"
    assert 0 < mt.edge_expansion <= mt.degree_min
    assert G.metrics(G.generate("cycle", n=40)).expansion_method == "closed-form"


def test_nonregular_conditions_reported():
    # star: beta = 1, d_min = 1, avg < 2, d_min + d_max > 2 avg
    assert not G.metrics(G.generate("star", leaves=4)).nonregular_conditions


def test_serialization_roundtrip(tmp_path):
    g = G.generate("torus", side=3)
    G.dump_graph(g, tmp_path / "g.json")
    h = G.load_graph(tmp_path / "g.json")
    assert h.edges == g.edges and h.family == "torus"
    (tmp_path / "g.txt").write_text("# triangle\n0 1\n1 2\n\n2 0\n")
    t = G.load_graph(tmp_path / "g.txt")
    assert t.n == 3 and t.m == 3


def test_edge_list_rejects_garbage(tmp_path):
    (tmp_path / "bad.txt").write_text("0 1 2\n")
    with pytest.raises(G.GraphError):
        G.load_graph(tmp_path / "bad.txt")


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.data())
def test_random_connected_graph_invariants(n, data):
    # spanning tree plus random extra edges
    tree = [(data.draw(st.integers(0, v - 1)), v) for v in range(1, n)]
    extra = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=10))
    edges = {tuple(sorted(e)) for e in tree + [e for e in extra if e[0] != e[1]]}
    g = G.Graph.from_edges(n, sorted(edges))
    assert sum(g.degrees) == 2 * g.m
    beta = G.edge_expansion(g, "exact")
    assert 0 < beta <= min(g.degrees)
    assert beta == brute_expansion(g)
    assert 1 <= G.diameter(g) <= n - 1
