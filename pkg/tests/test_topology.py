import itertools

import pytest
from hypothesis import given, strategies as st

from domkl.errors import ConfigurationError, InputError
from domkl.topology import Topology, is_acyclic, neighbors, preset, single_learner

from oracles import has_cycle

EXAMPLE = [(1, 2), (1, 3), (1, 4), (2, 5), (3, 4)]


def test_example_graph_neighbors():
    topo = Topology(5, EXAMPLE)
    assert neighbors(topo, 1) == {2, 3, 4}
    assert neighbors(topo, 5) == {2}


def test_example_graph_has_cycle():
    topo = Topology(5, EXAMPLE)
    assert has_cycle(5, EXAMPLE)
    assert not is_acyclic(topo)


def test_small_cases():
    assert neighbors(preset("complete", 3), 1) == {2, 3}
    path = Topology(3, [(1, 2), (2, 3)])
    assert neighbors(path, 2) == {1, 3}
    assert is_acyclic(path)
    assert not is_acyclic(Topology(3, [(1, 2), (2, 3), (1, 3)]))


def test_presets():
    assert preset("star", 5).edges == {(1, 2), (1, 3), (1, 4), (1, 5)}
    assert preset("ring", 3).edges == {(1, 2), (2, 3), (1, 3)}
    assert preset("path", 3).edges == {(1, 2), (2, 3)}
    assert preset("ring", 5).degree(1) == 2
    assert len(preset("complete", 6).edges) == 15


@pytest.mark.parametrize("J", [0, 1, -3])
def test_preset_needs_two_learners(J):
    with pytest.raises(ConfigurationError):
        preset("ring", J)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset("torus", 4)


@pytest.mark.parametrize("edges", [[(1, 1)], [(1, 2), (2, 1)], [(1, 4)], [(0, 1)]])
def test_invalid_edges(edges):
    with pytest.raises(ConfigurationError):
        Topology(3, edges)


def test_disconnected_graph_rejected():
    with pytest.raises(ConfigurationError):
        Topology(4, [(1, 2), (3, 4)])


def test_out_of_range_neighbor_query():
    topo = preset("path", 3)
    with pytest.raises(InputError):
        topo.neighbors(4)
    with pytest.raises(InputError):
        topo.neighbors(0)


def test_single_learner():
    topo = single_learner()
    assert topo.neighbors(1) == set()
    assert topo.is_acyclic()


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 7))
    # random spanning tree plus random extra edges
    edges = set()
    for v in range(2, n + 1):
        u = draw(st.integers(1, v - 1))
        edges.add((u, v))
    extra = draw(st.lists(st.sampled_from(list(itertools.combinations(range(1, n + 1), 2))), max_size=4))
    edges.update(extra)
    return n, sorted(edges)


@given(connected_graphs())
def test_acyclic_matches_dfs_oracle(graph):
    n, edges = graph
    assert Topology(n, edges).is_acyclic() == (not has_cycle(n, edges))


@given(connected_graphs())
def test_neighbor_relation_is_symmetric(graph):
    n, edges = graph
    topo = Topology(n, edges)
    for j in range(1, n + 1):
        for i in topo.neighbors(j):
            assert j in topo.neighbors(i)
    assert sum(topo.degree(j) for j in range(1, n + 1)) == 2 * len(edges)
