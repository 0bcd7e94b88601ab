import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_adjacencies
from smallergm.graph import (
    MAX_NODES_DIRECTED,
    MAX_NODES_UNDIRECTED,
    AttributeTable,
    Graph,
    cells,
    enumerate_support,
    graph_from_adjacency,
    graph_from_edges,
    graph_index_decode,
    graph_index_encode,
    index_chunks,
    n_cells,
    partition,
    support_size,
)


def test_empty_and_complete():
    assert graph_from_edges(3, True, []).tie_count == 0
    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    g = graph_from_edges(3, True, pairs)
    assert g.tie_count == 6
    assert g.code == (1 << 6) - 1


def test_mutual_dyad():
    g = graph_from_edges(4, True, [(0, 1), (1, 0)])
    assert g.has_tie(0, 1) and g.has_tie(1, 0) and g.tie_count == 2


def test_rejects_self_tie_and_range():
    with pytest.raises(ValueError, match="self"):
        graph_from_edges(3, True, [(1, 1)])
    with pytest.raises(ValueError):
        graph_from_edges(3, True, [(0, 3)])


def test_size_bound_message():
    with pytest.raises(ValueError, match=str(MAX_NODES_DIRECTED)):
        graph_from_edges(MAX_NODES_DIRECTED + 1, True, [])
    with pytest.raises(ValueError, match=str(MAX_NODES_UNDIRECTED)):
        graph_from_edges(MAX_NODES_UNDIRECTED + 1, False, [])
    graph_from_edges(MAX_NODES_UNDIRECTED, False, [])


def test_undirected_normalization_and_duplicates():
    g = graph_from_edges(4, False, [(2, 1), (1, 2), (0, 3)])
    assert g.ties() == [(0, 3), (1, 2)]
    assert g.has_tie(2, 1)


def test_decode_extremes():
    m = n_cells(4, True)
    assert graph_index_decode(0, 4, True).tie_count == 0
    assert graph_index_decode((1 << m) - 1, 4, True).tie_count == m
    with pytest.raises(ValueError):
        graph_index_decode(1 << m, 4, True)
    with pytest.raises(ValueError):
        graph_index_decode(-1, 4, True)


def test_n3_support_distinct():
    gs = {graph_index_decode(k, 3, True).ties().__repr__() for k in range(64)}
    assert len(gs) == 64


def test_cell_order():
    assert cells(3, True) == ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))
    assert cells(4, False) == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def test_codes_match_oracle_enumeration():
    for directed in (True, False):
        for k, adj in enumerate(all_adjacencies(3, directed)):
            assert graph_from_adjacency(np.array(adj), directed).code == k


@pytest.mark.parametrize("n,directed,size", [(4, True, 4096), (5, True, 1 << 20),
                                             (8, False, 1 << 28), (6, True, 1 << 30)])
def test_support_size(n, directed, size):
    assert support_size(n, directed) == size


def test_enumerate_counts_small():
    assert sum(1 for _ in enumerate_support(4, True)) == 4096
    assert sum(len(c) for c in index_chunks(5, True, chunk_size=1 << 15)) == 1 << 20


def test_enumeration_increasing():
    codes = [g.code for g in enumerate_support(3, False)]
    assert codes == list(range(8))


@given(st.integers(1, 1 << 20), st.integers(1, 9))
def test_partition_covers(total, parts):
    ranges = partition(total, parts)
    assert ranges[0][0] == 0 and ranges[-1][1] == total
    for (a, b), (c, d) in zip(ranges, ranges[1:]):
        assert b == c
    assert sum(b - a for a, b in ranges) == total


def test_parallel_chunks_same_multiset():
    serial = np.concatenate(list(index_chunks(4, True)))
    parts = [np.concatenate(list(index_chunks(4, True, chunk_size=100, start=a, stop=b)))
             for a, b in partition(4096, 3)]
    assert np.array_equal(np.sort(np.concatenate(parts)), serial)


@settings(max_examples=200)
@given(st.data())
def test_roundtrip(data):
    directed = data.draw(st.booleans())
    n = data.draw(st.integers(1, 6 if directed else 8))
    m = n_cells(n, directed)
    k = data.draw(st.integers(0, (1 << m) - 1))
    g = graph_index_decode(k, n, directed)
    assert graph_index_encode(g) == k
    assert graph_from_edges(n, directed, g.ties()) == g
    assert graph_from_adjacency(g.adjacency(), directed) == g


def test_adjacency_import_validation():
    with pytest.raises(ValueError):
        graph_from_adjacency(np.eye(3, dtype=int))
    with pytest.raises(ValueError):
        graph_from_adjacency(np.array([[0, 1], [0, 0]]), directed=False)
    with pytest.raises(ValueError):
        graph_from_adjacency(np.array([[0, 2], [0, 0]]))


def test_attribute_table():
    a = AttributeTable(3, {"x": [1, 2, 3]})
    assert a["x"].dtype == np.float64
    with pytest.raises(ValueError):
        a["x"][0] = 5
    with pytest.raises(ValueError, match="3"):
        AttributeTable(3, {"x": [1, 2]})
    with pytest.raises(ValueError):
        AttributeTable(2, {"x": [1, float("nan")]})
    assert AttributeTable(3, {"x": [1, 2, 3]}) == a
    assert hash(AttributeTable(3, {"x": [1, 2, 3]})) == hash(a)


def test_graph_code_range():
    with pytest.raises(ValueError):
        Graph(3, True, 1 << 6)
