import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_adjacencies, oracle_model_stats, oracle_stats
from smallergm import AttributeTable, graph_from_adjacency, graph_from_edges, parse_formula
from smallergm.graph import graph_index_decode, n_cells
from smallergm.terms import ModelError, ModelSpec, TermSpec, eval_many, eval_offset, eval_stats

ALL_DIRECTED = ("edges + mutual + ttriad + fourcycle + nodematch(g) + nodeicov(x) "
                "+ nodeocov(x)")


def complete(n, directed=True):
    return graph_from_edges(n, directed, [(i, j) for i in range(n) for j in range(n) if i != j])


def test_complete_n4_values():
    g = complete(4)
    attrs = AttributeTable(4, {"gender": [0, 0, 1, 1]})
    m = parse_formula("edges + mutual + ttriad + nodematch(gender)")
    assert eval_stats(m, g, attrs).tolist() == [12, 6, 24, 4]


def test_size_indicator():
    # 6 ties, 2 transitive triples
    g = graph_from_edges(4, True, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 0), (1, 3)])
    m = parse_formula("edges + ttriad + edges * I(n == 5)")
    assert eval_stats(m, g).tolist() == [6, 2, 0]
    g5 = graph_from_edges(5, True, [(0, 1), (3, 4)])
    assert eval_stats(m, g5).tolist() == [2, 0, 2]


def test_sqrt_homophily():
    g = graph_from_edges(4, True, [(0, 1), (1, 0), (2, 3), (0, 2)])
    attrs = AttributeTable(4, {"gender": [0, 0, 1, 1]})
    m = parse_formula("nodematch(gender) + sqrt(nodematch(gender))")
    s = eval_stats(m, g, attrs)
    assert s[0] == 3 and s[1] == pytest.approx(math.sqrt(3), abs=1e-15)


def test_log_inverse_size():
    g = graph_from_edges(4, True, [(0, 1), (1, 2), (2, 3), (3, 0)])
    m = parse_formula("edges * log(1/n)")
    assert eval_stats(m, g)[0] == pytest.approx(-5.5452, abs=1e-4)


def test_offsets():
    m = parse_formula("edges + constraint(edges >= 5)")
    four = graph_from_edges(4, True, [(0, 1), (1, 2), (2, 3), (3, 0)])
    seven = graph_index_decode((1 << 7) - 1, 4, True)
    assert eval_offset(m, four) == -math.inf
    assert eval_offset(m, seven) == 0.0
    m2 = parse_formula("edges + offset(edges * log(1/n))")
    ten = graph_index_decode((1 << 10) - 1, 4, True)
    assert eval_offset(m2, ten) == pytest.approx(-13.8629, abs=1e-4)


def test_missing_attribute_named():
    with pytest.raises(ModelError, match="gender"):
        eval_stats(parse_formula("nodematch(gender)"), complete(3), None)


def test_sqrt_negative_rejected():
    attrs = AttributeTable(3, {"x": [-1, -1, -1]})
    with pytest.raises(ModelError):
        eval_stats(parse_formula("sqrt(nodeicov(x))"), complete(3), attrs)


def test_n3_all_terms_match_oracle():
    attrs = {"g": [0, 1, 0], "x": [0.5, 2.0, -1.0]}
    at = AttributeTable(3, attrs)
    m = parse_formula(ALL_DIRECTED)
    for adj in all_adjacencies(3, True):
        g = graph_from_adjacency(np.array(adj))
        assert eval_stats(m, g, at).tolist() == oracle_model_stats(m, adj, attrs)[0]


def test_undirected_terms_match_oracle():
    attrs = {"g": [0, 1, 0, 1]}
    m = parse_formula("edges + fourcycle + nodematch(g)", directed=False)
    at = AttributeTable(4, attrs)
    for adj in all_adjacencies(4, False):
        g = graph_from_adjacency(np.array(adj), directed=False)
        assert eval_stats(m, g, at).tolist() == oracle_model_stats(m, adj, attrs)[0]


def test_undirected_rejects_directed_terms():
    with pytest.raises(ValueError, match="directed"):
        parse_formula("edges + mutual", directed=False)
    with pytest.raises(ModelError):
        ModelSpec((TermSpec("ttriad"),), directed=False)


def test_empty_zero_and_complete_max():
    attrs = AttributeTable(4, {"g": [0, 1, 1, 0], "x": [1, 2, 3, 4]})
    m = parse_formula(ALL_DIRECTED)
    empty = eval_stats(m, graph_from_edges(4, True, []), attrs)
    assert np.all(empty == 0)
    full = eval_stats(m, complete(4), attrs)
    stats, _ = eval_many(m, [graph_index_decode(k, 4, True) for k in range(4096)], attrs)
    assert np.array_equal(full, stats.max(axis=0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 4095), st.permutations(range(12)))
def test_reencoding_invariance(code, order):
    g = graph_index_decode(code, 4, True)
    ties = g.ties()
    shuffled = [ties[i] for i in order if i < len(ties)]
    m = parse_formula(ALL_DIRECTED)
    attrs = AttributeTable(4, {"g": [0, 1, 1, 0], "x": [1, 2, 3, 4]})
    g2 = graph_from_adjacency(g.adjacency())
    g3 = graph_from_edges(4, True, shuffled + shuffled[:2])
    s = eval_stats(m, g, attrs)
    assert np.array_equal(s, eval_stats(m, g2, attrs))
    assert np.array_equal(s, eval_stats(m, g3, attrs))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, (1 << 6) - 1), st.lists(st.integers(-3, 3), min_size=4, max_size=4))
def test_icov_equals_ocov_on_symmetric(dyads, x):
    pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    ties = []
    for b, (i, j) in enumerate(pairs):
        if dyads >> b & 1:
            ties += [(i, j), (j, i)]
    g = graph_from_edges(4, True, ties)
    s = eval_stats(parse_formula("nodeicov(x) + nodeocov(x)"), g, AttributeTable(4, {"x": x}))
    assert s[0] == s[1]


def test_random_graphs_n4_match_oracle(rng):
    attrs = {"g": [0, 1, 1, 2], "x": [0.25, -1.5, 3.0, 2.0]}
    at = AttributeTable(4, attrs)
    m = parse_formula(ALL_DIRECTED + " + pow(edges, 2) + scale(ttriad, 0.5)")
    codes = rng.integers(0, 4096, size=300)
    stats, _ = eval_many(m, [graph_index_decode(int(c), 4, True) for c in codes], at)
    for c, row in zip(codes, stats):
        adj = graph_index_decode(int(c), 4, True).adjacency().tolist()
        assert row.tolist() == oracle_model_stats(m, adj, attrs)[0]


def test_fourcycle_conventions():
    g = complete(4, directed=False)
    assert eval_stats(parse_formula("fourcycle", directed=False), g)[0] == \
        oracle_stats(g.adjacency().tolist(), directed=False)["fourcycle"] == 24
    assert n_cells(4, False) == 6
