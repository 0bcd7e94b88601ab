import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_expected_stats, oracle_loglik, oracle_prob
from smallergm import AttributeTable, graph_from_edges, parse_formula
from smallergm.graph import graph_index_decode
from smallergm.likelihood import (
    build_pooled,
    gradient_pooled,
    hessian_pooled,
    log_kappa,
    loglik_pooled,
    loglik_surface,
    stat_distribution,
)
from smallergm.tables import build_table


def edges_table(n):
    return build_table(n, True, parse_formula("edges"))


def test_log_kappa_values():
    assert log_kappa([0.0], edges_table(3)) == pytest.approx(math.log(64), abs=1e-14)
    assert log_kappa([1.0], edges_table(3)) == pytest.approx(6 * math.log1p(math.e), abs=1e-12)
    assert log_kappa([0.0], edges_table(4)) == pytest.approx(math.log(4096), abs=1e-12)


def test_log_kappa_dimension():
    with pytest.raises(ValueError):
        log_kappa([0.0, 1.0], edges_table(3))


def test_log_kappa_extreme_theta_finite():
    assert np.isfinite(log_kappa([1e5], edges_table(4)))
    assert np.isfinite(log_kappa([-1e5], edges_table(4)))


def test_single_empty_graph(cache):
    d = build_pooled([(graph_from_edges(3, True, []), None)], parse_formula("edges"), cache)
    assert loglik_pooled([0.0], d) == pytest.approx(-math.log(64), abs=1e-14)


def test_two_networks_at_zero(cache):
    m = parse_formula("edges")
    d = build_pooled([(graph_index_decode(7, 4, True), None),
                      (graph_index_decode(511, 4, True), None)], m, cache)
    assert loglik_pooled([0.0], d) == pytest.approx(-2 * math.log(4096), abs=1e-12)


def test_fivenets_style_matches_bruteforce(cache):
    m = parse_formula("edges + nodematch(gender)")
    rng = np.random.default_rng(3)
    sample, osample = [], []
    for _ in range(3):
        g = graph_index_decode(int(rng.integers(0, 4096)), 4, True)
        gender = rng.integers(0, 2, 4).tolist()
        sample.append((g, AttributeTable(4, {"gender": gender})))
        osample.append((g.adjacency().tolist(), {"gender": gender}))
    theta = [-2.0, 2.0]
    # product of per-graph probabilities from direct enumeration
    ll = 0.0
    for (g, _), (adj, attrs) in zip(sample, osample):
        adjs, p = oracle_prob(theta, m, attrs, 4, True)
        ll += math.log(p[adjs.index(adj)])
    assert loglik_pooled(theta, build_pooled(sample, m, cache)) == pytest.approx(ll, abs=1e-10)


def test_gradient_symmetry(cache):
    d = build_pooled([(graph_index_decode(63, 4, True), None)], parse_formula("edges"), cache)
    assert gradient_pooled([0.0], d)[0] == pytest.approx(0.0, abs=1e-12)


def test_hessian_bernoulli(cache):
    d = build_pooled([(graph_index_decode(63, 4, True), None)], parse_formula("edges"), cache)
    h = hessian_pooled([0.0], d)
    assert h.shape == (1, 1) and h[0, 0] == pytest.approx(-3.0, abs=1e-12)


def _mixed_sample(rng, cache, m, count=4):
    sample, osample = [], []
    for _ in range(count):
        n = int(rng.integers(3, 5))
        code = int(rng.integers(0, 1 << (n * (n - 1))))
        g = graph_index_decode(code, n, True)
        sample.append((g, None))
        osample.append((g.adjacency().tolist(), None))
    return build_pooled(sample, m, cache), osample


def test_loglik_gradient_vs_oracle(cache):
    m = parse_formula("edges + ttriad + mutual")
    rng = np.random.default_rng(7)
    d, osample = _mixed_sample(rng, cache, m)
    for _ in range(5):
        theta = rng.uniform(-1.5, 1.5, 3)
        assert loglik_pooled(theta, d) == pytest.approx(oracle_loglik(theta, m, osample), abs=1e-10)
        np.testing.assert_allclose(gradient_pooled(theta, d),
                                   oracle_expected_stats(theta, m, osample), atol=1e-8)


def _fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_gradient_and_hessian_finite_differences(cache):
    m = parse_formula("edges + ttriad")
    rng = np.random.default_rng(11)
    d, _ = _mixed_sample(rng, cache, m, 6)
    for _ in range(10):
        theta = rng.uniform(-3, 3, 2)
        g = gradient_pooled(theta, d)
        fd = _fd_grad(lambda t: loglik_pooled(t, d), theta)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(g).max()))
        h = hessian_pooled(theta, d)
        fdh = np.column_stack([_fd_grad(lambda t: gradient_pooled(t, d)[j], theta)
                               for j in range(2)])
        np.testing.assert_allclose(h, fdh, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(h).max()))
        assert np.array_equal(h, h.T)
        assert np.all(np.linalg.eigvalsh(h) <= 1e-9 * max(1.0, np.abs(h).max()))


def test_stat_distribution_uniform_edges():
    dist = stat_distribution([0.0], edges_table(4), 0)
    assert dist.values.tolist() == list(range(13))
    np.testing.assert_allclose(dist.probs, [math.comb(12, k) / 4096 for k in range(13)],
                               atol=1e-15)
    assert dist.cdf[-1] == pytest.approx(1.0)


def test_stat_distribution_constrained():
    t = build_table(4, True, parse_formula("edges + constraint(edges >= 5)"))
    dist = stat_distribution([0.3], t, 0)
    assert dist.cdf_at(4) == 0.0
    assert np.all(np.diff(dist.cdf) >= 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_stat_distribution_normalized(theta):
    t = build_table(4, True, parse_formula("edges + ttriad"))
    for j in range(2):
        dist = stat_distribution(theta, t, j)
        assert abs(dist.probs.sum() - 1) < 1e-12


def test_surface_max_at_mle(cache):
    attrs = AttributeTable(4, {"g": [0, 1, 2, 3]})  # nodematch is always 0
    m = parse_formula("edges + nodematch(g)")
    d = build_pooled([(graph_index_decode(63, 4, True), attrs)], m, cache)
    grid = np.linspace(-2, 2, 41)
    surf = loglik_surface(d, [0.0, 0.0], 0, 1, grid, [0.0, 1.0])
    assert surf[:, 0].argmax() == 20
    # 6 of 12 ties: symmetric under theta -> -theta
    np.testing.assert_allclose(surf[:, 0], surf[::-1, 0], atol=1e-12)
    assert surf.max() <= loglik_pooled([0.0, 0.0], d) + 1e-12


def test_surface_offset_shift(cache):
    g = graph_index_decode(100, 4, True)
    m1 = parse_formula("edges + ttriad")
    m2 = parse_formula("edges + ttriad + offset(scale(edges, 0))")
    d1 = build_pooled([(g, None)], m1, cache)
    d2 = build_pooled([(g, None)], m2, cache)
    grid = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(loglik_surface(d1, [0, 0], 0, 1, grid, grid),
                               loglik_surface(d2, [0, 0], 0, 1, grid, grid), atol=1e-12)


def test_size_offset_finite(cache):
    g = graph_index_decode(100, 4, True)
    m = parse_formula("edges + offset(edges * log(1/n))")
    d = build_pooled([(g, None)], m, cache)
    assert np.isfinite(loglik_pooled([0.5], d))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0, 1))
def test_log_kappa_convex(a, b, lam):
    t = build_table(4, True, parse_formula("edges + ttriad"))
    a, b = np.array(a), np.array(b)
    mid = log_kappa(lam * a + (1 - lam) * b, t)
    assert mid <= lam * log_kappa(a, t) + (1 - lam) * log_kappa(b, t) + 1e-9


def test_constraint_never_increases_kappa():
    t1 = build_table(4, True, parse_formula("edges + ttriad"))
    t2 = build_table(4, True, parse_formula("edges + ttriad + constraint(edges >= 5)"))
    for theta in ([0, 0], [1, -1], [-2, 0.5]):
        assert log_kappa(theta, t2) <= log_kappa(theta, t1)


def test_violating_observation_rejected(cache):
    g = graph_from_edges(4, True, [(0, 1)])
    with pytest.raises(ValueError, match="constraint"):
        build_pooled([(g, None)], parse_formula("edges + constraint(edges >= 5)"), cache)


def test_collapsed_equals_uncollapsed_n3(cache):
    m = parse_formula("edges + mutual + ttriad")
    theta = np.array([0.4, -0.7, 0.2])
    adjs, p = oracle_prob(theta, m, None, 3, True)
    for k in (0, 17, 63):
        d = build_pooled([(graph_index_decode(k, 3, True), None)], m, cache)
        assert loglik_pooled(theta, d) == pytest.approx(math.log(p[k]), abs=1e-12)
