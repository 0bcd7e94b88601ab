import json
import math

import numpy as np
import pytest
from scipy import stats

from smallergm import parse_formula
from smallergm.graph import graph_from_edges, graph_index_decode
from smallergm.likelihood import build_pooled
from smallergm.simulation import (
    StudyConfig,
    StudyResult,
    boundary_filter,
    regenerate_fivenets,
    run_sim_study,
    sample_graphs,
)
from smallergm.estimation import check_boundary, INTERIOR
from smallergm.tables import GraphLocator


EDGES = parse_formula("edges")


def test_uniform_edges(cache):
    gs = sample_graphs([0.0], EDGES, 4, None, 10000, 1, cache)
    assert abs(np.mean([g.tie_count for g in gs]) - 6) < 0.15


def test_logistic_mean(cache):
    gs = sample_graphs([-2.0], EDGES, 4, None, 10000, 2, cache)
    p = 1 / (1 + math.exp(2))
    se = math.sqrt(12 * p * (1 - p) / 10000)
    assert abs(np.mean([g.tie_count for g in gs]) - 12 * p) < 4 * se


def test_constraint_truncation(cache):
    m = parse_formula("edges + constraint(edges >= 5)")
    gs = sample_graphs([-1.0], m, 4, None, 5000, 3, cache)
    assert min(g.tie_count for g in gs) >= 5


def test_rejects_bad_theta(cache):
    with pytest.raises(ValueError):
        sample_graphs([np.inf], EDGES, 4, None, 1, 0, cache)
    with pytest.raises(ValueError):
        sample_graphs([0.0, 1.0], EDGES, 4, None, 1, 0, cache)
    with pytest.raises(ValueError):
        sample_graphs([0.0], EDGES, 7, None, 1, 0, cache)


def test_seed_determinism(cache):
    a = sample_graphs([0.3], EDGES, 4, None, 50, 9, cache)
    b = sample_graphs([0.3], EDGES, 4, None, 50, 9, cache)
    assert a == b


def test_row_conditional_uniformity(cache):
    # condition on the most populous (edges, ttriad) row at n = 4
    m = parse_formula("edges + ttriad")
    t = cache.get(4, True, m)
    loc = GraphLocator(t, m)
    r = int(np.argmax(t.W))
    w = int(t.W[r])
    rng = np.random.default_rng(5)
    draws = loc.locate(np.full(40 * w, r), rng.integers(0, w, 40 * w))
    _, counts = np.unique(draws, return_counts=True)
    assert len(counts) == w
    assert stats.chisquare(counts).pvalue > 0.001


def test_fivenets_shape(cache):
    sample, table = regenerate_fivenets(seed=1, cache=cache)
    assert len(sample) == 5 and table.shape == (5, 3)
    assert table[:, 0].tolist() == [1, 2, 3, 4, 5]
    assert np.all(table[:, 2] <= table[:, 1])
    for g, a in sample:
        assert g.n == 4 and set(a["gender"]) <= {0.0, 1.0}


def test_boundary_filter_rules(cache):
    m = parse_formula("edges + ttriad")
    full = graph_index_decode((1 << 12) - 1, 4, True)
    assert not boundary_filter(build_pooled([(full, None)] * 3, m, cache))
    ring = graph_from_edges(4, True, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert not boundary_filter(build_pooled([(ring, None)] * 2, m, cache))
    tri = graph_from_edges(4, True, [(0, 1), (1, 2), (0, 2)])
    d = build_pooled([(full, None), (tri, None), (ring, None)], m, cache)
    assert boundary_filter(d)
    assert boundary_filter(d) == all(f == INTERIOR for f in check_boundary(d))


def test_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(sample_sizes=())
    with pytest.raises(ValueError):
        StudyConfig(level=1.5)
    with pytest.raises(ValueError):
        StudyConfig(theta_range=(2, 1))
    cfg = StudyConfig.typeI()
    assert cfg.gen_model == "edges" and cfg.sample_sizes == (5, 10, 15, 20, 30, 50, 100)
    assert StudyConfig().sample_sizes == (5, 10, 30, 50, 100, 150, 200, 300)


def test_config_file_roundtrip(tmp_path):
    cfg = StudyConfig(replications=7, sample_sizes=(5, 10), stratify_bins=True)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert StudyConfig.from_file(p) == cfg


def test_stratified_cells():
    cfg = StudyConfig(replications=36, sample_sizes=(5, 10), stratify_bins=True)
    cells = cfg.cells()
    assert len(set(cells)) == 2 * 3 * 2
    assert all(cells.count(c) == 3 for c in set(cells))


def small_config(**kw):
    kw.setdefault("replications", 12)
    kw.setdefault("sample_sizes", (5, 10))
    return StudyConfig(**kw)


def test_study_determinism(cache):
    a = run_sim_study(small_config(seed=4), cache=cache)
    b = run_sim_study(small_config(seed=4), cache=cache)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "elapsed"} for r in rs]  # noqa: E731
    assert strip(a.records) == strip(b.records)


def test_study_resume(tmp_path, cache):
    ck = tmp_path / "records.jsonl"
    full = run_sim_study(small_config(seed=6), cache=cache)
    partial = small_config(seed=6, replications=12)
    run_sim_study(partial, checkpoint=ck, cache=cache)
    lines = ck.read_text().splitlines()
    ck.write_text("\n".join(lines[:5]) + "\n" + lines[5][:10])  # truncated tail
    resumed = run_sim_study(partial, checkpoint=ck, cache=cache)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "elapsed"} for r in rs]  # noqa: E731
    assert strip(resumed.records) == strip(full.records)
    with pytest.raises(ValueError, match="different study config"):
        run_sim_study(small_config(seed=7), checkpoint=ck, cache=cache)


def test_failures_recorded(cache, monkeypatch):
    from smallergm import simulation

    orig = simulation._Runner.run_one

    def flaky(self, i, *args):
        if i == 3:
            raise RuntimeError("boom")
        return orig(self, i, *args)

    monkeypatch.setattr(simulation._Runner, "run_one", flaky)
    res = run_sim_study(small_config(), cache=cache)
    assert len(res.records) == 12
    assert res.records[3]["status"] == "error" and "boom" in res.records[3]["error"]
    assert res.counts()["errors"] == 1


def test_aggregates_recomputable(cache):
    res = run_sim_study(small_config(replications=30, seed=2), cache=cache)
    again = StudyResult(res.config, [json.loads(line) for line in res.to_jsonl().splitlines()])
    assert again.bias() == res.bias()
    assert again.power() == res.power()
    csv_text = res.aggregate_csv()
    assert csv_text.splitlines()[0].startswith("metric,term")
    for r in res.kept():
        assert r["kept"] and r["status"] == "00"


def test_typeI_rows(cache):
    res = run_sim_study(StudyConfig.typeI(replications=10, sample_sizes=(10,)), cache=cache)
    rows = res.typeI()
    assert rows and rows[0]["term"] == "ttriad" and 0 <= rows[0]["rate"] <= 1


def test_workers_match_serial(tmp_path, cache):
    cfg = small_config(replications=6, seed=11)
    a = run_sim_study(cfg, cache=cache)
    b = run_sim_study(cfg, checkpoint=tmp_path / "w.jsonl", workers=2)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "elapsed"} for r in rs]  # noqa: E731
    assert strip(a.records) == strip(b.records)
