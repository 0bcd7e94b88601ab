"""Exact sampling from small-graph ERGMs and a Monte Carlo study harness.

Sampling is two-stage and exact: draw a table row with probability
proportional to ``W exp(Q theta + O)``, then draw one of the ``W`` graphs in
that row uniformly (all of them have the same probability).

Study replication ``i`` uses the random stream
``SeedSequence(seed, spawn_key=(i,))``, so any subset of replications can be
rerun or resumed independently.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estimation import INTERIOR, FitOptions, check_boundary, fit_pooled, standard_errors
from .formula import parse_formula
from .graph import AttributeTable, Graph, check_size
from .likelihood import PooledData, build_pooled, row_probabilities
from .tables import TableCache, default_cache
from .terms import ModelSpec, eval_many

log = logging.getLogger(__name__)

FIVENETS_FORMULA = "edges + nodematch(gender)"
FIVENETS_THETA = (-2.0, 2.0)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_graphs(theta, model: ModelSpec, n: int, attrs: AttributeTable | None = None,
                  count: int = 1, seed=None, cache: TableCache | None = None) -> list[Graph]:
    """Draw ``count`` i.i.d. graphs on ``n`` nodes from the model at ``theta``."""
    check_size(n, model.directed)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape[0] != model.k:
        raise ValueError(f"theta has length {theta.shape[0]}, model has {model.k} terms")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite to sample")
    cache = cache or default_cache()
    rng = _rng(seed)
    table = cache.get(n, model.directed, model, attrs)
    probs = row_probabilities(theta, table)
    rows = rng.choice(table.rows, size=count, p=probs)
    ranks = rng.integers(0, table.W.astype(np.int64)[rows])
    codes = cache.locator(n, model.directed, model, attrs).locate(rows, ranks)
    return [Graph(n, model.directed, int(c)) for c in codes]


def regenerate_fivenets(seed=None, cache: TableCache | None = None,
                        n_networks: int = 5, n: int = 4, theta=FIVENETS_THETA):
    """Five 4-node networks from ``edges + nodematch(gender)`` at ``(-2, 2)``.

    Gender is drawn Bernoulli(0.5) per node before each graph.  Returns the
    sample and its observed-statistics array (net id, edges, homophilic ties).
    """
    rng = _rng(seed)
    model = parse_formula(FIVENETS_FORMULA)
    sample = []
    for _ in range(n_networks):
        attrs = AttributeTable(n, {"gender": rng.integers(0, 2, size=n)})
        g = sample_graphs(theta, model, n, attrs, 1, rng, cache)[0]
        sample.append((g, attrs))
    stats = np.array([eval_many(model, [g], a)[0][0] for g, a in sample])
    table = np.column_stack([np.arange(1, n_networks + 1), stats]).astype(int)
    return sample, table


def boundary_filter(data: PooledData) -> bool:
    """Keep a sample only if every coordinate is interior."""
    return all(f == INTERIOR for f in check_boundary(data))


# --- study harness -------------------------------------------------------------------


@dataclass
class StudyConfig:
    replications: int = 500
    gen_model: str = "edges + ttriad"
    fit_model: str = "edges + ttriad"
    sample_sizes: tuple = (5, 10, 30, 50, 100, 150, 200, 300)
    node_sizes: tuple = (4, 5)
    theta_range: tuple = (0.1, 2.0)
    effect_bins: tuple = ((0.1, 0.5), (0.5, 1.0), (1.0, 2.0))
    stratify_bins: bool = False
    level: float = 0.05
    seed: int = 0
    directed: bool = True

    def __post_init__(self):
        self.sample_sizes = tuple(int(s) for s in self.sample_sizes)
        self.node_sizes = tuple(int(s) for s in self.node_sizes)
        self.theta_range = tuple(float(x) for x in self.theta_range)
        self.effect_bins = tuple((float(a), float(b)) for a, b in self.effect_bins)
        if not self.sample_sizes or not self.node_sizes or not self.effect_bins:
            raise ValueError("study grids must be nonempty")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        lo, hi = self.theta_range
        if not 0 <= lo < hi:
            raise ValueError("theta_range must satisfy 0 <= lo < hi")

    @classmethod
    def typeI(cls, **kw) -> "StudyConfig":
        """Bernoulli generation, misspecified ``edges + ttriad`` fit."""
        kw.setdefault("gen_model", "edges")
        kw.setdefault("sample_sizes", (5, 10, 15, 20, 30, 50, 100))
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effect_bins"] = [list(b) for b in self.effect_bins]
        for key in ("sample_sizes", "node_sizes", "theta_range"):
            d[key] = list(d[key])
        return d

    def cells(self) -> list[tuple[int, int | None, int | None]]:
        """(sample size, effect bin, focal term) of every replication, in order.

        With ``stratify_bins`` the focal generating coordinate is drawn inside
        the bin and the others from the full law; unstratified runs have no
        focal term and every coordinate follows the full law.
        """
        if self.stratify_bins:
            k = parse_formula(self.gen_model, self.directed).k
            grid = [(s, b, j) for s in self.sample_sizes
                    for b in range(len(self.effect_bins)) for j in range(k)]
        else:
            grid = [(s, None, None) for s in self.sample_sizes]
        return [grid[i * len(grid) // self.replications] for i in range(self.replications)]


def _bin_of(bins, x: float) -> int | None:
    for b, (lo, hi) in enumerate(bins):
        last = b == len(bins) - 1
        if lo <= x < hi or (last and x == hi):
            return b
    return None


def _draw_theta(rng, k: int, lo: float, hi: float) -> np.ndarray:
    # uniform on [-hi, -lo] U [lo, hi]: uniform magnitude, fair sign
    mag = rng.uniform(lo, hi, size=k)
    sign = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    return sign * mag


def _enc(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _dec(x) -> float:
    return float(x)


class _Runner:
    def __init__(self, config: StudyConfig, cache: TableCache):
        self.config, self.cache = config, cache
        self.gen = parse_formula(config.gen_model, config.directed)
        self.fit = parse_formula(config.fit_model, config.directed)
        self.gen_idx = [self.fit.names.index(t) for t in self.gen.names if t in self.fit.names]
        self.opts = FitOptions()

    def run_one(self, i: int, size: int, bin_: int | None, focal: int | None = None) -> dict:
        c = self.config
        rng = np.random.default_rng(np.random.SeedSequence(c.seed, spawn_key=(i,)))
        t0 = time.perf_counter()
        theta = _draw_theta(rng, self.gen.k, *c.theta_range)
        if focal is not None:
            theta[focal] = _draw_theta(rng, 1, *c.effect_bins[bin_])[0]
        big = int(rng.integers(0, size + 1))
        counts = {c.node_sizes[0]: size - big}
        if len(c.node_sizes) > 1:
            counts[c.node_sizes[1]] = big
        else:
            counts[c.node_sizes[0]] = size
        sample = []
        for n, cnt in counts.items():
            if cnt:
                for g in sample_graphs(theta, self.gen, n, None, cnt, rng, self.cache):
                    sample.append((g, None))
        data = build_pooled(sample, self.fit, self.cache)
        keep = boundary_filter(data)
        fit = fit_pooled(data, self.opts)
        se, z, p = standard_errors(fit)
        return {
            "rep": i,
            "sample_size": size,
            "bin": bin_,
            "focal": focal,
            "composition": {str(n): cnt for n, cnt in counts.items()},
            "theta": theta.tolist(),
            "estimate": [_enc(v) for v in fit.theta],
            "se": [_enc(v) for v in se],
            "p": [_enc(v) for v in p],
            "status": fit.status,
            "kept": keep,
            "elapsed": time.perf_counter() - t0,
        }


def _safe_run(runner: _Runner, i, s, b, f) -> dict:
    try:
        return runner.run_one(i, s, b, f)
    except Exception as e:  # recorded, never fatal
        log.warning("replication %d failed: %s", i, e)
        return {"rep": i, "sample_size": s, "bin": b, "focal": f, "status": "error",
                "kept": False, "error": str(e), "theta": [], "estimate": [], "se": [], "p": []}


def _run_chunk(args):
    config_dict, cache_dir, items = args
    config = StudyConfig(**config_dict)
    runner = _Runner(config, TableCache(cache_dir))
    return [_safe_run(runner, *item) for item in items]


@dataclass
class StudyResult:
    config: StudyConfig
    records: list[dict] = field(default_factory=list)

    @property
    def fit_names(self) -> list[str]:
        return parse_formula(self.config.fit_model, self.config.directed).names

    @property
    def gen_names(self) -> list[str]:
        return parse_formula(self.config.gen_model, self.config.directed).names

    def kept(self) -> list[dict]:
        """Records passing the boundary filter whose fit ended with status 00.

        Status 01/10/11 fits after the filter are convex-hull faces the
        per-coordinate rule cannot see; their estimates are not usable.
        """
        return [r for r in self.records if r["kept"] and r["status"] == "00"]

    def _finite(self, r) -> bool:
        return all(math.isfinite(_dec(v)) for v in r["estimate"])

    def counts(self) -> dict[str, int]:
        return {
            "replications": len(self.records),
            "passed_filter": sum(1 for r in self.records if r["kept"]),
            "used": len(self.kept()),
            "errors": sum(1 for r in self.records if r["status"] == "error"),
        }

    def bias(self) -> dict[str, dict]:
        """Mean of estimate minus truth over kept fits with finite estimates."""
        fit_names = self.fit_names
        out = {}
        for g, name in enumerate(self.gen_names):
            if name not in fit_names:
                continue
            j = fit_names.index(name)
            d = np.array([_dec(r["estimate"][j]) - r["theta"][g]
                          for r in self.kept() if self._finite(r)])
            if d.size == 0:
                out[name] = {"mean": float("nan"), "ci": [float("nan")] * 2, "count": 0}
                continue
            half = 1.96 * d.std(ddof=1) / math.sqrt(d.size) if d.size > 1 else float("nan")
            m = float(d.mean())
            out[name] = {"mean": m, "ci": [m - half, m + half], "count": int(d.size)}
        return out

    def power(self) -> list[dict]:
        """Share of kept fits significant at ``level`` with the true sign.

        Binned by sample size and by the magnitude of the true coefficient.
        A stratified replication only counts toward its focal term.
        """
        c = self.config
        fit_names = self.fit_names
        cells: dict[tuple, list] = {}
        for r in self.kept():
            for g, name in enumerate(self.gen_names):
                if name not in fit_names or r.get("focal") not in (None, g):
                    continue
                j = fit_names.index(name)
                truth = r["theta"][g]
                b = _bin_of(c.effect_bins, abs(truth))
                if b is None:
                    continue
                p, est = _dec(r["p"][j]), _dec(r["estimate"][j])
                hit = bool(p < c.level and np.sign(est) == np.sign(truth))
                cells.setdefault((name, r["sample_size"], b), []).append(hit)
        out = []
        for (name, size, b), hits in sorted(cells.items()):
            pw = float(np.mean(hits))
            out.append({"term": name, "sample_size": size, "bin": list(c.effect_bins[b]),
                        "power": pw, "count": len(hits),
                        "mcse": math.sqrt(max(pw * (1 - pw), 1e-12) / len(hits))})
        return out

    def typeI(self) -> list[dict]:
        """Rejection rate of fit terms absent from the generating model."""
        c = self.config
        fit_names = self.fit_names
        extra = [j for j, t in enumerate(fit_names) if t not in self.gen_names]
        cells: dict[tuple, list] = {}
        for r in self.kept():
            for j in extra:
                p = _dec(r["p"][j])
                cells.setdefault((fit_names[j], r["sample_size"]), []).append(bool(p < c.level))
        return [{"term": t, "sample_size": s, "rate": float(np.mean(v)), "count": len(v)}
                for (t, s), v in sorted(cells.items())]

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "term", "sample_size", "bin_lo", "bin_hi", "value", "count"])
        for name, b in self.bias().items():
            w.writerow(["bias", name, "", "", "", b["mean"], b["count"]])
        for row in self.power():
            w.writerow(["power", row["term"], row["sample_size"], *row["bin"], row["power"],
                        row["count"]])
        for row in self.typeI():
            w.writerow(["typeI", row["term"], row["sample_size"], "", "", row["rate"],
                        row["count"]])
        return buf.getvalue()

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def run_sim_study(config: StudyConfig, checkpoint: str | os.PathLike | None = None,
                  cache: TableCache | None = None, workers: int = 1,
                  cache_dir: str | None = None) -> StudyResult:
    """Run (or resume) a simulation study.

    Completed replications are appended to ``checkpoint`` as JSON lines and
    skipped on the next call.  A failing replication is recorded with status
    ``"error"`` and never stops the study.
    """
    cache = cache or default_cache()
    done: dict[int, dict] = {}
    ckpt = Path(checkpoint) if checkpoint is not None else None
    if ckpt is not None:
        meta = ckpt.with_name(ckpt.name + ".config.json")
        cfg_text = json.dumps(config.to_dict(), sort_keys=True)
        if meta.exists() and meta.read_text() != cfg_text:
            raise ValueError(f"{ckpt} was written under a different study config")
        meta.write_text(cfg_text)
    if ckpt is not None and ckpt.exists():
        for line in ckpt.read_text().splitlines():
            if line.strip():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    log.warning("skipping truncated checkpoint line")
                    continue
                done[rec["rep"]] = rec
    todo = [(i, *cell) for i, cell in enumerate(config.cells()) if i not in done]
    writer = ckpt.open("a") if ckpt is not None else None

    def record(rec):
        done[rec["rep"]] = rec
        if writer is not None:
            writer.write(json.dumps(rec, sort_keys=True) + "\n")
            writer.flush()

    runner = _Runner(config, cache)

    try:
        if workers > 1 and todo:
            from concurrent.futures import ProcessPoolExecutor

            chunks = [todo[w::workers] for w in range(workers)]
            with ProcessPoolExecutor(max_workers=workers) as ex:
                args = [(config.to_dict(), cache_dir, ch) for ch in chunks if ch]
                for recs in ex.map(_run_chunk, args):
                    for rec in recs:
                        record(rec)
        else:
            for item in todo:
                record(_safe_run(runner, *item))
    finally:
        if writer is not None:
            writer.close()
    return StudyResult(config, [done[i] for i in sorted(done)])
