"""Command-line interface.

Subcommands: ``fit``, ``simulate``, ``gof``, ``boot``, ``sim-study`` and
``enumerate``.  Any structured statistical outcome (including an MLE that
does not exist) exits with 0; malformed input exits with 2 and a message
naming the location of the problem.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import BOUNDARY_RULE, FitOptions, FitResult, fit_pooled, standard_errors
from .formula import parse_formula
from .graph import AttributeTable, support_size
from .inference import BIC_NOBS, aic, bic, bootstrap, gof_exact
from .io import (
    RESULT_FORMAT,
    FILE_VERSION,
    FileFormatError,
    NetworkFile,
    dump_json,
    encode_number,
    read_json,
    read_networks,
    write_networks,
)
from .likelihood import build_pooled
from .simulation import StudyConfig, run_sim_study, sample_graphs
from .tables import TableCache, table_bounds, table_cache_key
from .terms import STAT_CONVENTIONS

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2
FULL_SCALE_REPLICATIONS = 20000


def _new_seed() -> int:
    # 63 bits keeps the recorded seed a plain JSON integer
    return int(np.random.SeedSequence().entropy) % (1 << 63)


def _cache(cache_dir, threads=1) -> TableCache:
    return TableCache(cache_dir, threads=threads)


def _parse_theta(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        vals = [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ValueError(f"--theta: expected comma-separated numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ValueError(f"--theta: expected finite numbers, got {text!r}")
    return vals


def _parse_attrs(items, n: int) -> dict[str, list[float]]:
    out = {}
    for item in items or []:
        name, sep, vals = item.partition("=")
        if not sep or not name:
            raise ValueError(f"--attr {item!r}: expected name=v1,v2,...")
        try:
            vec = [float(v) for v in vals.split(",")]
        except ValueError:
            raise ValueError(f"--attr {item!r}: values must be numbers") from None
        if len(vec) != n:
            raise ValueError(f"--attr {name}: {len(vec)} values given, n is {n}")
        out[name] = vec
    return out


# --- result documents ----------------------------------------------------------------


def result_document(fit: FitResult, nf: NetworkFile, cache: TableCache | None = None,
                    source: str | None = None, opts: FitOptions | None = None,
                    formula_text: str | None = None) -> dict:
    """Plain-data description of a fit; contains no timestamps."""
    opts = opts or FitOptions()
    bases = {t.base for t in fit.model.terms}
    se, z, p = standard_errors(fit)
    coefs = [
        {"term": name, "estimate": encode_number(fit.theta[j]), "se": encode_number(se[j]),
         "z": encode_number(z[j]), "p": encode_number(p[j]), "boundary": fit.boundary[j]}
        for j, name in enumerate(fit.names)
    ]
    keys = sorted({table_cache_key(g.n, g.directed, fit.model, a) for g, a in nf.sample})
    vcov = None if fit.vcov is None else [[encode_number(v) for v in row] for row in fit.vcov]
    return {
        "format": RESULT_FORMAT,
        "version": FILE_VERSION,
        "engine_version": __version__,
        "formula": fit.model.formula() if formula_text is None else formula_text,
        "formula_canonical": fit.model.formula(),
        "directed": fit.model.directed,
        "coefficients": coefs,
        "vcov": vcov,
        "loglik": encode_number(fit.loglik),
        "aic": encode_number(aic(fit)),
        "bic": encode_number(bic(fit)),
        "bic_nobs": fit.n_obs,
        "bic_nobs_definition": BIC_NOBS,
        "status": fit.status,
        "message": fit.message,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "networks": len(nf.sample),
        "networks_file": source,
        "data_fingerprint": fit.data_fingerprint,
        "table_keys": keys,
        "options": {"gtol": opts.gtol, "maxiter": opts.maxiter,
                    "large_value": fit.large_value},
        "conventions": {b: STAT_CONVENTIONS[b] for b in sorted(bases) if b in STAT_CONVENTIONS},
        "boundary_rule": BOUNDARY_RULE,
        "seed": None,
    }


def _check_result_doc(doc: dict, path) -> None:
    if doc.get("format") != RESULT_FORMAT:
        raise FileFormatError(f"{path}: not a result file (format {doc.get('format')!r})")
    if "formula" not in doc:
        raise FileFormatError(f"{path}: missing 'formula'")


# --- commands ------------------------------------------------------------------------


def cmd_fit(networks, model: str, cache_dir=None, threads: int = 1,
            opts: FitOptions | None = None, cache: TableCache | None = None):
    """Fit ``model`` to a network file (path or :class:`NetworkFile`).

    Returns ``(FitResult, result document)``.
    """
    nf = networks if isinstance(networks, NetworkFile) else read_networks(networks)
    spec = parse_formula(model, nf.directed)
    cache = cache or _cache(cache_dir, threads)
    fit = fit_pooled(build_pooled(nf.sample, spec, cache), opts)
    source = None if isinstance(networks, NetworkFile) else str(networks)
    return fit, result_document(fit, nf, cache, source, opts, model)


def _refit(result_path, networks_path, cache_dir, threads):
    doc = read_json(result_path, "result file")
    _check_result_doc(doc, result_path)
    stored = doc.get("options") or {}
    opts = FitOptions(gtol=stored.get("gtol", FitOptions.gtol),
                      maxiter=stored.get("maxiter", FitOptions.maxiter),
                      large_value=stored.get("large_value", FitOptions.large_value))
    fit, new = cmd_fit(networks_path, doc["formula"], cache_dir, threads, opts)
    if new["coefficients"] != doc.get("coefficients"):
        raise FileFormatError(
            f"{result_path}: coefficients do not match a refit on {networks_path}; "
            "was it produced from this network file?"
        )
    return fit


def cmd_gof(result_path, networks_path, level: float = 0.90, cache_dir=None, threads=1):
    if not 0 < level < 1:
        raise ValueError(f"--level must lie in (0, 1), got {level}")
    fit = _refit(result_path, networks_path, cache_dir, threads)
    return gof_exact(fit, alpha=1.0 - level)


def cmd_boot(result_path, networks_path, R: int = 1000, seed: int | None = None,
             threads: int = 1, cache_dir=None) -> dict:
    seed = _new_seed() if seed is None else int(seed)
    fit = _refit(result_path, networks_path, cache_dir, threads)
    boot = bootstrap(fit.data, R=R, seed=seed, threads=threads)
    out = boot.to_dict()
    out.update({"formula": fit.model.formula(), "engine_version": __version__,
                "estimate": [encode_number(v) for v in fit.theta]})
    return out


def cmd_simulate(model: str, theta, n: int, count: int = 1, seed: int | None = None,
                 directed: bool = True, attrs=None, random_attrs=(), cache_dir=None,
                 threads: int = 1) -> NetworkFile:
    """Draw ``count`` networks; ``random_attrs`` are redrawn Bernoulli(0.5) per network."""
    seed = _new_seed() if seed is None else int(seed)
    spec = parse_formula(model, directed)
    theta = _parse_theta(theta)
    if len(theta) != spec.k:
        raise ValueError(f"--theta has {len(theta)} values, model has {spec.k} terms")
    if count < 1:
        raise ValueError("--count must be positive")
    fixed = dict(attrs or {})
    rng = np.random.default_rng(seed)
    cache = _cache(cache_dir, threads)
    sample = []
    if random_attrs:
        for _ in range(count):
            vals = dict(fixed)
            for name in random_attrs:
                vals[name] = rng.integers(0, 2, size=n)
            a = AttributeTable(n, vals)
            sample.append((sample_graphs(theta, spec, n, a, 1, rng, cache)[0], a))
    else:
        a = AttributeTable(n, fixed) if fixed else None
        sample = [(g, a) for g in sample_graphs(theta, spec, n, a, count, rng, cache)]
    meta = {"generator": "simulate", "formula": spec.formula(), "theta": theta,
            "seed": seed, "engine_version": __version__}
    return NetworkFile([str(i + 1) for i in range(count)], sample, meta)


def cmd_enumerate(n: int, model: str, directed: bool = True, attrs=None, cache_dir=None,
                  threads: int = 1, max_rows: int | None = None) -> dict:
    spec = parse_formula(model, directed)
    a = AttributeTable(n, attrs) if attrs else None
    opts = {} if max_rows is None else {"max_rows": max_rows}
    cache = TableCache(cache_dir, threads=threads, **opts)
    t0 = time.perf_counter()
    tab = cache.get(n, directed, spec, a)
    elapsed = time.perf_counter() - t0
    bounds = table_bounds(tab)
    return {
        "formula": spec.formula(),
        "n": n,
        "directed": directed,
        "support_size": support_size(n, directed),
        "rows": tab.rows,
        "total_weight": int(tab.total_weight),
        "bounds": {name: [encode_number(bounds[j, 0]), encode_number(bounds[j, 1])]
                   for j, name in enumerate(spec.names)},
        "key": tab.key,
        "seconds": elapsed,
    }


def cmd_sim_study(config, out_dir, workers: int = 1, cache_dir=None,
                  replications: int | None = None, full_scale: bool = False) -> dict:
    cfg = config if isinstance(config, StudyConfig) else _load_config(config)
    if full_scale:
        cfg.replications = FULL_SCALE_REPLICATIONS
    if replications is not None:
        cfg.replications = int(replications)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_sim_study(cfg, checkpoint=out / "records.jsonl", cache=_cache(cache_dir),
                        workers=workers, cache_dir=cache_dir)
    (out / "aggregate.csv").write_text(res.aggregate_csv())
    summary = {"config": cfg.to_dict(), "counts": res.counts(), "bias": res.bias(),
               "power": res.power(), "typeI": res.typeI(), "engine_version": __version__}
    (out / "summary.json").write_text(json.dumps(_plain(summary), indent=2, sort_keys=True))
    return summary


def _load_config(path) -> StudyConfig:
    doc = read_json(path, "study config")
    try:
        return StudyConfig(**doc)
    except TypeError as e:
        raise FileFormatError(f"{path}: {e}") from None


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return encode_number(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


# --- argument parsing ----------------------------------------------------------------


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smallergm", description="Exact-likelihood ERGMs for small networks")
    p.add_argument("--version", action="version", version=f"smallergm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=True):
        sp.add_argument("--cache-dir", help="directory for on-disk support tables")
        if threads:
            sp.add_argument("--threads", type=int, default=1, help="worker cap")
        sp.add_argument("--out", help="output path (default: stdout)")

    f = sub.add_parser("fit", help="fit a pooled model to a network file")
    f.add_argument("networks")
    f.add_argument("--model", required=True)
    f.add_argument("--maxiter", type=int, default=200)
    f.add_argument("--gtol", type=float, default=1e-8)
    common(f)

    s = sub.add_parser("simulate", help="draw networks from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True, help="comma-separated coefficients")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--directed", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--attr", action="append", help="fixed attribute name=v1,v2,...")
    s.add_argument("--random-attr", action="append", default=[],
                   help="attribute redrawn Bernoulli(0.5) per node for every network")
    common(s)

    g = sub.add_parser("gof", help="exact goodness-of-fit intervals")
    g.add_argument("result")
    g.add_argument("networks")
    g.add_argument("--level", type=float, default=0.90, help="interval coverage")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    common(g)

    b = sub.add_parser("boot", help="bootstrap standard errors")
    b.add_argument("result")
    b.add_argument("networks")
    b.add_argument("--R", type=int, default=1000)
    b.add_argument("--seed", type=int)
    common(b)

    st = sub.add_parser("sim-study", help="run a simulation study from a JSON config")
    st.add_argument("config")
    st.add_argument("--out", required=True, help="output directory")
    st.add_argument("--workers", type=int, default=1)
    st.add_argument("--replications", type=int)
    st.add_argument("--full-scale", action="store_true",
                    help=f"use {FULL_SCALE_REPLICATIONS} replications")
    st.add_argument("--cache-dir")

    e = sub.add_parser("enumerate", help="build a support table and summarize it")
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--directed", action=argparse.BooleanOptionalAction, default=True)
    e.add_argument("--attr", action="append")
    e.add_argument("--long-run", action="store_true",
                   help="allow supports above 2^24 graphs (n=6 directed takes minutes)")
    e.add_argument("--max-rows", type=int, help="cap on distinct statistic rows held in memory")
    e.add_argument("--memory-mb", type=int, help="address-space cap for this process")
    common(e)
    return p


LONG_RUN_SUPPORT = 1 << 24


def run(args) -> int:
    if args.command == "fit":
        fit, doc = cmd_fit(args.networks, args.model, args.cache_dir, args.threads,
                           FitOptions(gtol=args.gtol, maxiter=args.maxiter))
        _emit(dump_json(doc), args.out)
        if args.out:
            print(fit.summary())
    elif args.command == "simulate":
        attrs = _parse_attrs(args.attr, args.n)
        nf = cmd_simulate(args.model, args.theta, args.n, args.count, args.seed, args.directed,
                          attrs, tuple(args.random_attr), args.cache_dir, args.threads)
        if args.out:
            write_networks(args.out, nf)
        else:
            from .io import networks_document
            sys.stdout.write(dump_json(networks_document(nf)))
    elif args.command == "gof":
        rep = cmd_gof(args.result, args.networks, args.level, args.cache_dir, args.threads)
        text = rep.to_csv() if args.format == "csv" else dump_json(_plain(rep.to_json()))
        _emit(text, args.out)
    elif args.command == "boot":
        doc = cmd_boot(args.result, args.networks, args.R, args.seed, args.threads,
                       args.cache_dir)
        _emit(dump_json(_plain(doc)), args.out)
    elif args.command == "sim-study":
        summary = cmd_sim_study(args.config, args.out, args.workers, args.cache_dir,
                                args.replications, args.full_scale)
        print(json.dumps(_plain(summary["counts"]), sort_keys=True))
    elif args.command == "enumerate":
        if support_size(args.n, args.directed) > LONG_RUN_SUPPORT and not args.long_run:
            raise ValueError(
                f"--n {args.n}: support has {support_size(args.n, args.directed)} graphs; "
                "pass --long-run to build it"
            )
        if args.memory_mb:
            import resource

            cap = args.memory_mb * (1 << 20)
            resource.setrlimit(resource.RLIMIT_AS, (cap, cap))
        attrs = _parse_attrs(args.attr, args.n)
        doc = cmd_enumerate(args.n, args.model, args.directed, attrs, args.cache_dir,
                            args.threads, args.max_rows)
        _emit(dump_json(_plain(doc)), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ValueError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"smallergm {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (MemoryError, RuntimeError) as e:
        print(f"smallergm {args.command}: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
