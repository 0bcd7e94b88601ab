"""Model comparison, bootstrap standard errors and exact goodness of fit."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimation import FAILED_STATUSES, FitOptions, FitResult, fit_pooled
from .likelihood import PooledData, build_pooled, loglik_pooled, stat_distribution
from .tables import TableCache

# AIC/BIC: k counts free terms; BIC's sample size is the total number of dyads
BIC_NOBS = "total free tie cells (dyads) across networks"


def lr_test(restricted: FitResult, full: FitResult) -> tuple[float, int, float]:
    """Likelihood-ratio test of nested fits on the same sample.

    Returns ``(statistic, df, p_value)``.
    """
    if restricted.data_fingerprint != full.data_fingerprint or not full.data_fingerprint:
        raise ValueError("fits were computed on different samples")
    if restricted.model.directed != full.model.directed:
        raise ValueError("fits disagree on directedness")
    if restricted.model.offsets != full.model.offsets:
        raise ValueError("fits have different offsets; models are not nested")
    missing = [t for t in restricted.names if t not in full.names]
    if missing:
        raise ValueError(f"models are not nested: {', '.join(missing)} not in the full model")
    for f in (restricted, full):
        if not f.finite:
            raise ValueError("likelihood-ratio test needs fits with finite estimates")
    stat = max(0.0, 2.0 * (full.loglik - restricted.loglik))
    df = full.k - restricted.k
    p = 1.0 if df == 0 else float(stats.chi2.sf(stat, df))
    return stat, df, p


def aic(fit: FitResult) -> float:
    return -2.0 * fit.loglik + 2.0 * fit.k


def bic(fit: FitResult) -> float:
    return -2.0 * fit.loglik + fit.k * math.log(fit.n_obs)


# --- bootstrap ---------------------------------------------------------------------


@dataclass
class BootResult:
    replicates: np.ndarray  # (R, k); failed replicates are NaN rows
    vcov: np.ndarray
    failed: int
    seed: int
    statuses: list[str]
    names: list[str]

    @property
    def R(self) -> int:
        return self.replicates.shape[0]

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def to_dict(self) -> dict:
        return {
            "terms": self.names,
            "R": self.R,
            "seed": self.seed,
            "failed": self.failed,
            "se": self.se.tolist(),
            "vcov": self.vcov.tolist(),
            "statuses": self.statuses,
        }


def replicate_seeds(seed: int, R: int) -> list[np.random.SeedSequence]:
    """Per-replicate streams: ``SeedSequence(seed).spawn(R)``."""
    return np.random.SeedSequence(seed).spawn(R)


def bootstrap(data, model=None, R: int = 1000, seed: int = 0, threads: int = 1,
              opts: FitOptions | None = None, cache: TableCache | None = None) -> BootResult:
    """Nonparametric bootstrap over networks.

    ``data`` is prepared :class:`PooledData` or a sample of
    ``(Graph, AttributeTable)`` pairs (then ``model`` is required).  Each
    replicate resamples networks with replacement and refits on the
    already-built tables.  Replicates ending in status 20, 21 or 30 are
    counted as failed and excluded from the covariance.
    """
    if R < 2:
        raise ValueError("bootstrap needs R >= 2")
    if not isinstance(data, PooledData):
        if model is None:
            raise ValueError("a model is required when bootstrapping a raw sample")
        data = build_pooled(data, model, cache)
    P = data.size
    seqs = replicate_seeds(seed, R)

    def one(ss):
        idx = np.random.default_rng(ss).integers(0, P, size=P)
        fit = fit_pooled(data.subset(idx), opts)
        return fit.theta, fit.status

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, seqs))
    else:
        out = [one(ss) for ss in seqs]

    reps = np.full((R, data.k), np.nan)
    statuses = []
    for r, (theta, status) in enumerate(out):
        statuses.append(status)
        if status not in FAILED_STATUSES:
            reps[r] = theta
    ok = ~np.isnan(reps).any(axis=1)
    if not ok.any():
        raise RuntimeError(f"all {R} bootstrap replicates failed (boundary estimates)")
    good = reps[ok]
    vcov = np.cov(good, rowvar=False, ddof=1).reshape(data.k, data.k) if len(good) > 1 \
        else np.zeros((data.k, data.k))
    return BootResult(reps, vcov, int((~ok).sum()), seed, statuses, data.model.names)


# --- goodness of fit ------------------------------------------------------------------


@dataclass
class GofRow:
    network: int
    term: str
    observed: float
    min: float
    max: float
    lower: float
    upper: float
    covered: bool


@dataclass
class GofReport:
    alpha: float
    rows: list[GofRow] = field(default_factory=list)

    @property
    def coverage(self) -> float:
        return float(np.mean([r.covered for r in self.rows])) if self.rows else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["network", "term", "observed", "min", "max", "lower", "upper", "covered"])
        for r in self.rows:
            w.writerow([r.network, r.term, repr(r.observed), repr(r.min), repr(r.max),
                        repr(r.lower), repr(r.upper), int(r.covered)])
        return buf.getvalue()

    def to_json(self) -> dict:
        """Plot-ready layout: one panel per term, one interval per network."""
        terms: dict[str, list] = {}
        for r in self.rows:
            terms.setdefault(r.term, []).append(
                {"network": r.network, "observed": r.observed, "range": [r.min, r.max],
                 "interval": [r.lower, r.upper], "covered": r.covered}
            )
        return {"level": 1.0 - self.alpha, "coverage": self.coverage,
                "terms": [{"term": t, "networks": v} for t, v in terms.items()]}


def gof_exact(fit: FitResult, alpha: float = 0.10) -> GofReport:
    """Equal-tailed exact intervals of every statistic of every network.

    The interval runs from the smallest value with CDF >= alpha/2 to the
    smallest value with CDF >= 1 - alpha/2; coverage is at least 1 - alpha.
    Diverged coordinates are evaluated at their large finite stand-in.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    theta = fit.theta_substituted
    report = GofReport(alpha)
    for p, net in enumerate(fit.data.networks):
        for j, name in enumerate(fit.names):
            dist = stat_distribution(theta, net.table, j)
            lo, hi = dist.quantile(alpha / 2), dist.quantile(1 - alpha / 2)
            obs = float(net.stats[j])
            report.rows.append(
                GofRow(p, name, obs, float(net.table.Q[:, j].min()),
                       float(net.table.Q[:, j].max()), lo, hi, bool(lo <= obs <= hi))
            )
    return report


def recompute_loglik(fit: FitResult) -> float:
    return loglik_pooled(fit.theta_substituted, fit.data)
