"""Exact pooled log-likelihood, gradient and Hessian.

Every network contributes ``theta @ s_p + o_p - log kappa_p(theta)`` where
``kappa_p = sum_rows W exp(Q theta + O)``.  Networks sharing a table are
grouped, so the cost per evaluation scales with the number of distinct
tables rather than the number of networks.  All sums over rows go through
a max-shifted softmax of ``Q theta + O + log W``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .graph import n_cells
from .tables import StatTable, TableCache, default_cache, table_cache_key
from .terms import ModelError, ModelSpec, eval_many


@dataclass(frozen=True)
class NetworkData:
    stats: np.ndarray
    offset: float
    table: StatTable
    dyads: int


@dataclass(eq=False)
class PooledData:
    """Observed statistics and support tables for a sample of networks."""

    model: ModelSpec
    networks: list[NetworkData]
    fingerprint: str = ""
    _groups: list = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.networks:
            raise ValueError("pooled data needs at least one network")
        k = self.model.k
        for net in self.networks:
            if net.stats.shape != (k,) or net.table.k != k:
                raise ValueError("network statistics do not match the model dimension")
            if not np.isfinite(net.offset):
                raise ValueError(
                    "an observed network violates a support constraint "
                    "(its log-probability is -inf)"
                )
        tabs: dict[int, list] = {}
        for net in self.networks:
            tabs.setdefault(id(net.table), [net.table, 0])[1] += 1
        self._groups = [(t, c) for t, c in tabs.values()]
        self.observed = np.sum([net.stats for net in self.networks], axis=0)
        self.offset_total = float(sum(net.offset for net in self.networks))

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def size(self) -> int:
        return len(self.networks)

    @property
    def dyads(self) -> int:
        return sum(net.dyads for net in self.networks)

    @property
    def groups(self) -> list[tuple[StatTable, int]]:
        return self._groups

    def subset(self, index) -> "PooledData":
        """Networks at ``index`` (repeats allowed), sharing tables with ``self``."""
        nets = [self.networks[i] for i in np.asarray(index, dtype=np.int64).tolist()]
        return PooledData(self.model, nets, fingerprint="")


def sample_fingerprint(sample) -> str:
    h = hashlib.sha256()
    for g, attrs in sample:
        h.update(f"{g.n}:{int(g.directed)}:{g.code};".encode())
        if attrs is not None:
            for name in sorted(attrs):
                h.update(name.encode() + b"=" + np.asarray(attrs[name], "<f8").tobytes())
        h.update(b"|")
    return h.hexdigest()


def build_pooled(sample, model: ModelSpec, cache: TableCache | None = None) -> PooledData:
    """Evaluate observed statistics and attach a table for every network.

    ``sample`` is a sequence of ``(Graph, AttributeTable | None)`` pairs.
    """
    cache = cache or default_cache()
    sample = list(sample)
    groups: dict[str, list[int]] = {}
    for p, (g, attrs) in enumerate(sample):
        if g.directed != model.directed:
            raise ModelError(f"network {p}: directedness differs from the model")
        model.check_attributes(attrs)
        groups.setdefault(table_cache_key(g.n, g.directed, model, attrs), []).append(p)
    nets: list[NetworkData | None] = [None] * len(sample)
    for members in groups.values():
        g0, attrs = sample[members[0]]
        tab = cache.get(g0.n, g0.directed, model, attrs)
        s, o = eval_many(model, [sample[p][0] for p in members], attrs)
        dyads = n_cells(g0.n, g0.directed)
        for row, p in enumerate(members):
            nets[p] = NetworkData(s[row], float(o[row]), tab, dyads)
    return PooledData(model, nets, fingerprint=sample_fingerprint(sample))


# --- per-table moments ---------------------------------------------------------


def _check_theta(theta, k: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape[0] != k:
        raise ValueError(f"theta has length {theta.shape[0]}, model has {k} terms")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    return theta


def _log_weights(theta: np.ndarray, table: StatTable) -> tuple[np.ndarray, float]:
    a = table.Q @ theta + table.O + table.logW
    amax = a.max()
    return a, amax


def log_kappa(theta, table: StatTable) -> float:
    """``log sum_rows W exp(Q theta + O)``."""
    theta = _check_theta(theta, table.k)
    a, amax = _log_weights(theta, table)
    return float(amax + np.log(np.exp(a - amax).sum()))


def row_probabilities(theta, table: StatTable) -> np.ndarray:
    """Probability of each table row under ``theta``."""
    theta = _check_theta(theta, table.k)
    a, amax = _log_weights(theta, table)
    p = np.exp(a - amax)
    return p / p.sum()


def _moments(theta: np.ndarray, table: StatTable, order: int):
    a, amax = _log_weights(theta, table)
    e = np.exp(a - amax)
    z = e.sum()
    lk = amax + np.log(z)
    if order == 0:
        return lk, None, None
    p = e / z
    mean = table.Q.T @ p
    if order == 1:
        return lk, mean, None
    qc = table.Q - mean
    cov = (qc * p[:, None]).T @ qc
    return lk, mean, cov


def loglik_pooled(theta, data: PooledData) -> float:
    theta = _check_theta(theta, data.k)
    ll = float(theta @ data.observed) + data.offset_total
    for table, count in data.groups:
        ll -= count * _moments(theta, table, 0)[0]
    return ll


def gradient_pooled(theta, data: PooledData) -> np.ndarray:
    """``sum_p (s_p - E_theta[s])``."""
    theta = _check_theta(theta, data.k)
    g = data.observed.astype(np.float64).copy()
    for table, count in data.groups:
        g -= count * _moments(theta, table, 1)[1]
    return g


def hessian_pooled(theta, data: PooledData) -> np.ndarray:
    """``-sum_p Cov_theta(s)``; symmetric negative semidefinite."""
    theta = _check_theta(theta, data.k)
    h = np.zeros((data.k, data.k))
    for table, count in data.groups:
        h -= count * _moments(theta, table, 2)[2]
    return (h + h.T) / 2


def loglik_and_gradient(theta, data: PooledData) -> tuple[float, np.ndarray]:
    theta = _check_theta(theta, data.k)
    ll = float(theta @ data.observed) + data.offset_total
    g = data.observed.astype(np.float64).copy()
    for table, count in data.groups:
        lk, mean, _ = _moments(theta, table, 1)
        ll -= count * lk
        g -= count * mean
    return ll, g


# --- distributions and surfaces ---------------------------------------------------


@dataclass(frozen=True)
class StatDistribution:
    """Exact marginal law of one statistic: sorted support values and masses."""

    values: np.ndarray
    probs: np.ndarray

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        return np.minimum(c, 1.0)

    def cdf_at(self, v: float) -> float:
        i = np.searchsorted(self.values, v, side="right")
        return 0.0 if i == 0 else float(self.cdf[i - 1])

    def quantile(self, q: float) -> float:
        """Smallest support value ``v`` with ``CDF(v) >= q``."""
        c = self.cdf
        # guard against a final cumulative sum landing a hair below 1
        i = int(np.searchsorted(c, q - 1e-12, side="left"))
        return float(self.values[min(i, len(self.values) - 1)])

    def mean(self) -> float:
        return float(self.values @ self.probs)


def stat_distribution(theta, table: StatTable, column: int) -> StatDistribution:
    if not 0 <= column < table.k:
        raise ValueError(f"column {column} outside [0, {table.k})")
    p = row_probabilities(theta, table)
    vals, inv = np.unique(table.Q[:, column], return_inverse=True)
    probs = np.bincount(inv.ravel(), weights=p, minlength=len(vals))
    return StatDistribution(vals, probs)


def loglik_surface(data: PooledData, theta, i: int, j: int, grid_i, grid_j) -> np.ndarray:
    """Log-likelihood over a grid of coordinates ``i`` and ``j``, others fixed.

    Entry ``[a, b]`` is evaluated at ``theta_i = grid_i[a]``, ``theta_j = grid_j[b]``.
    """
    theta = _check_theta(theta, data.k)
    if i == j:
        raise ValueError("surface needs two distinct coordinates")
    out = np.empty((len(grid_i), len(grid_j)))
    t = theta.copy()
    for a, u in enumerate(grid_i):
        for b, v in enumerate(grid_j):
            t[i], t[j] = u, v
            out[a, b] = loglik_pooled(t, data)
    return out
