"""Sufficient statistics, transforms, interactions and offsets.

Counting conventions (fixed; they only rescale coefficients):

========== =================================================================
edges      number of ties
mutual     unordered dyads ``{i, j}`` with ``i->j`` and ``j->i``
ttriad     ordered distinct triples ``(i, j, k)`` with ``i->j, j->k, i->k``
nodematch  ties ``i->j`` with ``x_i == x_j``
nodeicov   sum over ties ``i->j`` of ``x_j`` (receiver attribute)
nodeocov   sum over ties ``i->j`` of ``x_i`` (sender attribute)
fourcycle  sum over distinct ordered ``(i, j, k, l)`` of
           ``y_ij y_jk y_kl y_li``; each directed 4-cycle counts 4 times
           (8 times for an undirected cycle)
========== =================================================================

Undirected models support ``edges``, ``nodematch`` and ``fourcycle``.

Statistics are evaluated on whole arrays of graph codes at once: a motif
count is the number of motif masks fully contained in the code, an attribute
count is a weighted popcount.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from .graph import AttributeTable, Graph, cell_index, cells, check_size

BASE_TERMS = ("edges", "mutual", "ttriad", "nodematch", "nodeicov", "nodeocov", "fourcycle")
ATTRIBUTE_TERMS = ("nodematch", "nodeicov", "nodeocov")
DIRECTED_ONLY = ("mutual", "ttriad", "nodeicov", "nodeocov")
TRANSFORMS = ("identity", "sqrt", "log", "pow", "scale")
INTERACTIONS = ("none", "size", "loginvsize")

STAT_CONVENTIONS = {
    "mutual": "unordered dyads",
    "ttriad": "ordered distinct triples (i->j, j->k, i->k)",
    "fourcycle": "sum over distinct ordered 4-tuples (4x each directed cycle, 8x each undirected cycle)",
}


class ModelError(ValueError):
    """A model cannot be evaluated on the given network."""


def _fmt_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class TermSpec:
    """One model column: ``multiplier(n) * transform(base(y, X))``.

    ``param`` is the exponent for ``pow`` and the factor for ``scale``;
    ``size`` is ``k`` in the ``I(n == k)`` interaction.
    """

    base: str
    attr: str | None = None
    transform: str = "identity"
    param: float | None = None
    interaction: str = "none"
    size: int | None = None

    def __post_init__(self):
        if self.base not in BASE_TERMS:
            raise ModelError(f"unknown term {self.base!r}")
        if (self.base in ATTRIBUTE_TERMS) != (self.attr is not None):
            if self.attr is None:
                raise ModelError(f"term {self.base!r} needs an attribute argument")
            raise ModelError(f"term {self.base!r} takes no attribute argument")
        if self.transform not in TRANSFORMS:
            raise ModelError(f"unknown transform {self.transform!r}")
        if (self.transform in ("pow", "scale")) != (self.param is not None):
            raise ModelError(f"transform {self.transform!r} parameter mismatch")
        if self.param is not None:
            object.__setattr__(self, "param", float(self.param))
        if self.interaction not in INTERACTIONS:
            raise ModelError(f"unknown interaction {self.interaction!r}")
        if (self.interaction == "size") != (self.size is not None):
            raise ModelError("size interaction needs exactly one integer size")

    @property
    def feature(self) -> tuple[str, str | None]:
        return (self.base, self.attr)

    @property
    def name(self) -> str:
        s = self.base if self.attr is None else f"{self.base}({self.attr})"
        if self.transform in ("sqrt", "log"):
            s = f"{self.transform}({s})"
        elif self.transform in ("pow", "scale"):
            s = f"{self.transform}({s}, {_fmt_number(self.param)})"
        if self.interaction == "size":
            s = f"{s} * I(n == {self.size})"
        elif self.interaction == "loginvsize":
            s = f"{s} * log(1/n)"
        return s

    def apply(self, base: np.ndarray, n: int) -> np.ndarray:
        """Transform then multiply a column of base counts."""
        x = np.asarray(base, dtype=np.float64)
        t = self.transform
        if t == "sqrt":
            if np.any(x < 0):
                raise ModelError(f"{self.name}: square root of a negative statistic")
            x = np.sqrt(x)
        elif t == "log":
            if np.any(x <= 0):
                raise ModelError(f"{self.name}: log of a non-positive statistic")
            x = np.log(x)
        elif t == "pow":
            with np.errstate(invalid="ignore", divide="ignore"):
                x = np.power(x, self.param)
            if not np.all(np.isfinite(x)):
                raise ModelError(f"{self.name}: power undefined for some statistic values")
        elif t == "scale":
            x = x * self.param
        return x * self.multiplier(n)

    def multiplier(self, n: int) -> float:
        if self.interaction == "size":
            return 1.0 if n == self.size else 0.0
        if self.interaction == "loginvsize":
            return math.log(1.0 / n)
        return 1.0


@dataclass(frozen=True)
class OffsetSpec:
    """Fixed-coefficient model component.

    With ``op is None`` the term enters the log-probability with coefficient 1.
    Otherwise it is a support constraint ``term op bound``: 0 when satisfied,
    ``-inf`` when violated.
    """

    term: TermSpec
    op: str | None = None
    bound: float | None = None

    def __post_init__(self):
        if self.op not in (None, ">=", "<="):
            raise ModelError(f"unsupported constraint operator {self.op!r}")
        if (self.op is None) != (self.bound is None):
            raise ModelError("constraint needs both an operator and a bound")
        if self.bound is not None:
            object.__setattr__(self, "bound", float(self.bound))

    @property
    def is_constraint(self) -> bool:
        return self.op is not None

    @property
    def name(self) -> str:
        if self.is_constraint:
            return f"constraint({self.term.name} {self.op} {_fmt_number(self.bound)})"
        return f"offset({self.term.name})"

    def value(self, base: np.ndarray, n: int) -> np.ndarray:
        if not self.is_constraint:
            return self.term.apply(base, n)
        x = self.term.apply(base, n)
        ok = x >= self.bound if self.op == ">=" else x <= self.bound
        return np.where(ok, 0.0, -np.inf)


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[TermSpec, ...]
    offsets: tuple[OffsetSpec, ...] = ()
    directed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "offsets", tuple(self.offsets))
        if not self.terms:
            raise ModelError("a model needs at least one free term")
        names = [t.name for t in self.terms] + [o.name for o in self.offsets]
        dup = {x for x in names if names.count(x) > 1}
        if dup:
            raise ModelError(f"duplicate term(s): {', '.join(sorted(dup))}")
        if not self.directed:
            for t in [*self.terms, *(o.term for o in self.offsets)]:
                if t.base in DIRECTED_ONLY:
                    raise ModelError(f"term {t.base!r} is only defined for directed graphs")

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]

    @property
    def k(self) -> int:
        return len(self.terms)

    @property
    def features(self) -> list[tuple[str, str | None]]:
        """Distinct base statistics needed by terms and offsets, in first-use order."""
        out: list[tuple[str, str | None]] = []
        for t in [*self.terms, *(o.term for o in self.offsets)]:
            if t.feature not in out:
                out.append(t.feature)
        return out

    @property
    def attributes(self) -> list[str]:
        return sorted({a for _, a in self.features if a is not None})

    def check_attributes(self, attrs: AttributeTable | None) -> None:
        for name in self.attributes:
            if attrs is None or name not in attrs:
                raise ModelError(f"attribute {name!r} is required by the model but missing")

    def formula(self) -> str:
        return " + ".join([*self.names, *(o.name for o in self.offsets)])

    def __str__(self):
        return self.formula()


# --- kernels -----------------------------------------------------------------


@lru_cache(maxsize=None)
def _motif_masks(n: int, directed: bool, base: str) -> tuple[np.ndarray, np.ndarray]:
    """Distinct cell masks of a motif and how many index tuples map to each."""
    idx = cell_index(n, directed)
    counts: dict[int, int] = {}

    def add(pairs):
        mask = 0
        for p in pairs:
            mask |= 1 << idx[p]
        counts[mask] = counts.get(mask, 0) + 1

    if base == "mutual":
        for i in range(n):
            for j in range(i + 1, n):
                add([(i, j), (j, i)])
    elif base == "ttriad":
        for i, j, k in permutations(range(n), 3):
            add([(i, j), (j, k), (i, k)])
    elif base == "fourcycle":
        for i, j, k, l in permutations(range(n), 4):
            add([(i, j), (j, k), (k, l), (l, i)])
    else:  # pragma: no cover - guarded by callers
        raise ModelError(base)
    masks = np.array(sorted(counts), dtype=np.int64)
    mult = np.array([counts[int(m)] for m in masks], dtype=np.int64)
    masks.setflags(write=False)
    mult.setflags(write=False)
    return masks, mult


def _weight_groups(weights: list[float]) -> list[tuple[float, int]]:
    """Group cells sharing one nonzero weight into a single bitmask."""
    groups: dict[float, int] = {}
    for b, w in enumerate(weights):
        if w != 0.0:
            groups[w] = groups.get(w, 0) | (1 << b)
    return sorted(groups.items())


class Feature:
    """One base statistic evaluated over arrays of graph codes."""

    def __init__(self, base: str, attr: str | None, n: int, directed: bool,
                 attrs: AttributeTable | None):
        self.base, self.attr = base, attr
        m = len(cells(n, directed))
        self.masks = self.mult = None
        self.groups: list[tuple[float, int]] = []
        if base == "edges":
            self.lo, self.hi = 0.0, float(m)
        elif base in ("mutual", "ttriad", "fourcycle"):
            self.masks, self.mult = _motif_masks(n, directed, base)
            self.lo, self.hi = 0.0, float(self.mult.sum())
        else:
            x = attrs[attr]
            if base == "nodematch":
                w = [1.0 if x[i] == x[j] else 0.0 for i, j in cells(n, directed)]
            elif base == "nodeicov":
                w = [float(x[j]) for _, j in cells(n, directed)]
            else:
                w = [float(x[i]) for i, _ in cells(n, directed)]
            self.groups = _weight_groups(w)
            self.lo = float(sum(v for v in w if v < 0))
            self.hi = float(sum(v for v in w if v > 0))
        self.integral = all(float(v).is_integer() for v, _ in self.groups)

    def __call__(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if self.base == "edges":
            return np.bitwise_count(codes).astype(np.float64)
        if self.masks is not None:
            acc = np.zeros(codes.shape, dtype=np.int64)
            for mask, mult in zip(self.masks.tolist(), self.mult.tolist()):
                hit = (codes & mask) == mask
                if mult == 1:
                    acc += hit
                else:
                    acc += mult * hit
            return acc.astype(np.float64)
        out = np.zeros(codes.shape, dtype=np.float64)
        for w, mask in self.groups:
            out += w * np.bitwise_count(codes & mask)
        return out


class StatKernel:
    """Vectorized evaluation of a model on graphs of one size and attribute set.

    ``base(codes)`` returns one column per distinct base statistic;
    ``finish(base)`` maps base rows to model statistics and offset values.
    """

    def __init__(self, model: ModelSpec, n: int, attrs: AttributeTable | None = None):
        check_size(n, model.directed)
        model.check_attributes(attrs)
        if attrs is not None and attrs.n != n:
            raise ModelError(f"attribute table has {attrs.n} nodes, graph has {n}")
        self.model, self.n = model, n
        self.feature_keys = model.features
        self.features = [Feature(b, a, n, model.directed, attrs) for b, a in self.feature_keys]
        self._col = {f: c for c, f in enumerate(self.feature_keys)}

    def base(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        out = np.empty((codes.shape[0], len(self.features)), dtype=np.float64)
        for c, feat in enumerate(self.features):
            out[:, c] = feat(codes)
        return out

    def offsets(self, base: np.ndarray) -> np.ndarray:
        off = np.zeros(base.shape[0], dtype=np.float64)
        for o in self.model.offsets:
            off = off + o.value(base[:, self._col[o.term.feature]], self.n)
        return off

    def stats(self, base: np.ndarray) -> np.ndarray:
        q = np.empty((base.shape[0], self.model.k), dtype=np.float64)
        for c, t in enumerate(self.model.terms):
            q[:, c] = t.apply(base[:, self._col[t.feature]], self.n)
        # normalize -0.0 so equal rows share one bit pattern
        return q + 0.0

    def finish(self, base: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Q, O)`` for rows with a finite offset and the keep mask."""
        off = self.offsets(base)
        keep = np.isfinite(off)
        return self.stats(base[keep]), off[keep] + 0.0, keep


# --- single-graph API --------------------------------------------------------


def _check_graph(model: ModelSpec, g: Graph) -> None:
    if g.directed != model.directed:
        raise ModelError("graph and model disagree on directedness")


def eval_term(term: TermSpec, g: Graph, attrs: AttributeTable | None = None) -> float:
    if term.attr is not None and (attrs is None or term.attr not in attrs):
        raise ModelError(f"attribute {term.attr!r} is required by the model but missing")
    if not g.directed and term.base in DIRECTED_ONLY:
        raise ModelError(f"term {term.base!r} is only defined for directed graphs")
    feat = Feature(term.base, term.attr, g.n, g.directed, attrs)
    base = feat(np.array([g.code], dtype=np.int64))
    return float(term.apply(base, g.n)[0])


def eval_stats(model: ModelSpec, g: Graph, attrs: AttributeTable | None = None) -> np.ndarray:
    _check_graph(model, g)
    kern = StatKernel(model, g.n, attrs)
    return kern.stats(kern.base(np.array([g.code], dtype=np.int64)))[0]


def eval_offset(model: ModelSpec, g: Graph, attrs: AttributeTable | None = None) -> float:
    _check_graph(model, g)
    kern = StatKernel(model, g.n, attrs)
    return float(kern.offsets(kern.base(np.array([g.code], dtype=np.int64)))[0])


def eval_many(model: ModelSpec, graphs, attrs: AttributeTable | None = None):
    """Statistics and offsets for many graphs of one size sharing ``attrs``."""
    graphs = list(graphs)
    if not graphs:
        return np.empty((0, model.k)), np.empty(0)
    n = graphs[0].n
    kern = StatKernel(model, n, attrs)
    codes = np.array([g.code for g in graphs], dtype=np.int64)
    base = kern.base(codes)
    return kern.stats(base), kern.offsets(base)
