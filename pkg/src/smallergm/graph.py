"""Small labeled graphs without self-ties, encoded as integer bitmasks.

A graph on ``n`` nodes has ``m`` free cells: ``n(n-1)`` ordered pairs when
directed, ``n(n-1)/2`` unordered pairs when undirected.  Cell ``b`` is bit
``b`` of the graph code.  Cells are ordered row-major over ordered pairs
``(i, j), i != j`` (directed) or lexicographically over ``i < j``
(undirected).  This order is part of the on-disk table format; bump
``CELL_ORDER_VERSION`` if it ever changes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

CELL_ORDER_VERSION = 1

MAX_NODES_DIRECTED = 6
MAX_NODES_UNDIRECTED = 8


def max_nodes(directed: bool) -> int:
    return MAX_NODES_DIRECTED if directed else MAX_NODES_UNDIRECTED


def check_size(n: int, directed: bool) -> None:
    """Raise ``ValueError`` unless ``n`` is within the enumeration bound."""
    bound = max_nodes(directed)
    kind = "directed" if directed else "undirected"
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError(f"node count must be an integer, got {n!r}")
    if n < 1:
        raise ValueError(f"node count must be at least 1, got {n}")
    if n > bound:
        raise ValueError(
            f"{kind} graphs are limited to n <= {bound} nodes (got n={n})"
        )


def n_cells(n: int, directed: bool) -> int:
    return n * (n - 1) if directed else n * (n - 1) // 2


@lru_cache(maxsize=None)
def cells(n: int, directed: bool) -> tuple[tuple[int, int], ...]:
    """Cell order: position ``b`` holds the node pair encoded by bit ``b``."""
    if directed:
        return tuple((i, j) for i in range(n) for j in range(n) if i != j)
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


@lru_cache(maxsize=None)
def cell_index(n: int, directed: bool) -> dict[tuple[int, int], int]:
    """Map a node pair to its bit position (both orientations if undirected)."""
    out: dict[tuple[int, int], int] = {}
    for b, (i, j) in enumerate(cells(n, directed)):
        out[(i, j)] = b
        if not directed:
            out[(j, i)] = b
    return out


@dataclass(frozen=True)
class Graph:
    """Immutable small graph; ``code`` is the tie bitmask in cell order."""

    n: int
    directed: bool
    code: int

    def __post_init__(self):
        check_size(self.n, self.directed)
        if not 0 <= self.code < (1 << self.m):
            raise ValueError(f"graph code {self.code} out of range [0, 2^{self.m})")

    @property
    def m(self) -> int:
        return n_cells(self.n, self.directed)

    @property
    def index(self) -> int:
        return self.code

    @property
    def tie_count(self) -> int:
        return int(self.code).bit_count()

    def ties(self) -> list[tuple[int, int]]:
        cs = cells(self.n, self.directed)
        return [cs[b] for b in range(self.m) if (self.code >> b) & 1]

    def has_tie(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return bool((self.code >> cell_index(self.n, self.directed)[(i, j)]) & 1)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (symmetric when undirected)."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.ties():
            a[i, j] = 1
            if not self.directed:
                a[j, i] = 1
        return a

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.n}, {kind}, ties={self.ties()})"


def graph_from_edges(n: int, directed: bool, edges: Iterable[Sequence[int]]) -> Graph:
    """Build a graph from a list of node pairs (0-based).

    Undirected pairs are normalized to ``i < j``; duplicates collapse.
    """
    check_size(n, directed)
    idx = cell_index(n, directed)
    code = 0
    for pair in edges:
        i, j = (int(v) for v in pair)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"tie ({i}, {j}) has a node index outside [0, {n})")
        if i == j:
            raise ValueError(f"self-tie ({i}, {j}) is not allowed")
        code |= 1 << idx[(i, j)]
    return Graph(n, directed, code)


def graph_from_adjacency(matrix, directed: bool = True) -> Graph:
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency matrix must be square")
    n = a.shape[0]
    if np.any(np.diag(a) != 0):
        raise ValueError("adjacency matrix has nonzero diagonal (self-ties)")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("adjacency matrix must be binary")
    if not directed and not np.array_equal(a, a.T):
        raise ValueError("undirected adjacency matrix must be symmetric")
    pairs = [(i, j) for i, j in zip(*np.nonzero(a))]
    return graph_from_edges(n, directed, pairs)


def graph_index_decode(k: int, n: int, directed: bool) -> Graph:
    check_size(n, directed)
    m = n_cells(n, directed)
    if not 0 <= k < (1 << m):
        raise ValueError(f"graph index {k} out of range [0, 2^{m})")
    return Graph(n, directed, int(k))


def graph_index_encode(g: Graph) -> int:
    return g.code


def support_size(n: int, directed: bool) -> int:
    return 1 << n_cells(n, directed)


def index_chunks(
    n: int,
    directed: bool,
    chunk_size: int = 1 << 18,
    start: int = 0,
    stop: int | None = None,
) -> Iterator[np.ndarray]:
    """Yield consecutive int64 arrays of graph codes covering ``[start, stop)``."""
    check_size(n, directed)
    total = support_size(n, directed)
    stop = total if stop is None else stop
    if not 0 <= start <= stop <= total:
        raise ValueError(f"index range [{start}, {stop}) outside [0, {total}]")
    for lo in range(start, stop, chunk_size):
        hi = min(lo + chunk_size, stop)
        yield np.arange(lo, hi, dtype=np.int64)


def enumerate_support(
    n: int, directed: bool, start: int = 0, stop: int | None = None
) -> Iterator[Graph]:
    """Stream every graph with index in ``[start, stop)`` in increasing order.

    Disjoint ranges may be consumed by separate workers.
    """
    for block in index_chunks(n, directed, 1 << 14, start, stop):
        for k in block.tolist():
            yield Graph(n, directed, k)


def partition(total: int, parts: int) -> list[tuple[int, int]]:
    """Split ``[0, total)`` into ``parts`` contiguous ranges."""
    parts = max(1, min(parts, total)) if total else 1
    edges = [total * p // parts for p in range(parts + 1)]
    return [(edges[p], edges[p + 1]) for p in range(parts)]


class AttributeTable(Mapping[str, np.ndarray]):
    """Named numeric node attributes for one network.

    Vectors are stored read-only; categorical values must already be numeric
    codes.
    """

    def __init__(self, n: int, values: Mapping[str, Sequence[float]] | None = None):
        self.n = int(n)
        data: dict[str, np.ndarray] = {}
        for name, vec in (values or {}).items():
            arr = np.array(vec, dtype=np.float64).reshape(-1)
            if arr.shape[0] != self.n:
                raise ValueError(
                    f"attribute {name!r} has {arr.shape[0]} entries, expected {self.n}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"attribute {name!r} has non-finite values")
            arr.setflags(write=False)
            data[str(name)] = arr
        self._data = data

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __eq__(self, other):
        if not isinstance(other, AttributeTable):
            return NotImplemented
        return (
            self.n == other.n
            and self._data.keys() == other._data.keys()
            and all(np.array_equal(self._data[k], other._data[k]) for k in self._data)
        )

    def __hash__(self):
        return hash((self.n, tuple((k, v.tobytes()) for k, v in sorted(self._data.items()))))

    def __repr__(self):
        body = ", ".join(f"{k}={v.tolist()}" for k, v in self._data.items())
        return f"AttributeTable(n={self.n}, {body})"
