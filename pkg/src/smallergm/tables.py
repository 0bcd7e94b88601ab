"""Collapsed exact supports.

A :class:`StatTable` lists every distinct ``(statistics, offset)`` row reached
by some graph of the support together with the number of graphs ``W`` that
share it.  Graphs whose offset is ``-inf`` are dropped.  Rows are sorted
lexicographically by statistic vector, then by offset.

Building streams over graph indices in chunks.  Each chunk is reduced to
distinct base-statistic rows.  Partial results are merged whenever more than
``merge_threshold`` rows are pending, so peak memory is bounded by
``chunk_size`` codes plus the distinct rows seen so far.  More than
``max_rows`` distinct base rows aborts the build with ``MemoryError``.

Cache file layout (little-endian)::

    magic      8 bytes  b"SERGMTBL"
    version    uint32   FORMAT_VERSION
    meta_len   uint32
    meta       meta_len bytes of UTF-8 JSON
    rows       uint64   R
    cols       uint32   k
    Q          R*k float64, column-major
    W          R uint64
    O          R float64
    checksum   32 bytes, SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import (
    CELL_ORDER_VERSION,
    AttributeTable,
    check_size,
    index_chunks,
    n_cells,
    partition,
    support_size,
)
from .terms import ModelSpec, StatKernel

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"SERGMTBL"
DEFAULT_CHUNK = 1 << 18
DEFAULT_MERGE_THRESHOLD = 1 << 21
DEFAULT_MAX_ROWS = 1 << 25
# supports up to this many graphs get an in-memory graph->row index for sampling
MATERIALIZE_LIMIT = 1 << 22


class SupportError(ValueError):
    """The constrained support is empty or otherwise unusable."""


@dataclass(eq=False)
class StatTable:
    Q: np.ndarray
    W: np.ndarray
    O: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Q = np.ascontiguousarray(self.Q, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.uint64)
        self.O = np.asarray(self.O, dtype=np.float64)
        for a in (self.Q, self.W, self.O):
            a.setflags(write=False)
        self._logW = np.log(self.W.astype(np.float64))
        self._logW.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.Q.shape[0]

    @property
    def k(self) -> int:
        return self.Q.shape[1]

    @property
    def n(self) -> int:
        return self.meta["n"]

    @property
    def directed(self) -> bool:
        return self.meta["directed"]

    @property
    def key(self) -> str | None:
        return self.meta.get("key")

    @property
    def logW(self) -> np.ndarray:
        return self._logW

    @property
    def total_weight(self) -> int:
        return int(self.W.sum(dtype=np.uint64))

    @property
    def bounds(self) -> np.ndarray:
        return table_bounds(self)

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.meta, sort_keys=True).encode()
        body = b"".join(
            [
                MAGIC,
                struct.pack("<II", FORMAT_VERSION, len(meta)),
                meta,
                struct.pack("<QI", self.rows, self.k),
                np.asfortranarray(self.Q).astype("<f8").tobytes(order="F"),
                self.W.astype("<u8").tobytes(),
                self.O.astype("<f8").tobytes(),
            ]
        )
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "StatTable":
        if len(data) < 56 or data[:8] != MAGIC:
            raise ValueError("not a table file")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise ValueError("table checksum mismatch")
        version, meta_len = struct.unpack_from("<II", body, 8)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported table format version {version}")
        off = 16
        meta = json.loads(body[off : off + meta_len].decode())
        off += meta_len
        rows, k = struct.unpack_from("<QI", body, off)
        off += 12
        q = np.frombuffer(body, "<f8", rows * k, off).reshape((rows, k), order="F")
        off += 8 * rows * k
        w = np.frombuffer(body, "<u8", rows, off)
        off += 8 * rows
        o = np.frombuffer(body, "<f8", rows, off)
        off += 8 * rows
        if off != len(body):
            raise ValueError("trailing bytes in table file")
        return cls(q.astype(np.float64), w.astype(np.uint64), o.astype(np.float64), meta)

    def expand(self) -> np.ndarray:
        """Statistic rows repeated by multiplicity (small tables only)."""
        return np.repeat(self.Q, self.W.astype(np.int64), axis=0)

    def __repr__(self):
        return (
            f"StatTable(n={self.meta.get('n')}, rows={self.rows}, k={self.k}, "
            f"weight={self.total_weight})"
        )


def table_bounds(table: StatTable) -> np.ndarray:
    """Column-wise ``(min, max)`` of ``Q`` as a ``(k, 2)`` array."""
    return np.column_stack([table.Q.min(axis=0), table.Q.max(axis=0)])


def _referenced_attrs(model: ModelSpec, attrs: AttributeTable | None) -> dict:
    return {a: [float(v) for v in attrs[a]] for a in model.attributes} if attrs else {}


def table_cache_key(n: int, directed: bool, model: ModelSpec, attrs: AttributeTable | None) -> str:
    """Stable content hash of everything a table depends on.

    Only attributes the model references enter the key, so networks that
    differ in unused attributes share a table.
    """
    payload = {
        "cell_order": CELL_ORDER_VERSION,
        "format": FORMAT_VERSION,
        "n": int(n),
        "directed": bool(directed),
        "formula": model.formula(),
        "attrs": _referenced_attrs(model, attrs),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# --- aggregation ---------------------------------------------------------------


class _Keyer:
    """Mixed-radix int64 keys for integer-valued base rows, or byte keys otherwise."""

    def __init__(self, kernel: StatKernel):
        feats = kernel.features
        self.lo = np.array([f.lo for f in feats])
        span = [int(f.hi - f.lo) + 1 for f in feats]
        total = 1
        for s in span:
            total *= s
        self.radix = all(f.integral for f in feats) and total < (1 << 62)
        strides, acc = [], 1
        for s in reversed(span):
            strides.append(acc)
            acc *= s
        self.strides = np.array(list(reversed(strides)), dtype=np.int64)
        self.span = np.array(span, dtype=np.int64)
        self.width = len(feats)

    def encode(self, base: np.ndarray) -> np.ndarray:
        if self.radix:
            return ((base - self.lo).astype(np.int64) * self.strides).sum(axis=1)
        b = np.ascontiguousarray(base + 0.0)
        return b.view(np.dtype((np.void, 8 * self.width))).ravel()

    def decode(self, keys: np.ndarray) -> np.ndarray:
        if self.radix:
            digits = (keys[:, None] // self.strides) % self.span
            return digits.astype(np.float64) + self.lo
        return np.frombuffer(keys.tobytes(), dtype=np.float64).reshape(-1, self.width)


def _merge(keys: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, inv = np.unique(keys, return_inverse=True)
    c = np.bincount(inv.ravel(), weights=counts, minlength=len(u))
    return u, c.astype(np.int64)


def _aggregate_range(kernel, keyer, n, directed, lo, hi, chunk_size, merge_threshold, max_rows):
    pend_k: list[np.ndarray] = []
    pend_c: list[np.ndarray] = []
    pending = 0
    for codes in index_chunks(n, directed, chunk_size, lo, hi):
        keys = keyer.encode(kernel.base(codes))
        u, c = np.unique(keys, return_counts=True)
        pend_k.append(u)
        pend_c.append(c.astype(np.int64))
        pending += len(u)
        if pending > merge_threshold:
            u, c = _merge(np.concatenate(pend_k), np.concatenate(pend_c))
            if len(u) > max_rows:
                raise MemoryError(
                    f"more than {max_rows} distinct statistic rows; raise max_rows to continue"
                )
            pend_k, pend_c, pending = [u], [c], len(u)
    if not pend_k:
        return keyer.encode(np.empty((0, keyer.width))), np.empty(0, dtype=np.int64)
    return _merge(np.concatenate(pend_k), np.concatenate(pend_c))


def build_table(
    n: int,
    directed: bool,
    model: ModelSpec,
    attrs: AttributeTable | None = None,
    *,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    merge_threshold: int = DEFAULT_MERGE_THRESHOLD,
    max_rows: int = DEFAULT_MAX_ROWS,
) -> StatTable:
    """Enumerate the support of ``model`` on ``n`` nodes and collapse it."""
    check_size(n, directed)
    if directed != model.directed:
        raise ValueError("model and requested table disagree on directedness")
    kernel = StatKernel(model, n, attrs)
    keyer = _Keyer(kernel)
    total = support_size(n, directed)
    ranges = partition(total, max(1, threads) * 4 if threads > 1 else 1)
    args = (kernel, keyer, n, directed)
    tail = (chunk_size, merge_threshold, max_rows)
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda r: _aggregate_range(*args, r[0], r[1], *tail), ranges))
    else:
        parts = [_aggregate_range(*args, lo, hi, *tail) for lo, hi in ranges]
    keys, counts = _merge(
        np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    )
    base = keyer.decode(keys)
    q, o, keep = kernel.finish(base)
    counts = counts[keep]
    if counts.size == 0:
        raise SupportError(
            f"every graph on n={n} nodes is excluded by the model constraints "
            f"({model.formula()})"
        )
    q, o, w = _collapse(q, o, counts)
    meta = {
        "n": int(n),
        "directed": bool(directed),
        "formula": model.formula(),
        "terms": model.names,
        "key": table_cache_key(n, directed, model, attrs),
        "total_graphs": total,
        "cell_order": CELL_ORDER_VERSION,
    }
    return StatTable(q, w, o, meta)


def _collapse(q: np.ndarray, o: np.ndarray, counts: np.ndarray):
    """Merge identical ``(Q, O)`` rows and sort them lexicographically."""
    rows = np.column_stack([q, o])
    order = np.lexsort(rows.T[::-1])
    rows, counts = rows[order], counts[order]
    if len(rows) > 1:
        new = np.any(rows[1:] != rows[:-1], axis=1)
        starts = np.concatenate([[0], np.nonzero(new)[0] + 1])
    else:
        starts = np.zeros(len(rows), dtype=np.int64)
    w = np.add.reduceat(counts, starts) if len(rows) else counts
    rows = rows[starts]
    return rows[:, :-1], rows[:, -1], w.astype(np.uint64)


# --- row -> graph recovery -------------------------------------------------------


class GraphLocator:
    """Find the ``j``-th graph (in index order) belonging to a table row.

    Small supports keep a sorted graph index in memory; larger ones are
    re-enumerated in one streaming pass per request batch.
    """

    def __init__(self, table: StatTable, model: ModelSpec, attrs: AttributeTable | None = None,
                 materialize: bool | None = None, chunk_size: int = DEFAULT_CHUNK):
        self.table, self.chunk_size = table, chunk_size
        self.kernel = StatKernel(model, table.n, attrs)
        self.keyer = _Keyer(self.kernel)
        self._lookup = {
            r.tobytes(): i
            for i, r in enumerate(np.column_stack([table.Q, table.O]) + 0.0)
        }
        total = support_size(table.n, table.directed)
        if materialize is None:
            materialize = total <= MATERIALIZE_LIMIT
        self.materialized = materialize
        self._order = self._starts = None
        if materialize:
            ids = np.concatenate(
                [self.row_ids(c) for c in index_chunks(table.n, table.directed, chunk_size)]
            )
            self._order = np.argsort(ids, kind="stable")
            n_excluded = int((ids < 0).sum())
            self._starts = n_excluded + np.concatenate(
                [[0], np.cumsum(table.W.astype(np.int64))[:-1]]
            )

    def row_ids(self, codes: np.ndarray) -> np.ndarray:
        """Table row of each graph code, ``-1`` where the offset is ``-inf``."""
        keys = self.keyer.encode(self.kernel.base(codes))
        u, inv = np.unique(keys, return_inverse=True)
        q, o, keep = self.kernel.finish(self.keyer.decode(u))
        ids_u = np.full(len(u), -1, dtype=np.int64)
        rows = np.column_stack([q, o]) + 0.0
        kept = np.nonzero(keep)[0]
        for pos, r in zip(kept, rows):
            rid = self._lookup.get(r.tobytes())
            if rid is None:
                raise RuntimeError("graph statistics not found in table; table is stale")
            ids_u[pos] = rid
        return ids_u[inv.ravel()]

    def locate(self, rows: np.ndarray, ranks: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        ranks = np.asarray(ranks, dtype=np.int64)
        w = self.table.W.astype(np.int64)
        if np.any(ranks < 0) or np.any(ranks >= w[rows]):
            raise ValueError("rank outside row multiplicity")
        if self.materialized:
            return self._order[self._starts[rows] + ranks].astype(np.int64)
        return self._stream(rows, ranks)

    def _stream(self, rows, ranks):
        out = np.full(len(rows), -1, dtype=np.int64)
        seen = np.zeros(self.table.rows, dtype=np.int64)
        todo = np.arange(len(rows))
        for codes in index_chunks(self.table.n, self.table.directed, self.chunk_size):
            if todo.size == 0:
                break
            ids = self.row_ids(codes)
            valid = ids >= 0
            cnt = np.bincount(ids[valid], minlength=self.table.rows)
            order = np.argsort(np.where(valid, ids, -1), kind="stable")
            start = int((~valid).sum()) + np.concatenate([[0], np.cumsum(cnt)[:-1]])
            r, local = rows[todo], ranks[todo] - seen[rows[todo]]
            hit = (local >= 0) & (local < cnt[r])
            out[todo[hit]] = codes[order[start[r[hit]] + local[hit]]]
            todo = todo[~hit]
            seen += cnt
        return out


# --- cache ---------------------------------------------------------------------


class TableCache:
    """In-memory table cache with an optional on-disk store.

    Corrupt or unreadable files are reported with a warning and rebuilt.
    """

    def __init__(self, directory: str | os.PathLike | None = None, threads: int = 1,
                 **build_options):
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self.threads = threads
        self.build_options = build_options
        self._mem: dict[str, StatTable] = {}
        self._locators: dict[str, GraphLocator] = {}
        self._lock = threading.Lock()
        self.builds = 0

    def path_for(self, key: str) -> Path | None:
        return None if self.directory is None else self.directory / f"{key}.tbl"

    def get(self, n: int, directed: bool, model: ModelSpec,
            attrs: AttributeTable | None = None) -> StatTable:
        key = table_cache_key(n, directed, model, attrs)
        with self._lock:
            tab = self._mem.get(key)
        if tab is not None:
            return tab
        tab = self._load(key)
        if tab is None:
            tab = build_table(n, directed, model, attrs, threads=self.threads,
                              **self.build_options)
            self.builds += 1
            self._store(key, tab)
        with self._lock:
            self._mem.setdefault(key, tab)
            return self._mem[key]

    def locator(self, n: int, directed: bool, model: ModelSpec,
                attrs: AttributeTable | None = None) -> GraphLocator:
        key = table_cache_key(n, directed, model, attrs)
        with self._lock:
            loc = self._locators.get(key)
        if loc is None:
            loc = GraphLocator(self.get(n, directed, model, attrs), model, attrs)
            with self._lock:
                loc = self._locators.setdefault(key, loc)
        return loc

    def _load(self, key: str) -> StatTable | None:
        path = self.path_for(key)
        if path is None or not path.exists():
            return None
        try:
            tab = StatTable.from_bytes(path.read_bytes())
            if tab.meta.get("key") != key:
                raise ValueError("key mismatch")
            return tab
        except (ValueError, OSError, struct.error, json.JSONDecodeError) as e:
            warnings.warn(f"ignoring corrupt table cache file {path}: {e}; rebuilding")
            return None

    def _store(self, key: str, tab: StatTable) -> None:
        path = self.path_for(key)
        if path is None:
            return
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        tmp.write_bytes(tab.to_bytes())
        os.replace(tmp, path)


_default_cache = TableCache()


def default_cache() -> TableCache:
    return _default_cache
