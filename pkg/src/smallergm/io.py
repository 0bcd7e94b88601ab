"""Network and result files.

A network file is JSON::

    {"format": "smallergm-networks", "version": 1,
     "metadata": {...},
     "networks": [
        {"id": "a", "n": 4, "directed": true,
         "ties": [[0, 1], [2, 3]],
         "attributes": {"gender": [0, 1, 1, 0]}}]}

``ties`` may be replaced by ``adjacency`` (an n x n 0/1 matrix).  Attribute
values are numbers or strings; string attributes are coded as the index of
the value in the sorted set of values seen for that attribute across the
file, and the coding is returned in the metadata under ``"codes"``.

Non-finite numbers in result files are written as the strings ``"inf"``,
``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import AttributeTable, Graph, check_size, graph_from_adjacency, graph_from_edges

NETWORK_FORMAT = "smallergm-networks"
RESULT_FORMAT = "smallergm-result"
FILE_VERSION = 1


class FileFormatError(ValueError):
    """Structural problem in an input file; the message names the location."""


@dataclass
class NetworkFile:
    ids: list[str]
    sample: list[tuple[Graph, AttributeTable | None]]
    metadata: dict = field(default_factory=dict)

    @property
    def directed(self) -> bool:
        return self.sample[0][0].directed


def encode_number(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def decode_number(x) -> float:
    if isinstance(x, str) and x not in ("inf", "-inf", "nan"):
        raise ValueError(f"not a number: {x!r}")
    return float(x)


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise FileFormatError(f"{where}: expected an integer, got {value!r}")
    return value


def _string_codes(raw_nets: list) -> dict[str, list]:
    levels: dict[str, set] = {}
    for net in raw_nets:
        attrs = net.get("attributes") or {} if isinstance(net, dict) else {}
        if not isinstance(attrs, dict):
            continue
        for name, vec in attrs.items():
            if isinstance(vec, list) and any(isinstance(v, str) for v in vec):
                levels.setdefault(name, set()).update(v for v in vec if isinstance(v, str))
    return {name: sorted(vals) for name, vals in levels.items()}


def parse_networks(doc, source: str = "<input>") -> NetworkFile:
    """Validate a decoded network document."""
    if not isinstance(doc, dict):
        raise FileFormatError(f"{source}: top level must be an object")
    fmt = doc.get("format", NETWORK_FORMAT)
    if fmt != NETWORK_FORMAT:
        raise FileFormatError(f"{source}: format is {fmt!r}, expected {NETWORK_FORMAT!r}")
    version = doc.get("version", FILE_VERSION)
    if version != FILE_VERSION:
        raise FileFormatError(f"{source}: unsupported version {version!r}")
    raw = doc.get("networks")
    if not isinstance(raw, list) or not raw:
        raise FileFormatError(f"{source}: 'networks' must be a nonempty list")
    codes = _string_codes(raw)
    ids, sample, seen = [], [], set()
    directed_all = None
    for p, net in enumerate(raw):
        where = f"{source}: networks[{p}]"
        if not isinstance(net, dict):
            raise FileFormatError(f"{where}: must be an object")
        nid = str(net.get("id", p + 1))
        if nid in seen:
            raise FileFormatError(f"{where}: duplicate id {nid!r}")
        seen.add(nid)
        n = _int(net.get("n"), f"{where}.n")
        directed = net.get("directed", True)
        if not isinstance(directed, bool):
            raise FileFormatError(f"{where}.directed: expected true or false")
        if directed_all is None:
            directed_all = directed
        elif directed != directed_all:
            raise FileFormatError(f"{where}.directed: networks mix directed and undirected")
        try:
            check_size(n, directed)
        except ValueError as e:
            raise FileFormatError(f"{where}.n: {e}") from None
        if "ties" in net and "adjacency" in net:
            raise FileFormatError(f"{where}: give either 'ties' or 'adjacency', not both")
        if "adjacency" in net:
            adj = net["adjacency"]
            if (not isinstance(adj, list) or len(adj) != n
                    or any(not isinstance(r, list) or len(r) != n for r in adj)):
                raise FileFormatError(f"{where}.adjacency: expected a {n} x {n} matrix")
            try:
                g = graph_from_adjacency(np.array(adj), directed)
            except ValueError as e:
                raise FileFormatError(f"{where}.adjacency: {e}") from None
        else:
            ties = net.get("ties", [])
            if not isinstance(ties, list):
                raise FileFormatError(f"{where}.ties: expected a list of pairs")
            pairs = []
            for t, pair in enumerate(ties):
                if not isinstance(pair, list) or len(pair) != 2:
                    raise FileFormatError(f"{where}.ties[{t}]: expected a pair [i, j]")
                i, j = (_int(v, f"{where}.ties[{t}]") for v in pair)
                if not (0 <= i < n and 0 <= j < n):
                    raise FileFormatError(f"{where}.ties[{t}]: node index outside 0..{n - 1}")
                if i == j:
                    raise FileFormatError(f"{where}.ties[{t}]: self-ties are not allowed")
                pairs.append((i, j))
            g = graph_from_edges(n, directed, pairs)
        attrs_raw = net.get("attributes") or {}
        if not isinstance(attrs_raw, dict):
            raise FileFormatError(f"{where}.attributes: expected an object")
        values = {}
        for name, vec in attrs_raw.items():
            aw = f"{where}.attributes.{name}"
            if not isinstance(vec, list) or len(vec) != n:
                raise FileFormatError(f"{aw}: expected a list of {n} values")
            if name in codes:
                if not all(isinstance(v, str) for v in vec):
                    raise FileFormatError(f"{aw}: mixes strings and numbers")
                values[name] = [codes[name].index(v) for v in vec]
            else:
                if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec):
                    raise FileFormatError(f"{aw}: values must be numbers or strings")
                if not all(math.isfinite(v) for v in vec):
                    raise FileFormatError(f"{aw}: values must be finite")
                values[name] = vec
        attrs = AttributeTable(n, values) if values else None
        ids.append(nid)
        sample.append((g, attrs))
    meta = dict(doc.get("metadata") or {})
    if codes:
        meta["codes"] = codes
    return NetworkFile(ids, sample, meta)


def read_networks(path) -> NetworkFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FileFormatError(f"{path}: cannot read ({e.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_networks(doc, str(path))


def networks_document(nf: NetworkFile) -> dict:
    nets = []
    for nid, (g, attrs) in zip(nf.ids, nf.sample):
        entry = {"id": nid, "n": g.n, "directed": g.directed,
                 "ties": [list(t) for t in g.ties()]}
        if attrs:
            entry["attributes"] = {
                k: [int(v) if float(v).is_integer() else float(v) for v in attrs[k]]
                for k in attrs
            }
        nets.append(entry)
    meta = {k: v for k, v in nf.metadata.items() if k != "codes"}
    return {"format": NETWORK_FORMAT, "version": FILE_VERSION, "metadata": meta,
            "networks": nets}


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_networks(path, nf: NetworkFile) -> None:
    Path(path).write_text(dump_json(networks_document(nf)))


def read_json(path, what: str = "file") -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise FileFormatError(f"{path}: cannot read {what} ({e.strerror})") from None
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top level must be an object")
    return doc
