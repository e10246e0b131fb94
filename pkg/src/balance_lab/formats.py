"""Plain-text file formats and model persistence.

Every reader reports malformed input with the file name and line number.
Every table writer emits a ``# config <hash>`` comment and a header row, so
two runs with equal inputs and seeds produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .contagion import ContagionTrace, TreeEnsemble, _Tree
from .defense import DefenseModel, GameParams, RandomizedDefense, ReducedSpace
from .errors import UsageError
from .fracture import RelationMatrix
from .netcore import Partition, ShellIndex, SignedDiGraph, UndirectedGraph
from .signs import EspModel

__all__ = [
    "FORMAT_VERSION",
    "config_hash",
    "write_table",
    "read_table",
    "read_signed_edges",
    "write_signed_edges",
    "read_undirected_edges",
    "write_undirected_edges",
    "read_relation_matrix",
    "write_relation_matrix",
    "read_trace",
    "write_trace",
    "read_lexicon",
    "read_documents",
    "write_documents",
    "read_labels",
    "write_labels",
    "read_node_values",
    "write_node_values",
    "save_model",
    "load_model",
]

FORMAT_VERSION = "1"


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of ``config``."""
    text = json.dumps(config, sort_keys=True, default=_fmt, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _lines(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield no, s


def _fail(path, no, msg):
    raise UsageError(f"{path}:{no}: {msg}")


def write_table(out, header, rows, config, notes=()):
    """Comma-separated table with a config-hash comment and a header row.

    ``out`` is a path or a text stream. ``notes`` become extra
    ``# key=value`` comment lines after the hash.
    """
    lines = [f"# config {config_hash(config)}"]
    lines.extend(f"# {n}" for n in notes)
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def read_table(path):
    """``(header, rows)`` of a comma-separated table; comment lines skipped."""
    it = _lines(path)
    try:
        _, head = next(it)
    except StopIteration:
        raise UsageError(f"{path}: empty table") from None
    header = head.split(",")
    rows = []
    for no, line in it:
        parts = line.split(",")
        if len(parts) != len(header):
            _fail(path, no, f"expected {len(header)} fields, got {len(parts)}")
        rows.append(parts)
    return header, rows


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

def _int(path, no, s, what):
    try:
        return int(s)
    except ValueError:
        _fail(path, no, f"bad {what} {s!r}")


def read_signed_edges(path, n=None):
    """``u<TAB>v<TAB>sign`` lines as a SignedDiGraph.

    Vertex count is ``n`` or one more than the largest id.
    """
    edges = []
    for no, line in _lines(path):
        parts = line.split()
        if len(parts) != 3:
            _fail(path, no, "expected 'u<TAB>v<TAB>sign'")
        u, v = _int(path, no, parts[0], "vertex id"), _int(path, no, parts[1], "vertex id")
        try:
            s = float(parts[2])
        except ValueError:
            _fail(path, no, f"bad sign {parts[2]!r}")
        if s not in (1.0, -1.0):
            _fail(path, no, f"sign must be +1 or -1, got {parts[2]}")
        if u < 0 or v < 0:
            _fail(path, no, "negative vertex id")
        edges.append((u, v, int(s)))
    if not edges:
        raise UsageError(f"{path}: no edges")
    n_seen = max(max(u, v) for u, v, _ in edges) + 1
    n = n_seen if n is None else int(n)
    try:
        return SignedDiGraph(n, edges)
    except UsageError as e:
        raise UsageError(f"{path}: {e}") from None


def write_signed_edges(out, edges):
    text = "".join(f"{int(u)}\t{int(v)}\t{int(s):+d}\n" for u, v, s in edges)
    Path(out).write_text(text, encoding="utf-8")


def read_undirected_edges(path, n=None):
    """Undirected edge list: ``u<TAB>v`` with an optional weight column that must be 1."""
    edges = []
    header_n = None
    for no, line in _lines(path):
        parts = line.split()
        if parts[0] == "n" and len(parts) == 2:
            header_n = _int(path, no, parts[1], "vertex count")
            continue
        if len(parts) not in (2, 3):
            _fail(path, no, "expected 'u<TAB>v'")
        edges.append((_int(path, no, parts[0], "vertex id"), _int(path, no, parts[1], "vertex id")))
    n_seen = max((max(e) for e in edges), default=-1) + 1
    n = n if n is not None else (header_n if header_n is not None else n_seen)
    try:
        return UndirectedGraph(n, edges)
    except UsageError as e:
        raise UsageError(f"{path}: {e}") from None


def write_undirected_edges(out, g: UndirectedGraph):
    lines = [f"n\t{g.n}"] + [f"{int(u)}\t{int(v)}" for u, v in g.edges]
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# relation matrices
# ---------------------------------------------------------------------------

def read_relation_matrix(path) -> RelationMatrix:
    """First line ``n``, then ``n`` rows; ``?`` marks an unknown entry."""
    it = _lines(path)
    try:
        no, first = next(it)
    except StopIteration:
        raise UsageError(f"{path}: empty relation matrix") from None
    n = _int(path, no, first, "matrix size")
    Z = np.zeros((n, n))
    known = np.ones((n, n), dtype=bool)
    rows = 0
    for no, line in it:
        parts = line.split()
        if rows >= n:
            _fail(path, no, f"more than {n} rows")
        if len(parts) != n:
            _fail(path, no, f"expected {n} entries, got {len(parts)}")
        for j, p in enumerate(parts):
            if p == "?":
                known[rows, j] = False
            else:
                try:
                    Z[rows, j] = float(p)
                except ValueError:
                    _fail(path, no, f"bad entry {p!r}")
        rows += 1
    if rows != n:
        raise UsageError(f"{path}: expected {n} rows, got {rows}")
    if n and not known[~np.eye(n, dtype=bool)].any():
        raise UsageError(f"{path}: every off-diagonal relation is unknown")
    try:
        return RelationMatrix(Z, known)
    except UsageError as e:
        raise UsageError(f"{path}: {e}") from None


def write_relation_matrix(out, Z, known=None):
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    known = np.ones_like(Z, dtype=bool) if known is None else np.asarray(known)
    lines = [str(n)]
    for i in range(n):
        lines.append(" ".join(_fmt(Z[i, j]) if known[i, j] else "?" for j in range(n)))
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# traces, node tables, lexicons
# ---------------------------------------------------------------------------

def read_trace(path, horizon=None) -> ContagionTrace:
    """``t,node`` events under a ``t,node`` header; an optional ``# horizon=H`` comment."""
    text = Path(path).read_text(encoding="utf-8") if Path(path).exists() else None
    if text is None:
        raise UsageError(f"{path}: no such file")
    for line in text.splitlines():
        if line.startswith("# horizon=") and horizon is None:
            horizon = int(line.split("=", 1)[1])
    header, rows = read_table(path)
    if header != ["t", "node"]:
        raise UsageError(f"{path}: header must be 't,node'")
    t = np.array([int(r[0]) for r in rows], dtype=np.int64)
    v = np.array([int(r[1]) for r in rows], dtype=np.int64)
    if horizon is None:
        horizon = int(t.max()) if t.size else 1
    return ContagionTrace(t, v, horizon)


def write_trace(out, trace: ContagionTrace, config):
    rows = list(zip(trace.times.tolist(), trace.nodes.tolist()))
    write_table(out, ["t", "node"], rows, config, notes=[f"horizon={trace.horizon}"])


def read_node_values(path, column):
    """Per-node integer column (``node,<column>``) as an array indexed by node."""
    header, rows = read_table(path)
    if header != ["node", column]:
        raise UsageError(f"{path}: header must be 'node,{column}'")
    nodes = np.array([int(r[0]) for r in rows], dtype=np.int64)
    vals = np.array([int(r[1]) for r in rows], dtype=np.int64)
    if not np.array_equal(np.sort(nodes), np.arange(len(nodes))):
        raise UsageError(f"{path}: nodes must be 0..n-1 without gaps")
    out = np.empty(len(nodes), dtype=np.int64)
    out[nodes] = vals
    return out


def write_node_values(out, column, values, config):
    write_table(out, ["node", column], enumerate(np.asarray(values).tolist()), config)


def read_lexicon(path):
    """``word<TAB>score`` lines as a dict."""
    lex = {}
    for no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            _fail(path, no, "expected 'word<TAB>score'")
        try:
            lex[parts[0]] = float(parts[1])
        except ValueError:
            _fail(path, no, f"bad score {parts[1]!r}")
    return lex


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------

def read_documents(path):
    """``doc_id<TAB>word:count word:count ...`` lines as ``(ids, bags)``.

    ``bags`` is a list of ``{word: count}`` dicts in file order.
    """
    ids, bags = [], []
    seen = set()
    for no, line in _lines(path):
        doc_id, _, rest = line.partition("\t")
        if doc_id in seen:
            _fail(path, no, f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
        bag = {}
        for tok in rest.split():
            word, sep, cnt = tok.rpartition(":")
            if not sep or not word:
                _fail(path, no, f"bad token {tok!r}, expected word:count")
            c = _int(path, no, cnt, "count")
            if c < 0:
                _fail(path, no, f"negative count for {word!r}")
            bag[word] = bag.get(word, 0) + c
        ids.append(doc_id)
        bags.append(bag)
    if not ids:
        raise UsageError(f"{path}: no documents")
    return ids, bags


def bags_to_matrix(bags, vocabulary):
    """Count matrix over ``vocabulary``; unseen words are dropped."""
    index = {w: j for j, w in enumerate(vocabulary)}
    X = np.zeros((len(bags), len(vocabulary)))
    for i, bag in enumerate(bags):
        for w, c in bag.items():
            j = index.get(w)
            if j is not None:
                X[i, j] += c
    return X


def write_documents(out, ids, X, vocabulary):
    lines = []
    for doc_id, row in zip(ids, np.asarray(X)):
        nz = np.flatnonzero(row)
        lines.append(doc_id + "\t" + " ".join(f"{vocabulary[j]}:{int(row[j])}" for j in nz))
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels(path, ids):
    """``doc_id<TAB>{+1|-1}`` lines aligned to ``ids``."""
    lab = {}
    for no, line in _lines(path):
        parts = line.split()
        if len(parts) != 2 or parts[1] not in ("+1", "-1", "1"):
            _fail(path, no, "expected 'doc_id<TAB>+1' or 'doc_id<TAB>-1'")
        lab[parts[0]] = int(parts[1])
    if len(lab) != len(ids):
        raise UsageError(f"{path}: {len(lab)} labels for {len(ids)} documents")
    missing = [d for d in ids if d not in lab]
    if missing:
        raise UsageError(f"{path}: no label for document {missing[0]!r}")
    return np.array([lab[d] for d in ids], dtype=np.int64)


def write_labels(out, ids, y):
    Path(out).write_text("".join(f"{d}\t{int(v):+d}\n" for d, v in zip(ids, y)), encoding="utf-8")


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def _space_payload(space: ReducedSpace):
    if space is None:
        return None
    return {"basis": _arr(space.basis), "singular_values": _arr(space.singular_values), "tag": space.tag}


def _space_from(p):
    if p is None:
        return None
    return ReducedSpace(np.array(p["basis"], dtype=float), np.array(p["singular_values"], dtype=float),
                        p["tag"])


def _encode(model):
    if isinstance(model, EspModel):
        return "esp", {"c": _arr(model.c), "beta1": model.beta1, "beta2": model.beta2,
                       "transform": model.transform, "scale": _arr(model.scale)}
    if isinstance(model, TreeEnsemble):
        trees = [{"feature": _arr(t.feature), "threshold": _arr(t.threshold), "left": _arr(t.left),
                  "right": _arr(t.right), "value": _arr(t.value)} for t in model.trees]
        return "ensemble", {"trees": trees, "bootstrap_seeds": list(model.bootstrap_seeds),
                            "importances": _arr(model.importances), "oob_accuracy": model.oob_accuracy,
                            "n_features": model.n_features, "feature_names": list(model.feature_names)}
    if isinstance(model, DefenseModel):
        return "defense", {"w": _arr(model.w), "a": _arr(model.a), "space": _space_payload(model.space),
                           "params": asdict(model.params),
                           "history": [[int(t), float(v)] for t, v in model.history]}
    if isinstance(model, RandomizedDefense):
        return "randomized", {"subsets": [_arr(s) for s in model.subsets],
                              "weights": [_arr(w) for w in model.weights],
                              "space": _space_payload(model.space)}
    raise UsageError(f"cannot save object of type {type(model).__name__}")


def _decode(kind, p):
    if kind == "esp":
        scale = None if p["scale"] is None else np.array(p["scale"], dtype=float)
        c = np.array(p["c"], dtype=float)
        return EspModel(c, np.zeros(0), p["beta1"], p["beta2"], p["transform"], scale)
    if kind == "ensemble":
        trees = [_Tree(np.array(t["feature"], dtype=np.int64), np.array(t["threshold"], dtype=float),
                       np.array(t["left"], dtype=np.int64), np.array(t["right"], dtype=np.int64),
                       np.array(t["value"], dtype=float)) for t in p["trees"]]
        return TreeEnsemble(trees, list(p["bootstrap_seeds"]), np.array(p["importances"], dtype=float),
                            p["oob_accuracy"], p["n_features"], tuple(p["feature_names"]))
    if kind == "defense":
        return DefenseModel(np.array(p["w"], dtype=float), np.array(p["a"], dtype=float),
                            _space_from(p["space"]), GameParams(**p["params"]),
                            [tuple(h) for h in p["history"]])
    if kind == "randomized":
        return RandomizedDefense([np.array(s, dtype=np.int64) for s in p["subsets"]],
                                 [np.array(w, dtype=float) for w in p["weights"]], _space_from(p["space"]))
    raise UsageError(f"unknown model kind {kind!r}")


def save_model(out, model, config=None, extra=None):
    """Write ``model`` as one JSON document with a version and kind tag.

    ``extra`` holds side data such as a vocabulary. Floats are written in
    shortest round-trip form, so loading reproduces predictions exactly.
    """
    kind, payload = _encode(model)
    doc = {"format": "balance-lab-model", "version": FORMAT_VERSION, "kind": kind,
           "payload": payload, "config": config or {}, "extra": extra or {}}
    Path(out).write_text(json.dumps(doc, sort_keys=True, indent=1, default=_fmt) + "\n", encoding="utf-8")


def load_model(path, kind=None):
    """``(model, extra)`` from a file written by :func:`save_model`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not a model file ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != "balance-lab-model":
        raise UsageError(f"{path}: not a balance-lab model")
    if doc.get("version") != FORMAT_VERSION:
        raise UsageError(f"{path}: model format version {doc.get('version')!r}, expected {FORMAT_VERSION!r}")
    if kind is not None and doc["kind"] != kind:
        raise UsageError(f"{path}: holds a {doc['kind']} model, expected {kind}")
    return _decode(doc["kind"], doc["payload"]), doc.get("extra", {})


def partition_from(values) -> Partition:
    return Partition(np.asarray(values, dtype=np.int64))


def shells_from(values) -> ShellIndex:
    return ShellIndex(np.asarray(values, dtype=np.int64))
