"""Curve files, JSON output and content-hash manifests.

Curve CSVs start with ``# key=value`` metadata lines followed by a header
row. Every number is written with ``repr`` so files are bit-exact and
byte-stable across runs.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import DataError, ParseError
from .windows import CCDFCurve, ChangeProbCurve, ImpactCurve

__all__ = [
    "curve_filename",
    "format_number",
    "write_curve_csv",
    "read_curve_csv",
    "curve_to_dict",
    "write_json",
    "read_json",
    "sha256_file",
    "write_manifest",
    "read_manifest",
    "IMPACT_KINDS",
]

# curve kind on disk -> imbalance kind used by the windows module
IMPACT_KINDS = {"impact": "volume", "sign_impact": "sign", "trade_impact": "trade"}


def curve_filename(instrument: str, kind: str, N: int) -> str:
    return f"{instrument}_{kind}_{N}.csv"


def format_number(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) or math.isinf(v) else "nan"


def _columns(curve) -> tuple[dict, list[str], list[np.ndarray]]:
    if isinstance(curve, ImpactCurve):
        meta = {"type": "impact", "N": curve.N, "kind": curve.kind,
                "imbalance_std": format_number(curve.imbalance_std),
                "return_std": format_number(curve.return_std),
                "upper": format_number(curve.edges[-1]) if len(curve.edges) else "nan"}
        cols = ["lower", "center", "mean", "count", "stderr"]
        data = [curve.edges[:-1], curve.center, curve.mean, curve.count, curve.stderr]
    elif isinstance(curve, ChangeProbCurve):
        meta = {"type": "change_prob", "N": curve.N,
                "upper": format_number(curve.edges[-1]) if len(curve.edges) else "nan"}
        cols = ["lower", "center", "prob", "count", "stderr"]
        data = [curve.edges[:-1], curve.center, curve.prob, curve.count, curve.stderr]
    elif isinstance(curve, CCDFCurve):
        meta = {"type": "ccdf", "N": curve.N, "branch": curve.branch}
        cols = ["x", "prob"]
        data = [curve.x, curve.prob]
    else:
        raise TypeError(f"not a curve: {type(curve).__name__}")
    return meta, cols, data


def write_curve_csv(curve, path) -> None:
    meta, cols, data = _columns(curve)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([str(int(v)) if c == "count" else format_number(v) for c, v in zip(cols, row)])


def read_curve_csv(path):
    path = Path(path)
    meta: dict[str, str] = {}
    rows = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read curve file {path}: {exc.strerror}") from None
    body = []
    for i, line in enumerate(lines, 1):
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        else:
            body.append((i, line))
    if not body or "type" not in meta:
        raise ParseError(f"{path}: not a curve file", 1)
    header = body[0][1].split(",")
    for lineno, line in body[1:]:
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise ParseError(f"{path}: bad number", lineno) from None
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    col = {name: arr[:, i] for i, name in enumerate(header)}
    N = int(meta["N"])
    kind = meta["type"]
    if kind in ("impact", "change_prob"):
        edges = np.append(col["lower"], float(meta["upper"])) if len(arr) else np.zeros(0)
        count = col["count"].astype(np.int64)
        if kind == "impact":
            return ImpactCurve(N, meta["kind"], edges, col["center"], col["mean"], count,
                               col["stderr"], float(meta["imbalance_std"]),
                               float(meta["return_std"]))
        return ChangeProbCurve(N, edges, col["center"], col["prob"], count, col["stderr"])
    if kind == "ccdf":
        return CCDFCurve(N, meta["branch"], col["x"], col["prob"])
    raise ParseError(f"{path}: unknown curve type {kind!r}", 1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


def curve_to_dict(curve) -> dict:
    meta, cols, data = _columns(curve)
    out = {k: v for k, v in meta.items() if k not in ("upper",)}
    out["N"] = int(curve.N)
    for k in ("imbalance_std", "return_std"):
        if k in out:
            out[k] = float(out[k])
    if hasattr(curve, "edges"):
        out["edges"] = curve.edges
    for c, d in zip(cols, data):
        if c != "lower":
            out[c] = d
    return _jsonable(out)


def write_json(obj, path) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input artifact: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, files, extra: dict | None = None) -> Path:
    """List ``files`` (paths under ``out_dir``) with size and sha256.

    Written as ``manifest_<command>.json``; entries are sorted by path and
    contain nothing time-dependent.
    """
    out_dir = Path(out_dir)
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        rel = f.relative_to(out_dir.resolve()).as_posix()
        entries.append({"path": rel, "bytes": f.stat().st_size, "sha256": sha256_file(f)})
    path = out_dir / f"manifest_{command}.json"
    write_json({"command": command, "files": entries, **(extra or {})}, path)
    return path


def read_manifest(path) -> dict:
    return read_json(path)
