"""Path export: CSV (one row per matrix entry) and JSON lines (one object per
path and time). Floats are written with 17 significant digits, which
round-trips IEEE doubles exactly."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..fbm import MatrixPath

HEADER = ["path_id", "t", "i", "j", "value"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _entries(path: MatrixPath):
    r, c = path.values.shape[1:]
    for i in range(r):
        for j in range(i if path.symmetric else 0, c):
            yield i, j


def export_paths(paths, fmt: str, destination) -> Path:
    """Write ``paths`` (an iterable of MatrixPath, e.g. a PathBatch) to ``destination``."""
    dest = Path(destination)
    paths = list(paths)
    if fmt not in ("csv", "json-lines", "jsonl"):
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        with open(dest, "w", newline="") as fh:
            if fmt == "csv":
                symmetric = all(p.symmetric for p in paths)
                fh.write(f"# symmetric={'true' if symmetric else 'false'}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(HEADER)
                for p in paths:
                    ents = list(_entries(p)) if symmetric else [
                        (i, j) for i in range(p.values.shape[1]) for j in range(p.values.shape[2])]
                    for k, t in enumerate(p.grid.times):
                        for i, j in ents:
                            w.writerow([p.path_id, _fmt(t), i, j, _fmt(p.values[k, i, j])])
            else:
                for p in paths:
                    for k, t in enumerate(p.grid.times):
                        rec = {"path_id": int(p.path_id), "t": _fmt(t), "shape": list(p.values.shape[1:]),
                               "symmetric": bool(p.symmetric), "values": [_fmt(x) for x in p.values[k].ravel()]}
                        fh.write(json.dumps(rec) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write paths to {dest}: {exc}") from exc
    return dest


def read_paths(source, fmt: str | None = None) -> dict:
    """Read an export back into ``{path_id: (times, values)}`` with full matrices."""
    src = Path(source)
    fmt = fmt or ("csv" if src.suffix == ".csv" else "jsonl")
    out: dict = {}
    try:
        with open(src) as fh:
            if fmt == "csv":
                flag = fh.readline().strip()
                symmetric = flag == "# symmetric=true"
                rows = list(csv.DictReader(fh))
                cells: dict = {}
                for r in rows:
                    key = int(r["path_id"])
                    cells.setdefault(key, {}).setdefault(float(r["t"]), {})[(int(r["i"]), int(r["j"]))] = \
                        float(r["value"])
                for key, by_t in cells.items():
                    times = np.array(sorted(by_t))
                    size = 1 + max(max(i, j) for e in by_t.values() for i, j in e)
                    vals = np.zeros((times.size, size, size))
                    for k, t in enumerate(times):
                        for (i, j), x in by_t[t].items():
                            vals[k, i, j] = x
                            if symmetric:
                                vals[k, j, i] = x
                    out[key] = (times, vals)
            else:
                acc: dict = {}
                for line in fh:
                    rec = json.loads(line)
                    acc.setdefault(rec["path_id"], []).append(
                        (float(rec["t"]), np.array([float(x) for x in rec["values"]]).reshape(rec["shape"])))
                for key, items in acc.items():
                    out[key] = (np.array([t for t, _ in items]), np.stack([v for _, v in items]))
    except OSError as exc:
        raise OSError(f"cannot read paths from {src}: {exc}") from exc
    return out
