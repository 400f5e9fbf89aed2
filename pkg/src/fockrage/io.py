"""Serialization: complex numbers as ``[re, im]``, CSV with a ``#`` header block,
atomic file writes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__


def versions():
    return {"fockrage": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def config_hash(config_dict):
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def to_jsonable(obj):
    """Convert numpy values; complex scalars and arrays become ``[re, im]`` leaves."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return np.stack([obj.real, obj.imag], axis=-1).tolist()
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _finite(float(obj))
    if isinstance(obj, float):
        return _finite(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _finite(x):
    return x if np.isfinite(x) else None


def complex_matrix(data):
    """Inverse of ``to_jsonable`` for a complex matrix written as nested ``[re, im]``."""
    a = np.asarray(data, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload, meta=None):
    doc = {"meta": meta, **to_jsonable(payload)} if meta is not None else to_jsonable(payload)
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write_bytes(path, text.encode())


def header_lines(meta):
    lines = [f"# {k}: {meta[k]}" for k in sorted(meta)]
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(path, columns, rows, meta):
    """CSV preceded by ``# key: value`` lines; floats use ``repr`` for round-tripping."""
    buf = io.StringIO()
    buf.write(header_lines(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    atomic_write_bytes(path, buf.getvalue().encode())


def read_csv(path):
    """Return ``(meta, columns, rows)``; rows are lists of strings."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                meta[key] = val
            else:
                body.append(line)
    rd = list(csv.reader(body))
    return meta, rd[0], rd[1:]
