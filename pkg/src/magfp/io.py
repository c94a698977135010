"""Plain-text serialization: coefficient dumps, operator triplets, traces and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .evolution import TrajectoryRecord
from .field import FieldState, Frame, GridConfig
from .operators import LinearOperatorRep

__all__ = [
    "dump_state",
    "load_state",
    "write_operator_coo",
    "read_operator_coo",
    "write_trajectory_csv",
    "write_json",
    "file_sha256",
    "to_jsonable",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dump_state(state: FieldState, path) -> Path:
    """Write ``# {json header}`` followed by ``index,re,im`` rows."""
    path = Path(path)
    header = {"grid": state.grid.to_dict(), "frame": state.frame.value, "shape": list(state.grid.shape)}
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "re", "im"])
        for i, c in enumerate(state.vector):
            w.writerow([i, _fmt(c.real), _fmt(c.imag)])
    return path


def load_state(path) -> FieldState:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing JSON header")
        header = json.loads(first[2:])
        rows = list(csv.reader(fh))[1:]
    grid = GridConfig(**header["grid"])
    vec = np.zeros(grid.size, dtype=complex)
    for i, re, im in rows:
        vec[int(i)] = complex(float(re), float(im))
    return FieldState.from_vector(grid, Frame(header["frame"]), vec)


def write_operator_coo(op: LinearOperatorRep, path) -> Path:
    """Coordinate text ``row,col,re,im`` with a JSON header line."""
    path = Path(path)
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    header = {"label": op.label, "frame": op.frame.value, "symmetry": op.symmetry.value,
              "shape": list(coo.shape), "nnz": int(coo.nnz), "grid": op.grid.to_dict()}
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "re", "im"])
        for k in order:
            v = coo.data[k]
            w.writerow([int(coo.row[k]), int(coo.col[k]), _fmt(v.real), _fmt(v.imag)])
    return path


def read_operator_coo(path):
    """Return ``(header, scipy.sparse.csr_matrix)``."""
    import scipy.sparse as sp

    path = Path(path)
    with path.open() as fh:
        header = json.loads(fh.readline()[2:])
        rows = list(csv.reader(fh))[1:]
    r = np.array([int(x[0]) for x in rows], dtype=int)
    c = np.array([int(x[1]) for x in rows], dtype=int)
    v = np.array([complex(float(x[2]), float(x[3])) for x in rows])
    return header, sp.csr_matrix((v, (r, c)), shape=tuple(header["shape"]))


def write_trajectory_csv(traj: TrajectoryRecord, path) -> Path:
    """One row per sample: ``t, mass, <named traces>``; floats in round-trip repr."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(traj.columns())
        for row in traj.rows():
            w.writerow([_fmt(x) for x in row])
    return path
