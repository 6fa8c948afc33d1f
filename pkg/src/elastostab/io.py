"""Field files, CSV export and deterministic JSON.

A field is stored as a JSON header plus a flat little-endian float64 array
in x-fastest order. Leading axes (snapshot, then component) vary slowest.
The array lives either in a sibling ``.bin`` file or, for ``.fld`` files,
after an 8-byte little-endian header length and the header itself.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from elastostab.grid import Grid, GridError, ScalarField, SymTensorField, VectorField

KINDS = {"scalar": ScalarField, "vector": VectorField, "symtensor": SymTensorField}
NCOMP = {"scalar": 0, "vector": 3, "symtensor": 6}
SIG_DIGITS = 12


class FieldFileError(ValueError):
    pass


def _kind_of(field) -> str:
    for k, cls in KINDS.items():
        if type(field) is cls:
            return k
    raise FieldFileError(f"cannot serialize {type(field).__name__}")


def field_header(field) -> dict:
    g = field.grid
    return {"dims": list(g.dims), "spacing": list(g.spacing), "origin": list(g.origin),
            "snapshots": g.snapshots, "dt": g.dt, "kind": _kind_of(field), "dtype": "f64le"}


def _to_x_fastest(values: np.ndarray) -> np.ndarray:
    nl = values.ndim - 3
    axes = tuple(range(nl)) + (nl + 2, nl + 1, nl)
    return np.ascontiguousarray(values.transpose(axes)).astype("<f8").ravel()


def _from_x_fastest(flat: np.ndarray, lead: tuple, dims: tuple) -> np.ndarray:
    arr = flat.reshape(lead + tuple(reversed(dims)))
    nl = len(lead)
    return np.ascontiguousarray(arr.transpose(tuple(range(nl)) + (nl + 2, nl + 1, nl)))


def _grid_from_header(h: dict) -> Grid:
    try:
        return Grid(tuple(h["dims"]), tuple(h["spacing"]), tuple(h["origin"]),
                    h.get("snapshots"), h.get("dt"))
    except (KeyError, TypeError) as exc:
        raise FieldFileError(f"bad field header: {exc}") from exc


def _lead_shape(h: dict) -> tuple:
    lead = (h["snapshots"],) if h.get("snapshots") else ()
    nc = NCOMP[h["kind"]]
    return lead + ((nc,) if nc else ())


def write_field(field, path) -> Path:
    """Write ``field``; ``.fld`` embeds the array, anything else gets a sibling ``.bin``."""
    path = Path(path)
    h = field_header(field)
    data = _to_x_fastest(field.values).tobytes()
    if path.suffix == ".fld":
        hb = json.dumps(h, sort_keys=True).encode()
        path.write_bytes(struct.pack("<Q", len(hb)) + hb + data)
    else:
        path.write_text(json.dumps(h, sort_keys=True, indent=1) + "\n")
        path.with_suffix(".bin").write_bytes(data)
    return path


def read_field(path):
    path = Path(path)
    if not path.exists():
        raise FieldFileError(f"field file {path} does not exist")
    if path.suffix == ".fld":
        raw = path.read_bytes()
        if len(raw) < 8:
            raise FieldFileError(f"{path} is truncated")
        (n,) = struct.unpack("<Q", raw[:8])
        h = json.loads(raw[8:8 + n])
        data = raw[8 + n:]
    else:
        h = json.loads(path.read_text())
        binp = path.with_suffix(".bin")
        if not binp.exists():
            raise FieldFileError(f"array file {binp} does not exist")
        data = binp.read_bytes()
    if h.get("dtype") != "f64le" or h.get("kind") not in KINDS:
        raise FieldFileError(f"unsupported field header {h}")
    g = _grid_from_header(h)
    lead = _lead_shape(h)
    flat = np.frombuffer(data, dtype="<f8")
    expected = int(np.prod(lead + g.dims))
    if flat.size != expected:
        raise FieldFileError(f"{path}: expected {expected} values, found {flat.size}")
    vals = _from_x_fastest(flat.astype(float), lead, g.dims)
    return KINDS[h["kind"]](g, vals)


def write_csv(field, path) -> Path:
    """Point coordinates plus one column per component (static fields only)."""
    if field.is_dynamic:
        raise GridError("CSV export needs a static field; take a snapshot first")
    path = Path(path)
    pts = field.grid.points()
    vals = field.values.reshape(-1, field.grid.n_points).T if field.values.ndim == 4 else field.values.reshape(-1, 1)
    kind = _kind_of(field)
    names = {"scalar": ["value"], "vector": ["u1", "u2", "u3"],
             "symtensor": ["e11", "e22", "e33", "e12", "e13", "e23"]}[kind]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "x3"] + names)
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v])
    return path


def round_sig(x: float, digits: int = SIG_DIGITS) -> float:
    if x == 0 or not math.isfinite(x):
        return x
    return float(f"{x:.{digits - 1}e}")


def canonical(obj):
    """Recursively convert numpy types and round floats to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = round_sig(float(obj))
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path
