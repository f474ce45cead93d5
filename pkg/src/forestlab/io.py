"""Grid-spec and manifest files, presets, and deterministic JSON output."""
from __future__ import annotations

import json
import math
import os
from fractions import Fraction

import numpy as np

from .experiments import ExperimentManifest
from .forest import HONEYCOMB, Forest, GridSpec
from .linalg import Matrix

__all__ = ["load_grid_spec", "parse_grid_spec", "grid_spec_dict", "load_manifest",
           "dumps", "parse_direction", "GRID_PRESETS"]

GRID_PRESETS = {
    "honeycomb": {"dimension": 2, "grids": [{"matrix": "honeycomb"}]},
    "identity": {"dimension": 2, "grids": [{"matrix": "identity"}]},
}


def _matrix(entry, n: int) -> Matrix:
    if entry == "honeycomb":
        if n != 2:
            raise ValueError("the honeycomb preset is two-dimensional")
        return Matrix(HONEYCOMB)
    if entry == "identity":
        return Matrix.from_entries(np.eye(n, dtype=int).tolist())
    if isinstance(entry, str):
        raise ValueError(f"unknown matrix preset {entry!r}")
    rows = [list(r) for r in entry]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValueError(f"matrix must be {n} x {n}")
    return Matrix.from_entries(rows)


def parse_grid_spec(data: dict) -> Forest:
    """Build a Forest from ``{"dimension": n, "grids": [{"matrix", "translation"}]}``."""
    if not isinstance(data, dict) or "grids" not in data:
        raise ValueError("grid spec needs a 'grids' list")
    grids = data["grids"]
    if not grids:
        raise ValueError("grid spec has no grids")
    n = data.get("dimension")
    if n is None:
        first = grids[0]["matrix"]
        n = 2 if isinstance(first, str) else len(first)
    n = int(n)
    out = []
    for g in grids:
        m = _matrix(g["matrix"], n)
        t = g.get("translation")
        if t is not None and len(t) != n:
            raise ValueError(f"translation must have length {n}")
        out.append(GridSpec(m, None if t is None else np.array([float(Fraction(x)) if isinstance(x, str)
                                                                   else float(x) for x in t])))
    return Forest(tuple(out))


def load_grid_spec(path_or_preset: str) -> Forest:
    """Read a grid-spec JSON file, or expand a preset name."""
    if not os.path.exists(path_or_preset) and path_or_preset in GRID_PRESETS:
        return parse_grid_spec(GRID_PRESETS[path_or_preset])
    with open(path_or_preset) as fh:
        return parse_grid_spec(json.load(fh))


class Float17(float):
    """A float written with 17 significant digits by :func:`dumps`."""


def grid_spec_dict(forest: Forest) -> dict:
    grids = []
    for g in forest.grids:
        m = g.matrix
        if m.exact is not None:
            mat = [[str(x) if x.denominator != 1 else int(x) for x in row] for row in m.exact]
        else:
            mat = [[Float17(x) for x in row] for row in m.values.tolist()]
        grids.append({"matrix": mat, "translation": [Float17(x) for x in g.translation.tolist()]})
    return {"dimension": forest.n, "grids": grids}


def _prepare(obj, table):
    if isinstance(obj, Float17):
        table.append(format(float(obj), ".17g"))
        return f"\x00F{len(table) - 1}\x00"
    if isinstance(obj, dict):
        return {str(k): _prepare(v, table) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prepare(v, table) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_prepare(v, table) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, non-finite floats as null, Float17
    values with 17 significant digits."""
    table: list[str] = []
    text = json.dumps(_prepare(obj, table), sort_keys=True, indent=2, allow_nan=False)
    for i, s in enumerate(table):
        text = text.replace(f'"\\u0000F{i}\\u0000"', s)
    return text + "\n"


def load_manifest(path: str) -> ExperimentManifest:
    with open(path) as fh:
        data = json.load(fh)
    if "config" in data and "d" not in data:
        data = data["config"]
    return ExperimentManifest.from_dict(data)


def parse_direction(text: str, dim: int = 2) -> np.ndarray:
    """Comma-separated reals, or the presets ``golden`` (1, phi) and ``axis``
    (the last coordinate vector), normalised to unit length."""
    t = text.strip().lower()
    if t == "golden":
        if dim != 2:
            raise ValueError("the golden preset is two-dimensional")
        v = np.array([1.0, (1 + 5 ** 0.5) / 2])
    elif t == "axis":
        v = np.zeros(dim)
        v[-1] = 1.0
    else:
        v = np.array([float(x) for x in t.split(",")])
    n = np.linalg.norm(v)
    if not n > 0 or not np.isfinite(n):
        raise ValueError("direction must be a nonzero finite vector")
    return v / n
