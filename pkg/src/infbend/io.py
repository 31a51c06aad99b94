"""Field container documents and mesh export.

A container is a JSON object::

    {"grid": {"ranges": [[a, b], ...], "counts": [nu, nv(, ns)]},
     "ambient_dim": d or null,
     "values": [...]}

with ``values`` flattened row-major, u fastest, components of a vector
contiguous per node.  Python's float ``repr`` round-trips IEEE doubles, so
the encoding is bit exact.  A bundle is ``{"fields": {name: container},
"meta": {...}}``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid_calculus import Grid, ScalarField, VecField


def _to_flat(values: np.ndarray, ndim: int) -> np.ndarray:
    # grid axes reversed so u varies fastest
    axes = tuple(reversed(range(ndim))) + tuple(range(ndim, values.ndim))
    return np.transpose(values, axes).ravel()


def _from_flat(flat, shape: tuple[int, ...], trailing: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(flat, dtype=np.float64).reshape(tuple(reversed(shape)) + trailing)
    nd = len(shape)
    axes = tuple(reversed(range(nd))) + tuple(range(nd, arr.ndim))
    return np.transpose(arr, axes).copy()


def grid_doc(grid: Grid) -> dict:
    return {"ranges": [list(r) for r in grid.ranges], "counts": list(grid.counts)}


def grid_from_doc(doc: dict) -> Grid:
    return Grid(tuple(tuple(float(x) for x in r) for r in doc["ranges"]),
                tuple(int(n) for n in doc["counts"]))


def field_to_doc(f) -> dict:
    """Container for a ScalarField, VecField or raw per-node array (with ``grid``)."""
    if isinstance(f, tuple):
        grid, values = f
    else:
        grid, values = f.grid, f.values
    values = np.asarray(values, dtype=np.float64)
    trailing = values.shape[grid.ndim:]
    doc = {
        "grid": grid_doc(grid),
        "ambient_dim": int(trailing[0]) if len(trailing) == 1 else None,
        "values": _to_flat(values, grid.ndim).tolist(),
    }
    if len(trailing) > 1:
        doc["shape"] = list(trailing)
    return doc


def field_from_doc(doc: dict):
    grid = grid_from_doc(doc["grid"])
    if "shape" in doc:
        trailing = tuple(doc["shape"])
    elif doc.get("ambient_dim") is not None:
        trailing = (int(doc["ambient_dim"]),)
    else:
        trailing = ()
    values = _from_flat(doc["values"], grid.shape, trailing)
    if trailing == ():
        return ScalarField(grid, values)
    if len(trailing) == 1:
        return VecField(grid, values)
    return grid, values


def write_bundle(path, fields: dict, meta: dict | None = None) -> None:
    doc = {"fields": {k: field_to_doc(v) for k, v in fields.items()}, "meta": meta or {}}
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def read_bundle(path) -> tuple[dict, dict]:
    doc = json.loads(Path(path).read_text())
    return {k: field_from_doc(v) for k, v in doc["fields"].items()}, doc.get("meta", {})


def write_obj(path, points: np.ndarray, mask: np.ndarray | None = None,
              coords: tuple[int, int, int] = (0, 1, 2)) -> int:
    """Write a (nu, nv, d) point grid as an OBJ quad mesh projected on ``coords``.

    Quads touching a masked-out node are dropped.  Returns the face count.
    """
    nu, nv = points.shape[:2]
    mask = np.ones((nu, nv), bool) if mask is None else mask
    lines = ["# infbend slice"]
    for i in range(nu):
        for j in range(nv):
            x = points[i, j, list(coords)]
            lines.append("v {:.12g} {:.12g} {:.12g}".format(*x))
    faces = 0
    for i in range(nu - 1):
        for j in range(nv - 1):
            if mask[i, j] and mask[i + 1, j] and mask[i + 1, j + 1] and mask[i, j + 1]:
                a = i * nv + j + 1
                lines.append(f"f {a} {a + nv} {a + nv + 1} {a + 1}")
                faces += 1
    Path(path).write_text("\n".join(lines) + "\n")
    return faces
