"""VTK (legacy ASCII) and CSV writers."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .assembly import FieldState
from .basis import map_triangle
from .weak import LocalOperatorCache


class OutputError(OSError):
    pass


def _lattice(s: int):
    """Barycentric points of the uniform level-s lattice and its s^2 triangles."""
    idx = {}
    pts = []
    for j in range(s + 1):
        for i in range(s + 1 - j):
            idx[i, j] = len(pts)
            pts.append((i / s, j / s))
    tris = []
    for j in range(s):
        for i in range(s - j):
            tris.append((idx[i, j], idx[i + 1, j], idx[i, j + 1]))
            if i + j < s - 1:
                tris.append((idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]))
    ref = np.array(pts)
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    return bary, np.array(tris)


def sample_fields(state: FieldState, cache: LocalOperatorCache, level: int | None = None):
    """Points (nc, n, 2), velocity (nc, n, 2), pressure (nc, n), divergence (nc, n)
    and local triangles for a uniform per-cell subdivision (default m+1)."""
    mesh = cache.mesh
    level = level or cache.m + 1
    bary, tris = _lattice(level)
    pts = map_triangle(mesh.vertices[mesh.cells], bary)
    phi = cache.basis.eval(pts)
    dphi = cache.basis.grad(pts)
    u = np.einsum("cqj,cjd->cqd", phi, state.u_interior)
    p = np.einsum("cqj,cj->cq", phi[..., :cache.n_pm1], state.p_interior)
    div = np.einsum("cqjd,cjd->cq", dphi, state.u_interior)
    return pts, u, p, div, tris


def write_vtk(state: FieldState, cache: LocalOperatorCache, path, level: int | None = None,
              title: str = "wgbf") -> Path:
    """Discontinuous fields on a subdivided mesh; points are duplicated per cell."""
    pts, u, p, div, tris = sample_fields(state, cache, level)
    nc, npc = pts.shape[:2]
    conn = (tris[None, :, :] + npc * np.arange(nc)[:, None, None]).reshape(-1, 3)
    n = nc * npc
    lines = ["# vtk DataFile Version 3.0", f"{title} t={state.t:.6g}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    xyz = np.column_stack([pts.reshape(-1, 2), np.zeros(n)])
    lines += [" ".join(f"{v:.10e}" for v in row) for row in xyz]
    lines.append(f"CELLS {len(conn)} {4 * len(conn)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in conn]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += ["5"] * len(conn)
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS velocity double")
    uv = np.column_stack([u.reshape(-1, 2), np.zeros(n)])
    lines += [" ".join(f"{v:.10e}" for v in row) for row in uv]
    for name, data in (("pressure", p), ("divergence", div)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [f"{v:.10e}" for v in data.ravel()]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{v:.6e}"
    return "" if v is None else str(v)


def write_csv(rows: list[dict], path, fieldnames=None) -> Path:
    """Rows of dicts with a header; floats as %.6e, missing/NaN as empty cells."""
    if fieldnames is None:
        fieldnames = []
        for r in rows:
            fieldnames += [k for k in r if k not in fieldnames]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(fieldnames)
            for r in rows:
                w.writerow([_fmt(r.get(k)) for k in fieldnames])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    """Inverse of :func:`write_csv`; integer cells become ints, other numeric
    cells floats, empty cells None."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                    continue
                for kind in (int, float):
                    try:
                        rec[k] = kind(v)
                        break
                    except ValueError:
                        continue
                else:
                    rec[k] = v
            out.append(rec)
    return out
