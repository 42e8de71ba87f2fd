"""Triangular meshes with edge topology, orientations and size metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for invalid or inconsistent mesh input."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation of a planar polygonal domain.

    Local edge ``j`` of a cell joins its vertices ``j+1`` and ``j+2`` (mod 3),
    i.e. it is the edge opposite vertex ``j``.  Edges are stored with the lower
    vertex index first; ``edge_normals`` is the unit tangent rotated by -90
    degrees, and ``cell_edge_signs`` maps it to the outward normal of a cell.
    """

    vertices: np.ndarray        # (nv, 2)
    cells: np.ndarray           # (nc, 3), counter-clockwise
    edges: np.ndarray           # (ne, 2), edges[:, 0] < edges[:, 1]
    cell_edges: np.ndarray      # (nc, 3)
    cell_edge_signs: np.ndarray  # (nc, 3), +1/-1
    edge_cells: np.ndarray      # (ne, 2), second entry -1 on the boundary
    boundary_edges: np.ndarray  # (nb,)
    edge_normals: np.ndarray    # (ne, 2)
    h_cell: np.ndarray          # (nc,)
    h_edge: np.ndarray          # (ne,)
    areas: np.ndarray           # (nc,)
    n_reoriented: int = 0
    is_boundary_edge: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        flags = np.zeros(len(self.edges), dtype=bool)
        flags[self.boundary_edges] = True
        object.__setattr__(self, "is_boundary_edge", flags)
        for name in ("vertices", "cells", "edges", "cell_edges", "cell_edge_signs",
                     "edge_cells", "boundary_edges", "edge_normals", "h_cell",
                     "h_edge", "areas", "is_boundary_edge"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return float(self.h_cell.max())

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary_edge)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def cell_vertices(self, k: int) -> np.ndarray:
        return self.vertices[self.cells[k]]

    def outward_normals(self) -> np.ndarray:
        """Outward unit normals n_K, shape (nc, 3, 2)."""
        return self.edge_normals[self.cell_edges] * self.cell_edge_signs[..., None]

    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)


def _signed_areas(vertices, cells):
    p = vertices[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def compute_topology(vertices, cells, *, reorient: bool = True) -> Mesh:
    """Build a :class:`Mesh` from raw vertex coordinates and cell triples.

    Clockwise cells are flipped (and counted in ``Mesh.n_reoriented``) unless
    ``reorient`` is False, in which case they are rejected.
    """
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    nv = len(vertices)
    if len(cells) == 0:
        raise MeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= nv:
        bad = int(np.flatnonzero((cells < 0).any(1) | (cells >= nv).any(1))[0])
        raise MeshError(f"cell {bad} references a vertex index out of range [0, {nv})")
    if np.any(cells[:, 0] == cells[:, 1]) or np.any(cells[:, 1] == cells[:, 2]) \
            or np.any(cells[:, 0] == cells[:, 2]):
        raise MeshError("cell with repeated vertex")
    if len(np.unique(np.sort(cells, axis=1), axis=0)) != len(cells):
        raise MeshError("duplicate cells")

    area = _signed_areas(vertices, cells)
    scale = np.ptp(vertices, axis=0).max() ** 2
    if np.any(np.abs(area) <= 1e-14 * scale):
        raise MeshError("degenerate (zero-area) cell")
    flipped = area < 0
    n_flip = int(flipped.sum())
    if n_flip:
        if not reorient:
            raise MeshError(f"{n_flip} clockwise cells")
        log.warning("reoriented %d clockwise cells", n_flip)
        cells = cells.copy()
        cells[flipped] = cells[flipped][:, [0, 2, 1]]
        area = np.abs(area)

    nc = len(cells)
    # local edge j is (v[j+1], v[j+2])
    a = cells[:, [1, 2, 0]]
    b = cells[:, [2, 0, 1]]
    lo = np.minimum(a, b).ravel()
    hi = np.maximum(a, b).ravel()
    keys = lo * nv + hi
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError(f"non-manifold edge shared by {counts.max()} cells")
    edges = np.stack([uniq // nv, uniq % nv], axis=1)
    cell_edges = inverse.reshape(nc, 3)
    cell_edge_signs = np.where(a < b, 1, -1).astype(np.int64)

    ne = len(edges)
    edge_cells = -np.ones((ne, 2), dtype=np.int64)
    owner = np.repeat(np.arange(nc), 3)
    flat = cell_edges.ravel()
    order = np.argsort(flat, kind="stable")
    first = np.ones(len(flat), dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    edge_cells[flat[order][first], 0] = owner[order][first]
    edge_cells[flat[order][~first], 1] = owner[order][~first]
    boundary = np.flatnonzero(counts == 1)

    # interior edges must be traversed in opposite directions by their two cells
    signs = np.zeros((ne, 2), dtype=np.int64)
    for col in range(2):
        sel = edge_cells[:, col] >= 0
        cidx = edge_cells[sel, col]
        loc = np.argmax(cell_edges[cidx] == np.flatnonzero(sel)[:, None], axis=1)
        signs[sel, col] = cell_edge_signs[cidx, loc]
    interior = counts == 2
    if np.any(signs[interior, 0] == signs[interior, 1]):
        raise MeshError("inconsistent orientation across an interior edge")

    t = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    h_edge = np.hypot(t[:, 0], t[:, 1])
    normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / h_edge[:, None]
    h_cell = h_edge[cell_edges].max(axis=1)

    return Mesh(vertices=vertices, cells=cells, edges=edges, cell_edges=cell_edges,
                cell_edge_signs=cell_edge_signs, edge_cells=edge_cells,
                boundary_edges=boundary, edge_normals=normals, h_cell=h_cell,
                h_edge=h_edge, areas=np.abs(area), n_reoriented=n_flip)


def generate_uniform(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0), diagonal: str = "ll-ur") -> Mesh:
    """Uniform grid of ``nx`` x ``ny`` rectangles, each split into two
    triangles along ``diagonal`` ('ll-ur' or 'lr-ul')."""
    if int(nx) < 1 or int(ny) < 1:
        raise MeshError(f"nx and ny must be positive, got {nx}, {ny}")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain {domain}")
    if diagonal not in ("ll-ur", "lr-ul"):
        raise MeshError(f"unknown diagonal {diagonal!r}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = (i + j * (nx + 1)).ravel()
    lr, ul = ll + 1, ll + nx + 1
    ur = ul + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    if diagonal == "ll-ur":
        cells[0::2] = np.column_stack([ll, lr, ur])
        cells[1::2] = np.column_stack([ll, ur, ul])
    else:
        cells[0::2] = np.column_stack([ll, lr, ul])
        cells[1::2] = np.column_stack([lr, ur, ul])
    return compute_topology(vertices, cells)


def _data_lines(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _parse_vc(path: Path):
    lines = _data_lines(path)
    vertices, cells = [], []

    def header(expect):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshError(f"{path}: missing '{expect}' header") from None
        if len(tok) != 2 or tok[0] != expect:
            raise MeshError(f"{path}:{lineno}: expected '{expect} <count>'")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: bad count {tok[1]!r}") from None

    def rows(count, width, conv, out):
        for _ in range(count):
            try:
                lineno, tok = next(lines)
            except StopIteration:
                raise MeshError(f"{path}: unexpected end of file") from None
            if len(tok) != width:
                raise MeshError(f"{path}:{lineno}: expected {width} values, got {len(tok)}")
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshError(f"{path}:{lineno}: cannot parse {' '.join(tok)!r}") from None

    rows(header("vertices"), 2, float, vertices)
    rows(header("cells"), 3, int, cells)
    return vertices, cells


def _parse_node_ele(node_path: Path, ele_path: Path):
    nodes = _data_lines(node_path)
    try:
        lineno, tok = next(nodes)
        nv = int(tok[0])
    except (StopIteration, ValueError, IndexError):
        raise MeshError(f"{node_path}:1: bad node header") from None
    ids, vertices = [], []
    for _ in range(nv):
        try:
            lineno, tok = next(nodes)
            ids.append(int(tok[0]))
            vertices.append([float(tok[1]), float(tok[2])])
        except StopIteration:
            raise MeshError(f"{node_path}: unexpected end of file") from None
        except (ValueError, IndexError):
            raise MeshError(f"{node_path}:{lineno}: cannot parse node line") from None
    base = min(ids) if ids else 0
    if sorted(ids) != list(range(base, base + nv)):
        raise MeshError(f"{node_path}: node ids are not contiguous")
    order = np.argsort(ids)
    vertices = np.asarray(vertices)[order]

    eles = _data_lines(ele_path)
    try:
        lineno, tok = next(eles)
        nt, per = int(tok[0]), int(tok[1])
    except (StopIteration, ValueError, IndexError):
        raise MeshError(f"{ele_path}:1: bad element header") from None
    if per != 3:
        raise MeshError(f"{ele_path}:{lineno}: only 3-node triangles are supported")
    cells = []
    for _ in range(nt):
        try:
            lineno, tok = next(eles)
            cells.append([int(t) - base for t in tok[1:4]])
        except StopIteration:
            raise MeshError(f"{ele_path}: unexpected end of file") from None
        except ValueError:
            raise MeshError(f"{ele_path}:{lineno}: cannot parse element line") from None
    return vertices, cells


def import_mesh(path, format: str = "vc") -> Mesh:
    """Read a mesh file.

    ``format="vc"`` is the plain vertex/cell list written by :func:`write_mesh`.
    ``format="node_ele"`` reads a Triangle-style ``.node``/``.ele`` pair; ``path``
    may name either file or their common stem.
    """
    path = Path(path)
    if format == "vc":
        vertices, cells = _parse_vc(path)
    elif format == "node_ele":
        stem = path.with_suffix("") if path.suffix in (".node", ".ele") else path
        vertices, cells = _parse_node_ele(stem.with_suffix(".node"), stem.with_suffix(".ele"))
    else:
        raise ValueError(f"unknown mesh format {format!r}")
    return compute_topology(vertices, cells)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for i, j, k in mesh.cells:
            fh.write(f"{i} {j} {k}\n")
