"""Linear simplex meshes: structured rectangles, graded V-notch sectors, intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .materials import SQRT2


@dataclass(frozen=True)
class NotchGeometry:
    omega: float  # half opening angle of the removed wedge
    radius: float

    def __post_init__(self):
        if not 0.0 < self.omega <= math.pi / 2 + 1e-15:
            raise ValueError(f"notch half-angle must lie in (0, pi/2], got {self.omega}")
        if not self.radius > 0:
            raise ValueError("notch specimen radius must be positive")


def _simplex_gradients(nodes: np.ndarray, cells: np.ndarray):
    """Measures and barycentric gradients of P1 simplices (segments or triangles)."""
    X = nodes[cells]
    if cells.shape[1] == 2:
        h = X[:, 1, 0] - X[:, 0, 0]
        grads = np.stack([-1.0 / h, 1.0 / h], axis=1)[:, :, None]
        return np.abs(h), grads
    d1 = X[:, 1] - X[:, 0]
    d2 = X[:, 2] - X[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inv(J)^T give gradients of barycentrics 1 and 2
    inv = np.empty((len(cells), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    grads = np.empty((len(cells), 3, 2))
    grads[:, 1] = inv[:, 0]
    grads[:, 2] = inv[:, 1]
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return 0.5 * det, grads


@dataclass
class MeshP1:
    """Linear triangle mesh with tagged boundary edges.

    ``edge_tags`` maps a tag name to indices into ``boundary_edges``; an edge
    may carry several tags. ``node_flags`` holds named boolean node masks.
    """

    nodes: np.ndarray
    cells: np.ndarray
    edge_tags: dict[str, np.ndarray] = field(default_factory=dict)
    node_flags: dict[str, np.ndarray] = field(default_factory=dict)
    h: float = float("nan")

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        area, grads = _simplex_gradients(self.nodes, self.cells)
        neg = area < 0
        if neg.any():
            self.cells[neg] = self.cells[neg][:, [0, 2, 1]]
            area, grads = _simplex_gradients(self.nodes, self.cells)
        if np.any(area <= 0):
            raise ValueError("degenerate triangle in mesh")
        self.measure = area
        self.grads = grads
        self.boundary_edges, self.boundary_cells = _boundary_edges(self.cells)
        self._B = None

    dim = 2

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def area(self) -> np.ndarray:
        return self.measure

    @property
    def B(self) -> np.ndarray:
        """Strain-displacement operators (n_cells, 3, 6) in in-plane Mandel form."""
        if self._B is None:
            g = self.grads
            B = np.zeros((self.n_cells, 3, 6))
            B[:, 0, 0::2] = g[:, :, 0]
            B[:, 1, 1::2] = g[:, :, 1]
            B[:, 2, 0::2] = g[:, :, 1] / SQRT2
            B[:, 2, 1::2] = g[:, :, 0] / SQRT2
            self._B = B
        return self._B

    @property
    def dofs(self) -> np.ndarray:
        """Global displacement dof indices per cell, interleaved (ux, uy)."""
        c = self.cells
        return np.stack([2 * c[:, 0], 2 * c[:, 0] + 1, 2 * c[:, 1], 2 * c[:, 1] + 1,
                         2 * c[:, 2], 2 * c[:, 2] + 1], axis=1)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.cells].mean(axis=1)

    def tagged_edges(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.edge_tags[tag]]

    def boundary_nodes(self, tag: str | None = None) -> np.ndarray:
        edges = self.boundary_edges if tag is None else self.tagged_edges(tag)
        return np.unique(edges)

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every triangle, in degrees."""
        X = self.nodes[self.cells]
        out = np.full(self.n_cells, 180.0)
        for i in range(3):
            a = X[:, (i + 1) % 3] - X[:, i]
            b = X[:, (i + 2) % 3] - X[:, i]
            cosang = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return out

    def edge_lengths(self) -> np.ndarray:
        X = self.nodes[self.cells]
        return np.stack(
            [np.linalg.norm(X[:, (i + 1) % 3] - X[:, i], axis=1) for i in range(3)], axis=1
        )

    def strain(self, u: np.ndarray) -> np.ndarray:
        """Element strains (n_cells, 3) in Mandel form from nodal displacement (n, 2)."""
        ue = np.asarray(u).reshape(-1)[self.dofs]
        return np.einsum("eij,ej->ei", self.B, ue)

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Element gradients (n_cells, 2) of a nodal scalar or (n_cells, 2, 2) of a vector field."""
        f = np.asarray(f)
        if f.ndim == 1:
            return np.einsum("eik,ei->ek", self.grads, f[self.cells])
        return np.einsum("eik,eij->ejk", self.grads, f[self.cells])

    def cell_to_node(self, values: np.ndarray) -> np.ndarray:
        """Area-weighted average of element values onto nodes."""
        w = np.repeat(self.measure[:, None], 3, axis=1)
        num = np.bincount(self.cells.ravel(), (w * values[:, None]).ravel(), self.n_nodes)
        den = np.bincount(self.cells.ravel(), w.ravel(), self.n_nodes)
        return num / den


@dataclass
class IntervalMesh:
    """Uniform or nonuniform P1 segment mesh of an interval."""

    x: np.ndarray

    dim = 1

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("interval nodes must be strictly increasing")
        self.nodes = self.x[:, None]
        n = len(self.x)
        self.cells = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        self.measure, self.grads = _simplex_gradients(self.nodes, self.cells)

    @property
    def n_nodes(self) -> int:
        return len(self.x)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @classmethod
    def uniform(cls, a: float, b: float, h: float) -> "IntervalMesh":
        n = int(math.ceil((b - a) / h - 1e-9))
        return cls(np.linspace(a, b, n + 1))


def _boundary_edges(cells: np.ndarray):
    """Edges used by exactly one triangle, oriented counter-clockwise around the domain."""
    local = [(0, 1), (1, 2), (2, 0)]
    e = np.concatenate([cells[:, list(p)] for p in local])
    owner = np.tile(np.arange(len(cells)), 3)
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    once = counts[inv] == 1
    if np.any(counts > 2):
        raise ValueError("non-manifold edge in mesh")
    return e[once], owner[once]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def mesh_rectangle(L: float, H: float, delta: float, precrack: float = 0.0) -> MeshP1:
    """Structured mesh of ``[0, L] x [-H/2, H/2]`` with a node row on ``y = 0``.

    Each grid cell is split into two triangles with alternating diagonals.
    Nodes on ``y = 0, x <= precrack`` are flagged ``"precrack"``.
    """
    if L <= 0 or H <= 0 or delta <= 0:
        raise ValueError("rectangle dimensions and mesh size must be positive")
    if delta > min(L, H) / 2 + 1e-12:
        raise ValueError(f"mesh size {delta} too coarse for a {L} x {H} rectangle")
    nx = int(math.ceil(L / delta - 1e-9))
    ny = int(math.ceil(H / delta - 1e-9))
    ny += ny % 2
    xs = np.linspace(0.0, L, nx + 1)
    ys = np.linspace(-H / 2, H / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    n00, n10 = idx[j, i], idx[j, i + 1]
    n01, n11 = idx[j + 1, i], idx[j + 1, i + 1]
    # alternate the diagonal so the pattern is symmetric about y = 0
    flip = ((i + j) % 2) == 0
    t1 = np.where(flip[:, None], np.column_stack([n00, n10, n11]), np.column_stack([n00, n10, n01]))
    t2 = np.where(flip[:, None], np.column_stack([n00, n11, n01]), np.column_stack([n10, n11, n01]))
    cells = np.concatenate([t1, t2])
    mesh = MeshP1(nodes, cells, h=max(L / nx, H / ny))
    mesh.edge_tags = {
        "dirichlet": np.arange(len(mesh.boundary_edges)),
        "contour": np.arange(len(mesh.boundary_edges)),
    }
    mesh.node_flags = {
        "precrack": (np.abs(nodes[:, 1]) < 1e-12 * max(L, H)) & (nodes[:, 0] <= precrack + 1e-12),
    }
    mesh.extent = (L, H)
    mesh.precrack = precrack
    return mesh


def _stitch(a_idx, a_phi, b_idx, b_phi):
    """Triangulate the strip between two angularly sorted node rows."""
    tris = []
    i = j = 0
    na, nb = len(a_idx) - 1, len(b_idx) - 1
    while i < na or j < nb:
        if j == nb or (i < na and a_phi[i + 1] <= b_phi[j + 1]):
            tris.append((a_idx[i], a_idx[i + 1], b_idx[j]))
            i += 1
        else:
            tris.append((a_idx[i], b_idx[j + 1], b_idx[j]))
            j += 1
    return tris


def notch_size_function(r, delta_tip: float, delta_far: float, fine_radius: float, growth: float):
    return np.minimum(delta_far, delta_tip + growth * np.maximum(0.0, r - fine_radius))


def mesh_notch(
    geometry: NotchGeometry,
    delta_tip: float,
    delta_far: float,
    fine_radius: float | None = None,
    growth: float = 0.25,
) -> MeshP1:
    """Graded mesh of the disk sector ``r <= R, |phi| <= pi - omega``.

    Edge length is ``delta_tip`` inside ``fine_radius`` and grows linearly
    (slope ``growth``) up to ``delta_far``. The notch tip sits at the origin,
    the outer arc is tagged ``"dirichlet"`` and ``"contour"``, the two flanks
    ``"notch_flank"``.
    """
    if not 0 < delta_tip <= delta_far:
        raise ValueError("need 0 < delta_tip <= delta_far")
    R = geometry.radius
    beta = math.pi - geometry.omega
    if fine_radius is None:
        fine_radius = 10 * delta_tip
    radii = [0.0]
    while radii[-1] < R:
        h = float(notch_size_function(radii[-1], delta_tip, delta_far, fine_radius, growth))
        nxt = radii[-1] + h
        if R - nxt < 0.5 * h:
            nxt = R
        radii.append(nxt)
    nodes = [(0.0, 0.0)]
    rows = []
    for r in radii[1:]:
        h = float(notch_size_function(r, delta_tip, delta_far, fine_radius, growth))
        n = 2 * max(2, int(math.ceil(beta * r / h)))
        phi = np.linspace(-beta, beta, n + 1)
        start = len(nodes)
        nodes.extend(zip(r * np.cos(phi), r * np.sin(phi)))
        rows.append((np.arange(start, start + n + 1), phi))
    tris = []
    first_idx, _ = rows[0]
    tris.extend((0, first_idx[k], first_idx[k + 1]) for k in range(len(first_idx) - 1))
    for (ia, pa), (ib, pb) in zip(rows[:-1], rows[1:]):
        tris.extend(_stitch(ia, pa, ib, pb))
    nodes = np.array(nodes)
    mesh = MeshP1(nodes, np.array(tris), h=delta_far)
    edges = mesh.boundary_edges
    outer_ids = set(rows[-1][0].tolist())
    on_outer = np.array([a in outer_ids and b in outer_ids for a, b in edges])
    mesh.edge_tags = {
        "dirichlet": np.nonzero(on_outer)[0],
        "contour": np.nonzero(on_outer)[0],
        "notch_flank": np.nonzero(~on_outer)[0],
    }
    mesh.node_flags = {}
    mesh.geometry = geometry
    mesh.delta_tip = delta_tip
    return mesh


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_vtk(path, mesh: MeshP1, point_data=None, cell_data=None) -> Path:
    """Legacy ASCII VTK unstructured grid."""
    path = Path(path)
    point_data = point_data or {}
    cell_data = cell_data or {}
    n, m = mesh.n_nodes, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", "ductile_pf snapshot", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m

    def block(data):
        out = []
        for name in sorted(data):
            arr = np.asarray(data[name], dtype=float)
            if arr.ndim == 2:
                vec = np.zeros((len(arr), 3))
                vec[:, : arr.shape[1]] = arr
                out.append(f"VECTORS {name} double")
                out += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vec]
            else:
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [f"{v:.17g}" for v in arr]
        return out

    if point_data:
        lines.append(f"POINT_DATA {n}")
        lines += block(point_data)
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        lines += block(cell_data)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"could not write snapshot {path}: {exc}") from exc
    return path
