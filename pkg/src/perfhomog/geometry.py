"""Periodic perforated geometry and triangulations.

The reference cell is ``Q = [-1/2, 1/2]^2``; holes are closed disks strictly
inside ``Q``.  Perforated domains place the scaled lattice so that cell
boundaries fall on the lines ``x_k = integer * eps``, i.e. the perforated set is
``eps * (omega + (1/2, 1/2))``.  With this layout the unit square is tiled by
``(1/eps)^2`` whole cells and no hole touches its boundary.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import shapely.geometry
import triangle
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .errors import (
    AlignmentError,
    DisconnectedError,
    GeometryError,
    MeshFailure,
    OverlapError,
    ParameterError,
)

LATTICE_SHIFT = np.array([0.5, 0.5])
MESH_HEADER = "perfhomog-mesh v1"


class Tag(enum.IntEnum):
    OuterDirichlet = 1
    HoleTraction = 2
    PeriodicMaster = 3
    PeriodicSlave = 4


@dataclass(frozen=True)
class HoleSpec:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError(f"hole radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class CellGeometry:
    holes: tuple[HoleSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    @classmethod
    def single_hole(cls, radius, center=(0.0, 0.0)):
        return cls((HoleSpec(center, radius),))

    @cached_property
    def gap(self) -> float:
        return validate_cell(self, check_connectivity=False).gap

    @cached_property
    def diameter_bound(self) -> float:
        return max((2 * h.radius for h in self.holes), default=0.0)


@dataclass(frozen=True)
class GapReport:
    gap: float
    diameter_bound: float


@dataclass(frozen=True)
class DomainSpec:
    """Bounded macroscopic domain: ``square`` ``[lo, lo+size]^2`` or ``ball`` ``B(center, size)``."""

    shape: str = "square"
    center: tuple[float, float] = (0.0, 0.0)
    size: float = 1.0

    def __post_init__(self):
        if self.shape not in ("square", "ball"):
            raise ParameterError(f"unknown domain shape {self.shape!r}")
        if not self.size > 0:
            raise ParameterError("domain size must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def unit_square(cls):
        return cls("square", (0.0, 0.0), 1.0)

    @classmethod
    def ball(cls, center=(0.0, 0.0), radius=1.0):
        return cls("ball", center, radius)

    @property
    def bbox(self):
        c = np.asarray(self.center)
        if self.shape == "square":
            return c, c + self.size
        return c - self.size, c + self.size

    @property
    def diameter(self) -> float:
        return self.size * (math.sqrt(2) if self.shape == "square" else 2.0)

    @property
    def area(self) -> float:
        return self.size**2 if self.shape == "square" else math.pi * self.size**2

    def distance_to_boundary(self, x):
        """Unsigned distance to the boundary for points inside the domain."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)
        if self.shape == "square":
            lo, hi = c, c + self.size
            d = np.minimum(x - lo, hi - x)
            return np.abs(np.min(d, axis=-1))
        return np.abs(self.size - np.linalg.norm(x - c, axis=-1))

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center)
        if self.shape == "square":
            return np.all((x >= c - tol) & (x <= c + self.size + tol), axis=-1)
        return np.linalg.norm(x - c, axis=-1) <= self.size + tol


def _freeze(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation with tagged boundary edges.

    ``periodic_pairs`` rows are ``(slave, master)`` vertex indices; ``cell_shift``
    maps physical points to cell coordinates via ``x / eps - cell_shift``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    mesh_size: float = float("nan")
    cell_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "vertices", _freeze(self.vertices, float).reshape(-1, 2))
        tri = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        p = self.vertices
        if len(tri):
            d1 = p[tri[:, 1]] - p[tri[:, 0]]
            d2 = p[tri[:, 2]] - p[tri[:, 0]]
            neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
            tri = tri.copy()
            tri[neg] = tri[neg][:, [0, 2, 1]]
        object.__setattr__(self, "triangles", _freeze(tri, np.int64))
        object.__setattr__(self, "boundary_edges", _freeze(self.boundary_edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_tags", _freeze(self.edge_tags, np.int64).reshape(-1))
        object.__setattr__(self, "periodic_pairs", _freeze(self.periodic_pairs, np.int64).reshape(-1, 2))
        object.__setattr__(self, "cell_shift", _freeze(self.cell_shift, float).reshape(2))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric basis functions, shape ``(m, 3, 2)``."""
        p = self.vertices[self.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        inv = np.linalg.inv(jac)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.einsum("ak,mkj->maj", ref, inv)

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def vertices_with_tag(self, *tags) -> np.ndarray:
        mask = np.isin(self.edge_tags, [int(t) for t in tags])
        return np.unique(self.boundary_edges[mask])

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def cell_coordinates(self, x, eps):
        return np.asarray(x) / eps - self.cell_shift


def validate_cell(cell: CellGeometry, check_connectivity=True, resolution=256) -> GapReport:
    """Minimal hole separation over all periodic images and the largest hole diameter."""
    holes = cell.holes
    gap = math.inf
    shifts = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
    for i, hi in enumerate(holes):
        for j, hj in enumerate(holes):
            for z in shifts:
                if i == j and z == (0, 0):
                    continue
                dx = hi.center[0] - hj.center[0] - z[0]
                dy = hi.center[1] - hj.center[1] - z[1]
                gap = min(gap, math.hypot(dx, dy) - hi.radius - hj.radius)
    if gap <= 0:
        raise OverlapError(f"holes overlap (gap = {gap:.6g})")
    if check_connectivity and holes and not _matrix_connected(cell, resolution):
        raise DisconnectedError("the perforated cell Q∩ω is not connected")
    return GapReport(gap=gap, diameter_bound=max((2 * h.radius for h in holes), default=0.0))


def _matrix_connected(cell, n):
    s = (np.arange(n) + 0.5) / n - 0.5
    yy, xx = np.meshgrid(s, s, indexing="ij")
    img = indicator(cell, np.stack([xx, yy], axis=-1))
    labels, count = ndimage.label(img)
    if count <= 1:
        return count == 1
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(np.r_[labels[0, :], labels[:, 0]], np.r_[labels[-1, :], labels[:, -1]]):
        if a and b:
            parent[find(a)] = find(b)
    return len({find(k) for k in range(1, count + 1)}) == 1


def indicator(cell: CellGeometry, p) -> np.ndarray | bool:
    """True where ``p`` (wrapped by periodicity) lies in the matrix phase ``omega``."""
    p = np.asarray(p, dtype=float)
    y = p - np.round(p)
    inside = np.ones(y.shape[:-1], dtype=bool)
    for h in cell.holes:
        c = np.asarray(h.center)
        for z in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            d = np.linalg.norm(y - c - np.asarray(z), axis=-1)
            inside &= d > h.radius
    return bool(inside) if inside.ndim == 0 else inside


def hole_distance(cell: CellGeometry, p) -> np.ndarray:
    """Distance (cell units) from periodic points to the nearest hole circle."""
    p = np.asarray(p, dtype=float)
    y = p - np.round(p)
    d = np.full(y.shape[:-1], np.inf)
    for h in cell.holes:
        for z in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            d = np.minimum(d, np.abs(np.linalg.norm(y - np.asarray(h.center) - z, axis=-1) - h.radius))
    return d


def in_perforated(cell: CellGeometry, x, eps) -> np.ndarray:
    """Membership of physical points in ``eps * (omega + LATTICE_SHIFT)``."""
    return indicator(cell, np.asarray(x, dtype=float) / eps - LATTICE_SHIFT)


def _circle_points(center, radius, n):
    t = 2 * np.pi * np.arange(n) / n
    return np.c_[center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]


def _hole_vertex_count(radius, h):
    # segments of length ~h/2 keep the polygon area deficit well below h^2
    return max(12, int(math.ceil(4 * math.pi * radius / h)))


def _boundary_edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    srt = np.sort(e, axis=1)
    key = srt[:, 0] * (int(triangles.max()) + 1) + srt[:, 1]
    _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    once = counts[inv] == 1
    return e[once]


def _check_connected(n_vertices, triangles):
    t = triangles
    rows = np.r_[t[:, 0], t[:, 1], t[:, 2]]
    cols = np.r_[t[:, 1], t[:, 2], t[:, 0]]
    g = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices))
    n, _ = csgraph.connected_components(g, directed=False)
    return n == 1


def _triangulate(vertices, segments, holes, h, switches="pq30"):
    area = math.sqrt(3) / 4 * h * h
    data = {"vertices": np.asarray(vertices, float), "segments": np.asarray(segments, np.int32)}
    if len(holes):
        data["holes"] = np.asarray(holes, float)
    try:
        out = triangle.triangulate(data, f"{switches}a{area:.17g}Q")
    except Exception as exc:  # triangle raises bare RuntimeError
        raise MeshFailure(f"triangulation failed: {exc}") from exc
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise MeshFailure("triangulation produced no elements")
    return out["vertices"], out["triangles"].astype(np.int64)


def mesh_unit_cell(cell: CellGeometry, h: float) -> Mesh:
    """Triangulate ``Q ∩ omega`` with mirror-matched vertices on opposite faces."""
    report = validate_cell(cell)
    if not (0 < h < report.gap / 2):
        raise MeshFailure(f"mesh size h={h} must satisfy 0 < h < gap/2 = {report.gap / 2:.6g}")
    for hole in cell.holes:
        if max(abs(hole.center[0]), abs(hole.center[1])) + hole.radius >= 0.5:
            raise MeshFailure("holes crossing the cell boundary are not supported")
    n = int(math.ceil(1.0 / h - 1e-9))
    n += n % 2
    # symmetric construction so that t[k] == -t[n-k] holds bit for bit
    half = 0.5 * np.arange(n // 2 + 1) / (n // 2)
    t = np.concatenate([-half[::-1], half[1:]])
    if not cell.holes:
        verts, tris = _structured_square(t)
    elif len(cell.holes) == 1 and cell.holes[0].center == (0.0, 0.0):
        verts, tris = _symmetric_cell(cell.holes[0].radius, h, half)
    else:
        lo = np.full(n, -0.5)
        hi = np.full(n, 0.5)
        outer = np.concatenate([
            np.c_[t[:-1], lo],            # bottom, left to right
            np.c_[hi, t[:-1]],            # right, bottom to top
            np.c_[t[::-1][:-1], hi],      # top, right to left
            np.c_[lo, t[::-1][:-1]],      # left, top to bottom
        ])
        pts = [outer]
        segs = [np.c_[np.arange(len(outer)), (np.arange(len(outer)) + 1) % len(outer)]]
        offset = len(outer)
        for hole in cell.holes:
            c = _circle_points(hole.center, hole.radius, _hole_vertex_count(hole.radius, h))
            k = np.arange(len(c))
            pts.append(c)
            segs.append(offset + np.c_[k, (k + 1) % len(c)])
            offset += len(c)
        # Y: no Steiner points on segments, so face layouts stay matched
        verts, tris = _triangulate(
            np.concatenate(pts), np.concatenate(segs), [hh.center for hh in cell.holes], h, "pq28Y"
        )
    return _finish_cell_mesh(verts, tris, h)


def _symmetric_cell(r, h, half):
    """Centered hole: mesh the octant 0 <= y <= x <= 1/2 and unfold by the 8 square symmetries."""
    m_arc = max(2, int(math.ceil(_hole_vertex_count(r, h) / 8)))
    ang = (np.pi / 4) * np.arange(m_arc + 1) / m_arc
    arc = np.c_[r * np.cos(ang), r * np.sin(ang)]
    arc[0] = (r, 0.0)
    d = r / math.sqrt(2)
    arc[-1] = (d, d)
    m_ax = max(1, int(math.ceil((0.5 - r) / h)))
    axis = np.c_[r + (0.5 - r) * np.arange(1, m_ax) / m_ax, np.zeros(m_ax - 1)]
    face = np.c_[np.full(len(half), 0.5), half]
    m_dg = max(1, int(math.ceil(math.sqrt(2) * (0.5 - d) / h)))
    s = 0.5 - (0.5 - d) * np.arange(1, m_dg) / m_dg
    diag = np.c_[s, s]
    # counter-clockwise: axis -> face -> diagonal -> arc (reversed)
    ring = np.concatenate([arc[:1], axis, face, diag, arc[::-1][:-1]])
    k = np.arange(len(ring))
    wv, wt = _triangulate(ring, np.c_[k, (k + 1) % len(ring)], [], h, "pq28Y")
    images = []
    for swap in (False, True):
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                p = wv[:, ::-1] if swap else wv
                images.append(np.c_[sx * p[:, 0], sy * p[:, 1]] + 0.0)
    allv = np.concatenate(images)
    allt = np.concatenate([wt + i * len(wv) for i in range(len(images))])
    verts, inv = np.unique(allv, axis=0, return_inverse=True)
    return verts, inv.reshape(-1)[allt]


def _structured_square(t):
    n = len(t) - 1
    xx, yy = np.meshgrid(t, t, indexing="xy")
    verts = np.c_[xx.ravel(), yy.ravel()]
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.c_[a, b, c], np.c_[a, c, d]])
    return verts, tris


def _finish_cell_mesh(verts, tris, h):
    if not _check_connected(len(verts), tris):
        raise DisconnectedError("cell mesh is not connected")
    x, y = verts[:, 0], verts[:, 1]
    left, right = x == -0.5, x == 0.5
    bottom, top = y == -0.5, y == 0.5

    # resolve slave -> master by translating right->left and top->bottom until fixed
    lookup = {(float(a), float(b)): i for i, (a, b) in enumerate(verts) if left[i] or right[i] or bottom[i] or top[i]}
    pairs = []
    for i in np.flatnonzero(right | top):
        px, py = verts[i]
        if px == 0.5:
            px = -0.5
        if py == 0.5:
            py = -0.5
        m = lookup.get((float(px), float(py)))
        if m is None:
            raise MeshFailure(f"no periodic partner for vertex {i} at {verts[i]}")
        pairs.append((i, m))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)

    edges = _boundary_edges(tris)
    a, b = edges[:, 0], edges[:, 1]
    tags = np.full(len(edges), int(Tag.HoleTraction))
    tags[(left[a] & left[b]) | (bottom[a] & bottom[b])] = int(Tag.PeriodicMaster)
    tags[(right[a] & right[b]) | (top[a] & top[b])] = int(Tag.PeriodicSlave)
    return Mesh(verts, tris, edges, tags, pairs, mesh_size=h)


def mesh_domain(domain: DomainSpec, h: float) -> Mesh:
    """Unperforated triangulation of ``domain`` with every boundary edge tagged OuterDirichlet."""
    if not h > 0:
        raise ParameterError("h must be positive")
    lo, hi_ = domain.bbox
    if domain.shape == "square":
        n = int(math.ceil(domain.size / h - 1e-9))
        t = np.linspace(0.0, 1.0, n + 1)
        verts, tris = _structured_square(t)
        verts = lo + domain.size * verts
    else:
        c = _circle_points(domain.center, domain.size, max(16, int(math.ceil(2 * math.pi * domain.size / h))))
        k = np.arange(len(c))
        verts, tris = _triangulate(c, np.c_[k, (k + 1) % len(c)], [], h)
    edges = _boundary_edges(tris)
    return Mesh(verts, tris, edges, np.full(len(edges), int(Tag.OuterDirichlet)), mesh_size=h,
                cell_shift=LATTICE_SHIFT)


def mesh_perforated_domain(domain: DomainSpec, cell: CellGeometry, eps: float, h: float) -> Mesh:
    """Triangulate ``Omega_eps = Omega ∩ eps(omega + LATTICE_SHIFT)``."""
    report = validate_cell(cell)
    if not (0 < eps):
        raise ParameterError("eps must be positive")
    if not (0 < h < eps * report.gap / 2):
        raise MeshFailure(f"h={h} must satisfy 0 < h < eps*gap/2 = {eps * report.gap / 2:.6g}")
    if domain.shape == "square":
        n = domain.size / eps
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise AlignmentError(f"side/eps = {n} is not an integer")
        return _tile_square(domain, cell, int(round(n)), eps, h)
    return _mesh_ball(domain, cell, eps, h)


def _tile_square(domain, cell, n, eps, h):
    cm = mesh_unit_cell(cell, h / eps)
    nv = cm.n_vertices
    master = np.arange(nv)
    offset = np.zeros((nv, 2), dtype=np.int64)
    for s, m in cm.periodic_pairs:
        master[s] = m
        offset[s] = np.rint(cm.vertices[s] - cm.vertices[m]).astype(np.int64)

    kx, ky = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    kx, ky = kx.ravel(), ky.ravel()
    # key (master, lattice position) identifies shared vertices exactly
    gx = kx[:, None] + offset[None, :, 0]
    gy = ky[:, None] + offset[None, :, 1]
    mm = np.broadcast_to(master, gx.shape)
    key = (mm * (n + 2) + gx) * (n + 2) + gy
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    inv = inv.reshape(gx.shape)
    um = uniq // ((n + 2) ** 2)
    ugx = (uniq // (n + 2)) % (n + 2)
    ugy = uniq % (n + 2)
    lo = np.asarray(domain.center)
    verts = lo + eps * (cm.vertices[um] + 0.5 + np.c_[ugx, ugy])
    tris = np.concatenate([inv[k][cm.triangles] for k in range(n * n)])

    edges = _boundary_edges(tris)
    mid = verts[edges].mean(axis=1)
    on_outer = domain.distance_to_boundary(mid) < 1e-9 * eps
    tags = np.where(on_outer, int(Tag.OuterDirichlet), int(Tag.HoleTraction))
    return Mesh(verts, tris, edges, tags, mesh_size=h, cell_shift=LATTICE_SHIFT)


def lattice_holes(domain: DomainSpec, cell: CellGeometry, eps: float):
    """Physical (center, radius) of every hole whose disk meets the domain's bounding box."""
    lo, hi = domain.bbox
    out = []
    for hole in cell.holes:
        c = np.asarray(hole.center) + LATTICE_SHIFT
        k0 = np.floor((lo - eps * (c + hole.radius)) / eps).astype(int)
        k1 = np.ceil((hi - eps * (c - hole.radius)) / eps).astype(int)
        for a in range(k0[0], k1[0] + 1):
            for b in range(k0[1], k1[1] + 1):
                out.append((eps * (c + (a, b)), eps * hole.radius))
    return out


def _mesh_ball(domain, cell, eps, h):
    c0 = np.asarray(domain.center)
    R = domain.size
    outer = shapely.geometry.Polygon(_circle_points(c0, R, max(16, int(math.ceil(2 * math.pi * R / h)))))
    region = outer
    interior = []
    for c, r in lattice_holes(domain, cell, eps):
        dist = np.linalg.norm(c - c0)
        if dist - r >= R:
            continue
        ring = _circle_points(c, r, _hole_vertex_count(r, h))
        if np.max(np.linalg.norm(ring - c0, axis=1)) < R - 0.5 * h:
            interior.append((c, ring))
        else:
            region = region.difference(shapely.geometry.Polygon(ring))
    if region.geom_type == "MultiPolygon":
        region = max(region.geoms, key=lambda g: g.area)
    rings = [np.asarray(region.exterior.coords)[:-1]]
    holes = []
    for ring in region.interiors:
        rings.append(np.asarray(ring.coords)[:-1])
        holes.append(np.asarray(shapely.geometry.Polygon(ring).representative_point().coords[0]))
    for c, ring in interior:
        rings.append(ring)
        holes.append(c)
    pts, segs = [], []
    offset = 0
    for xy in rings:
        idx = np.arange(len(xy))
        pts.append(xy)
        segs.append(offset + np.c_[idx, (idx + 1) % len(xy)])
        offset += len(xy)
    verts, tris = _triangulate(np.concatenate(pts), np.concatenate(segs), holes, h)
    if not _check_connected(len(verts), tris):
        raise DisconnectedError("perforated ball mesh is not connected")
    edges = _boundary_edges(tris)
    mid = verts[edges].mean(axis=1)
    d_outer = np.abs(np.linalg.norm(mid - c0, axis=1) - R)
    d_hole = eps * hole_distance(cell, mid / eps - LATTICE_SHIFT)
    tags = np.where(d_outer <= d_hole, int(Tag.OuterDirichlet), int(Tag.HoleTraction))
    return Mesh(verts, tris, edges, tags, mesh_size=h, cell_shift=LATTICE_SHIFT)


def write_mesh(mesh: Mesh, path) -> None:
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_triangles))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(str(len(mesh.boundary_edges)))
    lines += [f"{i} {j} {Tag(t).name}" for (i, j), t in zip(mesh.boundary_edges, mesh.edge_tags)]
    if len(mesh.periodic_pairs):
        lines.append(f"periodic {len(mesh.periodic_pairs)}")
        lines += [f"{s} {m}" for s, m in mesh.periodic_pairs]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if not rows or rows[0] != MESH_HEADER:
        raise GeometryError(f"{path}: missing header {MESH_HEADER!r}")
    pos = 1

    def block(count, parse):
        nonlocal pos
        out = [parse(r.split()) for r in rows[pos:pos + count]]
        if len(out) != count:
            raise GeometryError(f"{path}: truncated mesh file")
        pos += count
        return out

    nv = int(rows[pos]); pos += 1
    verts = block(nv, lambda t: (float(t[0]), float(t[1])))
    nt = int(rows[pos]); pos += 1
    tris = block(nt, lambda t: tuple(int(v) for v in t))
    nb = int(rows[pos]); pos += 1
    bnd = block(nb, lambda t: (int(t[0]), int(t[1]), int(Tag[t[2]])))
    pairs = []
    if pos < len(rows) and rows[pos].startswith("periodic"):
        npairs = int(rows[pos].split()[1]); pos += 1
        pairs = block(npairs, lambda t: (int(t[0]), int(t[1])))
    bnd = np.array(bnd, dtype=np.int64).reshape(-1, 3)
    return Mesh(np.array(verts), np.array(tris), bnd[:, :2], bnd[:, 2],
                np.array(pairs, dtype=np.int64).reshape(-1, 2))


def mirror_map(mesh: Mesh, transform, tol=1e-10) -> np.ndarray:
    """Index map ``i -> j`` with ``vertices[j] == transform(vertices[i])`` (used for symmetry checks)."""
    from scipy.spatial import cKDTree

    img = transform(mesh.vertices)
    dist, idx = cKDTree(mesh.vertices).query(img)
    if np.max(dist) > tol:
        raise GeometryError(f"mesh is not invariant under the transform (max mismatch {np.max(dist):.3g})")
    return idx
