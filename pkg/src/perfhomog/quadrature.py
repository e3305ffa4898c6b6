"""Quadrature on triangles clipped by a disk, and point location in meshes.

Moments of ``T ∩ B(c, r)`` up to second order are computed in closed form by
summing signed contributions of each oriented edge about the disk centre: a
straight triangle where the edge is inside the disk and a circular sector
where it is outside.  A six-node rule (vertices and edge midpoints) matching
those moments then integrates every quadratic exactly over the clipped piece.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import LookupFailure, ParameterError


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _triangle_moments(p, q):
    """Moments (1, x, y, x², xy, y²) of the signed triangle (0, p, q)."""
    s = 0.5 * _cross(p, q)
    px, py, qx, qy = p[..., 0], p[..., 1], q[..., 0], q[..., 1]
    return np.stack([
        s,
        s * (px + qx) / 3,
        s * (py + qy) / 3,
        s / 6 * (px * px + px * qx + qx * qx),
        s / 12 * (2 * px * py + 2 * qx * qy + px * qy + qx * py),
        s / 6 * (py * py + py * qy + qy * qy),
    ], axis=-1)


def _sector_moments(p, q, r):
    """Moments of the signed circular sector of radius ``r`` swept from direction p to q."""
    t1 = np.arctan2(p[..., 1], p[..., 0])
    dt = np.arctan2(_cross(p, q), np.sum(p * q, axis=-1))
    t2 = t1 + dt
    r2, r3, r4 = r**2, r**3, r**4
    s2 = np.sin(2 * t2) - np.sin(2 * t1)
    return np.stack([
        0.5 * r2 * dt,
        r3 / 3 * (np.sin(t2) - np.sin(t1)),
        r3 / 3 * (np.cos(t1) - np.cos(t2)),
        r4 / 4 * (dt / 2 + s2 / 4),
        r4 / 8 * (np.sin(t2) ** 2 - np.sin(t1) ** 2),
        r4 / 4 * (dt / 2 - s2 / 4),
    ], axis=-1)


def disk_clip_moments(tri, center, r) -> np.ndarray:
    """Raw moments about ``center`` of ``T ∩ B(center, r)`` for triangles ``tri`` (n,3,2).

    Triangles may have either orientation; the result is for the unsigned region.
    """
    tri = np.asarray(tri, dtype=float) - np.asarray(center, dtype=float)
    out = np.zeros(tri.shape[:-2] + (6,))
    for k in range(3):
        a = tri[..., k, :]
        b = tri[..., (k + 1) % 3, :]
        d = b - a
        qa = np.sum(d * d, axis=-1)
        qb = 2 * np.sum(a * d, axis=-1)
        qc = np.sum(a * a, axis=-1) - r * r
        disc = qb * qb - 4 * qa * qc
        hit = (disc > 0) & (qa > 0)
        sq = np.sqrt(np.where(hit, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(hit, (-qb - sq) / (2 * qa), 1.0)
            t2 = np.where(hit, (-qb + sq) / (2 * qa), 1.0)
        s1 = np.clip(t1, 0.0, 1.0)
        s2 = np.clip(t2, 0.0, 1.0)
        p1 = a + s1[..., None] * d
        p2 = a + s2[..., None] * d
        out += _sector_moments(a, p1, r)
        out += _triangle_moments(p1, p2)
        out += _sector_moments(p2, b, r)
    sign = np.sign(0.5 * _cross(tri[..., 1, :] - tri[..., 0, :], tri[..., 2, :] - tri[..., 0, :]))
    return out * sign[..., None]


def _shift_moments(m, c):
    """Moments about ``0`` from moments about ``c`` (coordinates ``x = c + xi``)."""
    cx, cy = c
    m0, mx, my, mxx, mxy, myy = np.moveaxis(m, -1, 0)
    return np.stack([
        m0,
        mx + cx * m0,
        my + cy * m0,
        mxx + 2 * cx * mx + cx * cx * m0,
        mxy + cx * my + cy * mx + cx * cy * m0,
        myy + 2 * cy * my + cy * cy * m0,
    ], axis=-1)


def _p2_nodes(tri):
    mids = 0.5 * (tri + np.roll(tri, -1, axis=1))
    return np.concatenate([tri, mids], axis=1)  # (n, 6, 2)


def _rule_from_moments(tri, moments_abs):
    """Node weights reproducing the given absolute moments on the P2 nodes of each triangle."""
    nodes = _p2_nodes(tri)
    c = tri.mean(axis=1, keepdims=True)
    s = np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1)[:, None, None]
    z = (nodes - c) / s
    v = np.stack([np.ones(z.shape[:2]), z[..., 0], z[..., 1], z[..., 0] ** 2,
                  z[..., 0] * z[..., 1], z[..., 1] ** 2], axis=1)  # (n, 6 monomial, 6 node)
    # moments of the scaled local monomials
    m = moments_abs
    cx, cy = c[:, 0, 0], c[:, 0, 1]
    sc = s[:, 0, 0]
    m0 = m[:, 0]
    mx = (m[:, 1] - cx * m0)
    my = (m[:, 2] - cy * m0)
    mxx = m[:, 3] - 2 * cx * m[:, 1] + cx * cx * m0
    mxy = m[:, 4] - cx * m[:, 2] - cy * m[:, 1] + cx * cy * m0
    myy = m[:, 5] - 2 * cy * m[:, 2] + cy * cy * m0
    rhs = np.stack([m0, mx / sc, my / sc, mxx / sc**2, mxy / sc**2, myy / sc**2], axis=1)
    w = np.linalg.solve(v, rhs[..., None])[..., 0]
    return nodes, w


@dataclass(frozen=True, eq=False)
class ClippedRule:
    """Points and weights for integrating over ``B(center, r)`` ∩ mesh.

    Each point carries its element index and barycentric coordinates, so P1
    fields can be evaluated without a point search.
    """

    points: np.ndarray
    weights: np.ndarray
    elements: np.ndarray
    bary: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    @property
    def measure(self) -> float:
        return float(self.weights.sum())


_MID_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_P2_BARY = np.vstack([np.eye(3), _MID_BARY])


def _candidates(mesh, center, r):
    c = np.asarray(center, dtype=float)
    d = np.linalg.norm(mesh.centroids - c, axis=1)
    cand = np.flatnonzero(d < r + mesh.diameters)
    p = mesh.vertices[mesh.triangles[cand]]
    inside = np.all(np.linalg.norm(p - c, axis=2) <= r, axis=1)
    return cand, inside


def clipped_moments(mesh, center, r):
    """Element indices meeting the disk and the absolute moments of each clipped piece."""
    if not r > 0:
        raise ParameterError("radius must be positive")
    cand, inside = _candidates(mesh, center, r)
    tri = mesh.vertices[mesh.triangles[cand]]
    mom = np.zeros((len(cand), 6))
    if inside.any():
        ti = tri[inside]
        area = np.abs(mesh.areas[cand[inside]])
        mid = _p2_nodes(ti)[:, 3:]
        mom[inside, 0] = area
        mom[inside, 1:3] = area[:, None] * ti.mean(axis=1)
        mom[inside, 3] = area * np.mean(mid[..., 0] ** 2, axis=1)
        mom[inside, 4] = area * np.mean(mid[..., 0] * mid[..., 1], axis=1)
        mom[inside, 5] = area * np.mean(mid[..., 1] ** 2, axis=1)
    cut = ~inside
    if cut.any():
        mom[cut] = _shift_moments(disk_clip_moments(tri[cut], center, r), np.asarray(center, float))
    keep = mom[:, 0] > 1e-14 * np.abs(mesh.areas[cand]).clip(min=1e-300)
    return cand[keep], mom[keep], inside[keep]


def clipped_areas(mesh, center, r):
    elem, mom, _ = clipped_moments(mesh, center, r)
    return elem, mom[:, 0]


def clipped_rule(mesh, center, r) -> ClippedRule:
    elem, mom, inside = clipped_moments(mesh, center, r)
    tri = mesh.vertices[mesh.triangles[elem]]
    pts, wts, els, bar = [], [], [], []
    if inside.any():
        ti = tri[inside]
        pts.append(_p2_nodes(ti)[:, 3:].reshape(-1, 2))
        wts.append(np.repeat(mom[inside, 0] / 3.0, 3))
        els.append(np.repeat(elem[inside], 3))
        bar.append(np.tile(_MID_BARY, (int(inside.sum()), 1)))
    cut = ~inside
    if cut.any():
        nodes, w = _rule_from_moments(tri[cut], mom[cut])
        pts.append(nodes.reshape(-1, 2))
        wts.append(w.reshape(-1))
        els.append(np.repeat(elem[cut], 6))
        bar.append(np.tile(_P2_BARY, (int(cut.sum()), 1)))
    if not pts:
        z = np.zeros((0, 2))
        return ClippedRule(z, np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros((0, 3)))
    return ClippedRule(np.concatenate(pts), np.concatenate(wts), np.concatenate(els), np.concatenate(bar))


def midpoint_rule(mesh):
    """Edge-midpoint rule on every element (exact for quadratics)."""
    m = mesh.n_triangles
    pts = _p2_nodes(mesh.vertices[mesh.triangles])[:, 3:].reshape(-1, 2)
    return (pts, np.repeat(np.abs(mesh.areas) / 3.0, 3), np.repeat(np.arange(m), 3),
            np.tile(_MID_BARY, (m, 1)))


# ---------------------------------------------------------------- point location

def barycentric(mesh, elements, points) -> np.ndarray:
    p = mesh.vertices[mesh.triangles[elements]]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    lam = np.linalg.solve(jac, (np.asarray(points) - p[:, 0])[..., None])[..., 0]
    return np.column_stack([1 - lam.sum(axis=1), lam])


class MeshLocator:
    """Find the containing triangle of query points.

    Points outside the mesh but within ``tol`` of it are assigned to the
    nearest element and evaluated by linear extrapolation; farther points
    raise ``LookupFailure``.
    """

    def __init__(self, mesh, tol=None):
        import matplotlib.tri as mtri

        self.mesh = mesh
        h = float(np.median(mesh.diameters)) if mesh.n_triangles else 1.0
        self.tol = 0.5 * h if tol is None else float(tol)
        self._tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        self._finder = mtri.TrapezoidMapTriFinder(self._tri)
        self._tree = cKDTree(mesh.centroids)

    def locate(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        elem = np.asarray(self._finder(pts[:, 0], pts[:, 1]), dtype=np.int64)
        miss = np.flatnonzero(elem < 0)
        if len(miss):
            k = min(6, self.mesh.n_triangles)
            _, near = self._tree.query(pts[miss], k=k)
            near = np.asarray(near).reshape(len(miss), k)
            best = near[:, 0].copy()
            best_gap = np.full(len(miss), np.inf)
            for col in range(k):
                lam = barycentric(self.mesh, near[:, col], pts[miss])
                h = self.mesh.diameters[near[:, col]]
                gap = -np.min(lam, axis=1) * h
                better = gap < best_gap
                best[better] = near[better, col]
                best_gap[better] = gap[better]
            bad = best_gap > self.tol
            if np.any(bad):
                p = pts[miss[np.flatnonzero(bad)[0]]]
                raise LookupFailure(f"point ({p[0]:.6g}, {p[1]:.6g}) is outside the mesh")
            elem[miss] = best
        return elem, barycentric(self.mesh, elem, pts)


_LOCATORS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def locator_for(mesh, tol=None) -> MeshLocator:
    """Shared locator per mesh (built lazily, dropped with the mesh)."""
    key = None if tol is None else float(tol)
    per = _LOCATORS.setdefault(mesh, {})
    if key not in per:
        per[key] = MeshLocator(mesh, tol)
    return per[key]
