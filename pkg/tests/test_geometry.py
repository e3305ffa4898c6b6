import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfhomog import geometry as g
from perfhomog.errors import AlignmentError, MeshFailure, OverlapError


def test_gap_single_hole():
    rep = g.validate_cell(g.CellGeometry.single_hole(0.25))
    assert rep.gap == pytest.approx(0.5)
    assert rep.diameter_bound == pytest.approx(0.5)


def test_gap_no_holes():
    rep = g.validate_cell(g.CellGeometry(()))
    assert rep.gap == math.inf
    assert rep.diameter_bound == 0.0


def test_overlap_detected():
    cell = g.CellGeometry((g.HoleSpec((0, 0), 0.2), g.HoleSpec((0.3, 0), 0.2)))
    with pytest.raises(OverlapError):
        g.validate_cell(cell)


def test_periodic_image_overlap():
    # touches its own image across the face
    with pytest.raises(OverlapError):
        g.validate_cell(g.CellGeometry.single_hole(0.5))


def test_connectivity_of_separated_disks():
    # separated disks never disconnect the matrix phase; the raster check agrees
    holes = tuple(g.HoleSpec((x, y), 0.24) for x, y in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)])
    rep = g.validate_cell(g.CellGeometry(holes), resolution=512)
    assert rep.gap == pytest.approx(0.02)


def test_raster_connectivity_single_hole():
    cell = g.CellGeometry.single_hole(0.25)
    assert g._matrix_connected(cell, 128)


def test_indicator_examples():
    cell = g.CellGeometry.single_hole(0.25)
    assert not g.indicator(cell, (0.0, 0.0))
    assert g.indicator(cell, (0.4, 0.4))
    assert not g.indicator(cell, (1.0, 0.0))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(-5, 5), st.integers(-5, 5))
def test_indicator_periodic(x, y, a, b):
    cell = g.CellGeometry.single_hole(0.25, center=(0.1, -0.05))
    assert g.indicator(cell, (x, y)) == g.indicator(cell, (x + a, y + b))


def test_indicator_periodic_bulk():
    rng = np.random.default_rng(3)
    cell = g.CellGeometry.single_hole(0.3)
    p = rng.uniform(-2, 2, (1000, 2))
    z = rng.integers(-4, 5, (1000, 2))
    assert np.array_equal(g.indicator(cell, p), g.indicator(cell, p + z))


def test_no_hole_cell_mesh():
    m = g.mesh_unit_cell(g.CellGeometry(()), 0.25)
    assert not np.any(m.edge_tags == g.Tag.HoleTraction)
    assert len(m.periodic_pairs) > 0
    # all four faces take part in the pairing
    slaves = m.vertices[m.periodic_pairs[:, 0]]
    assert np.any(np.isclose(slaves[:, 0], 0.5)) and np.any(np.isclose(slaves[:, 1], 0.5))
    assert m.areas.sum() == pytest.approx(1.0)


def test_hole_vertices_on_circle():
    h = 0.05
    m = g.mesh_unit_cell(g.CellGeometry.single_hole(0.25), h)
    hv = m.vertices_with_tag(g.Tag.HoleTraction)
    r = np.linalg.norm(m.vertices[hv], axis=1)
    assert np.max(np.abs(r - 0.25)) <= 0.5 * h * h


def test_cell_mesh_too_coarse():
    with pytest.raises(MeshFailure):
        g.mesh_unit_cell(g.CellGeometry.single_hole(0.25), 0.6)


@pytest.mark.parametrize("h", [0.05, 0.02])
def test_periodic_pairs_translate(h):
    m = g.mesh_unit_cell(g.CellGeometry.single_hole(0.25, center=(0.05, -0.1)), h)
    s, t = m.periodic_pairs[:, 0], m.periodic_pairs[:, 1]
    d = m.vertices[s] - m.vertices[t]
    assert np.all(np.abs(d - np.rint(d)) <= 1e-12)
    assert np.all(np.abs(np.rint(d)).sum(axis=1) >= 1)
    assert len(np.unique(s)) == len(s)
    assert not set(s) & set(t)


def test_positive_areas_and_partition(hole_cell_mesh):
    m = hole_cell_mesh
    assert np.all(m.areas > 0)
    assert len(m.edge_tags) == len(m.boundary_edges)
    assert set(np.unique(m.edge_tags)) <= {int(t) for t in g.Tag}


def _monte_carlo_area(inside, lo, hi, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    p = rng.uniform(lo, hi, (n, 2))
    frac = inside(p).mean()
    return frac * np.prod(np.asarray(hi) - np.asarray(lo))


def test_cell_area_against_monte_carlo():
    cell = g.CellGeometry.single_hole(0.25)
    h = 0.05
    m = g.mesh_unit_cell(cell, h)
    mc = _monte_carlo_area(lambda p: g.indicator(cell, p), (-0.5, -0.5), (0.5, 0.5))
    assert abs(m.areas.sum() - mc) / mc <= 10 * h * h
    assert m.areas.sum() == pytest.approx(1 - math.pi / 16, rel=10 * h * h)


def test_square_domain_16_holes():
    cell = g.CellGeometry.single_hole(0.25)
    m = g.mesh_perforated_domain(g.DomainSpec.unit_square(), cell, 0.25, 0.25 / 16)
    hole_edges = m.boundary_edges[m.edge_tags == g.Tag.HoleTraction]
    # count connected hole boundaries
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    n = m.n_vertices
    adj = coo_matrix((np.ones(len(hole_edges)), (hole_edges[:, 0], hole_edges[:, 1])), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    assert len(np.unique(lab[np.unique(hole_edges)])) == 16
    outer = m.boundary_edges[m.edge_tags == g.Tag.OuterDirichlet]
    mid = m.vertices[outer].mean(axis=1)
    assert np.allclose(g.DomainSpec.unit_square().distance_to_boundary(mid), 0.0, atol=1e-12)
    total = np.linalg.norm(m.vertices[outer[:, 1]] - m.vertices[outer[:, 0]], axis=1).sum()
    assert total == pytest.approx(4.0)
    assert np.max(m.diameters) <= 2 * (0.25 / 16)


def test_alignment_error():
    with pytest.raises(AlignmentError):
        g.mesh_perforated_domain(g.DomainSpec.unit_square(), g.CellGeometry.single_hole(0.25), 1 / 3.5, 0.01)


def test_ball_domain_tags_and_area():
    cell = g.CellGeometry.single_hole(0.25)
    eps, h = 1 / 8, 1 / 64
    dom = g.DomainSpec.ball((0.0, 0.0), 1.0)
    m = g.mesh_perforated_domain(dom, cell, eps, h)
    mid = m.vertices[m.boundary_edges].mean(axis=1)
    d_outer = np.abs(np.linalg.norm(mid, axis=1) - 1.0)
    d_hole = eps * g.hole_distance(cell, mid / eps - g.LATTICE_SHIFT)
    outer = m.edge_tags == g.Tag.OuterDirichlet
    # oracle: each boundary edge midpoint is closer to the boundary its tag names
    assert np.all(d_outer[outer] <= d_hole[outer] + 1e-12)
    assert np.all(d_hole[~outer] < d_outer[~outer])
    assert np.all(d_outer[outer] < h * h)
    mc = _monte_carlo_area(lambda p: (np.linalg.norm(p, axis=1) < 1) & g.in_perforated(cell, p, eps),
                           (-1, -1), (1, 1), n=2_000_000)
    assert abs(m.areas.sum() - mc) / mc <= 10 * h * h


def test_mesh_roundtrip(tmp_path, hole_cell_mesh):
    p = tmp_path / "m.txt"
    g.write_mesh(hole_cell_mesh, p)
    assert p.read_text().splitlines()[0] == "perfhomog-mesh v1"
    back = g.read_mesh(p)
    assert np.array_equal(back.vertices, hole_cell_mesh.vertices)
    assert np.array_equal(back.triangles, hole_cell_mesh.triangles)
    assert np.array_equal(back.edge_tags, hole_cell_mesh.edge_tags)
    assert np.array_equal(back.periodic_pairs, hole_cell_mesh.periodic_pairs)


def test_cell_mesh_symmetric(hole_cell_mesh):
    m = hole_cell_mesh
    for tf in (lambda v: v * [-1, 1], lambda v: v * [1, -1], lambda v: v[:, ::-1]):
        idx = g.mirror_map(m, tf)
        assert np.array_equal(np.sort(idx), np.arange(m.n_vertices))
