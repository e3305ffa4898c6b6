import math

import numpy as np
import pytest
from scipy.special import roots_legendre

from perfhomog import elasticity as el
from perfhomog import geometry as g
from perfhomog import pipeline as pl
from perfhomog.errors import GridTooCoarse, ParameterError

from .conftest import M_CANON

SQUARE = g.DomainSpec.unit_square()


def affine(M=M_CANON, q=(0.0, 0.0)):
    return lambda x: np.asarray(x) @ np.asarray(M).T + np.asarray(q)


# ---------------------------------------------------------------- mollifier and smoothing

@pytest.mark.parametrize("ratio", [8, 12, 16])
def test_stencil_normalised_even_supported(ratio):
    w = pl.Mollifier().stencil(1.0, 1.0 / ratio)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(w, w[::-1]) and np.array_equal(w, w.T)
    n = w.shape[0] // 2
    k = np.arange(-n, n + 1) / ratio
    r2 = k[:, None] ** 2 + k[None, :] ** 2
    assert np.all(w[r2 >= 1] == 0) and np.all(w[r2 < 1] > 0)


def test_profile_even():
    m = pl.Mollifier()
    x = np.random.default_rng(0).uniform(-1.2, 1.2, (200, 2))
    assert np.array_equal(m.profile(x), m.profile(-x))
    assert m.profile(np.zeros(2)) == 1.0


def test_smooth_reproduces_constants_and_linears():
    eps = 1 / 8
    grid = pl.background_grid(SQUARE, eps)
    p = grid.points()
    const = pl.smooth(grid.with_values(np.full(grid.shape, 3.5)), eps, periodic=True)
    assert np.max(np.abs(const.values - 3.5)) <= 1e-10
    lin = pl.smooth(grid.with_values(2 * p[..., 0] - p[..., 1]), eps)
    inner = np.all((p > eps + 1e-12) & (p < 1 - eps - 1e-12), axis=-1)
    assert np.max(np.abs(lin.values - (2 * p[..., 0] - p[..., 1]))[inner]) <= 1e-10


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        pl.background_grid(SQUARE, 0.1, ratio=4)
    coarse = pl.GridField(np.zeros(2), 0.1 / 4, np.zeros((5, 5)))
    with pytest.raises(GridTooCoarse):
        pl.smooth(coarse, 0.1)


def test_smoothed_field_is_tensor_valued():
    grid = pl.background_grid(SQUARE, 1 / 8)
    vals = np.random.default_rng(1).standard_normal(grid.shape + (2, 2))
    out = pl.smooth(grid.with_values(vals), 1 / 8)
    assert out.values.shape == vals.shape
    ref = pl.smooth(grid.with_values(vals[..., 1, 0]), 1 / 8).values
    assert np.allclose(out.values[..., 1, 0], ref, atol=1e-14)


# ---------------------------------------------------------------- cutoff

def test_cutoff_examples():
    eta = pl.cutoff(SQUARE, 0.05)
    pts = np.array([[0.5, 0.5], [0.1, 0.5], [0.175, 0.5], [0.5, 0.3], [0.0, 0.2]])
    assert np.allclose(eta(pts), [1.0, 0.0, 0.5, 1.0, 0.0], atol=1e-14)
    assert eta.gradient_bound == pytest.approx(20.0)


def test_cutoff_vanishes_for_large_eps():
    # eps >= diam/8 gives eta == 0; this is allowed
    eta = pl.cutoff(SQUARE, 0.25)
    pts = np.random.default_rng(2).uniform(0, 1, (500, 2))
    assert np.all(eta(pts) == 0)
    with pytest.raises(ParameterError):
        pl.cutoff(SQUARE, 0.0)


# ---------------------------------------------------------------- solves

@pytest.fixture(scope="module")
def perforated_mesh(hole_cell):
    return g.mesh_perforated_domain(SQUARE, hole_cell, 1 / 4, 1 / 32)


def test_affine_data_reproduced_without_holes(iso, unit_square_mesh):
    u = pl.solve_eps_problem(unit_square_mesh, iso, 0.25, affine(q=(0.2, -1.0)), 1e-12)
    assert np.allclose(u.values, affine(q=(0.2, -1.0))(unit_square_mesh.vertices), atol=1e-9)


def test_zero_data_gives_zero(iso, perforated_mesh):
    u = pl.solve_eps_problem(perforated_mesh, iso, 0.25, lambda x: np.zeros_like(x))
    assert np.all(u.values == 0)


def test_residual_vanishes_off_boundary(iso, perforated_mesh):
    f = affine()
    u = pl.solve_eps_problem(perforated_mesh, iso, 0.25, f, 1e-11)
    k = el.stiffness_matrix(perforated_mesh, iso)
    r = (k @ u.values.reshape(-1)).reshape(-1, 2)
    fixed = perforated_mesh.vertices_with_tag(g.Tag.OuterDirichlet)
    free = np.setdiff1d(np.arange(perforated_mesh.n_vertices), fixed)
    assert np.allclose(u.values[fixed], f(perforated_mesh.vertices[fixed]), atol=1e-14)
    scale = np.linalg.norm(k @ f(perforated_mesh.vertices).reshape(-1))
    assert np.linalg.norm(r[free]) <= 1e-9 * scale


def test_homogenized_affine_exact(hole_correctors, unit_square_mesh):
    _, that = hole_correctors
    u0 = pl.solve_homogenized(unit_square_mesh, that, affine(), 1e-12)
    assert np.allclose(u0.values, affine()(unit_square_mesh.vertices), atol=1e-9)


# ---------------------------------------------------------------- two-scale field

@pytest.fixture(scope="module")
def affine_u0():
    mesh = g.mesh_domain(SQUARE, 1 / 32)
    return el.VectorField.interpolate(mesh, affine())


def test_no_hole_two_scale_equals_u0(iso, affine_u0):
    cell_mesh = g.mesh_unit_cell(g.CellGeometry(()), 0.1)
    chi, _ = pl.homogenize(cell_mesh, iso, 1e-12)
    v = pl.first_order_approx(affine_u0, chi, 1 / 16, None, SQUARE)
    pts = np.random.default_rng(3).uniform(0, 1, (300, 2))
    val, grad = v.evaluate(pts)
    assert np.allclose(val, affine()(pts), atol=1e-10)
    assert np.allclose(grad, np.broadcast_to(M_CANON, grad.shape), atol=1e-10)


def _interior_solid_points(cell, eps, n=160):
    t = 0.375 + 0.25 * (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2)
    return pts[g.in_perforated(cell, pts, eps)]


def test_corrector_term_scales_with_eps(hole_cell, hole_correctors, affine_u0):
    chi, _ = hole_correctors
    amp = []
    for eps in (1 / 16, 1 / 32):
        v = pl.first_order_approx(affine_u0, chi, eps, None, SQUARE)
        pts = _interior_solid_points(hole_cell, eps)
        c = v.corrector_term(pts, with_gradient=False)
        amp.append(math.sqrt(np.mean(np.sum(c**2, axis=1))))
    assert amp[0] / amp[1] == pytest.approx(2.0, rel=0.10)


def test_interior_G_equals_gradient(hole_correctors, affine_u0):
    chi, _ = hole_correctors
    eps = 1 / 16
    G = pl.smoothed_gradient(affine_u0, eps, SQUARE)
    p = G.points()
    deep = np.all((p >= 6 * eps + 1e-9) & (p <= 1 - 6 * eps - 1e-9), axis=-1)
    assert np.allclose(G.values[deep], M_CANON, atol=1e-10)


def test_corrector_term_vanishes_near_boundary(hole_correctors, affine_u0, hole_cell):
    chi, _ = hole_correctors
    eps = 1 / 16
    v = pl.first_order_approx(affine_u0, chi, eps, None, SQUARE)
    mesh = g.mesh_perforated_domain(SQUARE, hole_cell, eps, eps / 8)
    outer = mesh.vertices_with_tag(g.Tag.OuterDirichlet)
    val, grad = v.corrector_term(mesh.vertices[outer])
    assert np.all(val == 0) and np.all(grad == 0)
    near = mesh.vertices[SQUARE.distance_to_boundary(mesh.vertices) <= 0.8 * eps]
    assert np.all(v.corrector_term(near, with_gradient=False) == 0)


# ---------------------------------------------------------------- error norms

def test_h1_error_identity_and_constant(perforated_mesh):
    rng = np.random.default_rng(4)
    u = el.VectorField(perforated_mesh, rng.standard_normal((perforated_mesh.n_vertices, 2)))
    assert pl.h1_error(u, u, perforated_mesh) == 0.0
    c = np.array([0.3, -0.4])
    err = pl.h1_error(u, u + c, perforated_mesh)
    assert err == pytest.approx(0.5 * math.sqrt(perforated_mesh.areas.sum()), rel=1e-12)


def test_h1_error_matches_exact_norm(perforated_mesh):
    rng = np.random.default_rng(5)
    u = el.VectorField(perforated_mesh, rng.standard_normal((perforated_mesh.n_vertices, 2)))
    zero = el.VectorField(perforated_mesh, np.zeros((perforated_mesh.n_vertices, 2)))
    assert pl.h1_error(u, zero, perforated_mesh) == pytest.approx(el.h1_norm(u), rel=1e-12)


def test_h1_error_triangle_inequality(perforated_mesh):
    rng = np.random.default_rng(6)
    f = [el.VectorField(perforated_mesh, rng.standard_normal((perforated_mesh.n_vertices, 2)))
         for _ in range(3)]
    ab = pl.h1_error(f[0], f[1], perforated_mesh)
    bc = pl.h1_error(f[1], f[2], perforated_mesh)
    ac = pl.h1_error(f[0], f[2], perforated_mesh)
    assert ac <= ab + bc + 1e-12


def test_trace_norm_oracle(unit_square_mesh):
    f = affine()
    x, w = roots_legendre(8)
    t, w = (x + 1) / 2, w / 2
    sides = [(np.stack([t, 0 * t], 1), (1, 0)), (np.stack([1 + 0 * t, t], 1), (0, 1)),
             (np.stack([t, 1 + 0 * t], 1), (1, 0)), (np.stack([0 * t, t], 1), (0, 1))]
    ref = sum(w @ np.sum(f(p) ** 2, axis=1) + np.sum((M_CANON @ np.asarray(d)) ** 2) for p, d in sides)
    assert pl.trace_norm(unit_square_mesh, f) == pytest.approx(math.sqrt(ref), rel=1e-12)
    assert pl.trace_norm(unit_square_mesh, affine(2 * M_CANON)) == pytest.approx(
        2 * pl.trace_norm(unit_square_mesh, f), rel=1e-12)


# ---------------------------------------------------------------- sweep

def test_sweep_degenerate_without_holes(iso):
    cfg = pl.SweepConfig(g.CellGeometry(()), iso, epsilons=(1 / 4, 1 / 8), h_over_eps=1 / 8, M=M_CANON)
    rec = pl.convergence_sweep(cfg)
    assert rec.status == "degenerate"
    assert math.isnan(rec.slope)
    assert max(rec.errors) <= 1e-8


def test_sweep_single_eps_undefined(iso, hole_cell, tmp_path):
    cfg = pl.SweepConfig(hole_cell, iso, epsilons=(1 / 4,), h_over_eps=1 / 8, M=M_CANON)
    rec = pl.convergence_sweep(cfg)
    assert rec.status == "undefined" and math.isnan(rec.slope)
    r = rec.reports[0]
    assert r.h1_error > 0 and r.relative_error == pytest.approx(r.h1_error / r.h1_norm_u)
    # eta vanishes at eps = diam/4, so v = u0 and both errors agree
    assert r.h1_error == pytest.approx(r.u_minus_u0, rel=1e-12)
    rec.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == \
        "epsilon,h,h1_error,h1_norm_u,relative_error,slope_running"


def test_sweep_rejects_unsorted(iso, hole_cell):
    with pytest.raises(ParameterError):
        pl.convergence_sweep(pl.SweepConfig(hole_cell, iso, epsilons=(1 / 8, 1 / 4)))


def test_fit_slope_exact():
    eps = np.array([1 / 4, 1 / 8, 1 / 16])
    slope, icpt = pl.fit_slope(eps, 3 * eps**0.5)
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert icpt == pytest.approx(math.log(3), abs=1e-12)


# ---------------------------------------------------------------- smoothing checks

def test_smoothing_checks_constant_weight():
    rep = pl.smoothing_property_checks(epsilons=(1 / 8, 1 / 16, 1 / 32), n_random=3)
    assert pl.SmoothingReport.variation(rep.resonant) <= 0.05
    assert max(rep.resonant) <= 1.0
    assert max(rep.smooth_mode) <= 1.0
    assert max(rep.weighted) <= 1.0 + 1e-12
    assert max(rep.kernel_bound) <= 1.0 + 1e-12


def test_weighted_constant_for_constant_data():
    eps = 1 / 8
    grid = pl._torus_grid(eps, 8)
    c = pl.weighted_smoothing_constant(lambda y: np.ones(len(y)), 1.0, eps, np.ones(grid.shape))
    assert c == pytest.approx(1.0, abs=1e-12)


def test_smoothing_checks_corrector_weight(hole_correctors, hole_cell):
    chi, _ = hole_correctors
    h = pl.corrector_gradient_magnitude(chi, hole_cell)
    rep = pl.smoothing_property_checks(epsilons=(1 / 8, 1 / 16), h=h, h_l2=h.l2_cell, n_random=2)
    assert all(np.isfinite(rep.weighted)) and max(rep.weighted) <= 1.0
    assert pl.SmoothingReport.variation(rep.weighted) <= 0.25


def test_corrector_term_sup_halves(hole_cell, hole_correctors, affine_u0):
    chi, _ = hole_correctors
    sup = []
    for eps in (1 / 16, 1 / 32):
        v = pl.first_order_approx(affine_u0, chi, eps, None, SQUARE)
        c = v.corrector_term(_interior_solid_points(hole_cell, eps, n=320), with_gradient=False)
        sup.append(np.max(np.linalg.norm(c, axis=1)))
    assert sup[0] / sup[1] == pytest.approx(2.0, rel=0.10)


def test_homogenized_quadratic_self_convergence(hole_correctors):
    _, that = hole_correctors
    f = lambda x: np.stack([x[:, 0] ** 2 - x[:, 1] ** 2, x[:, 0] * x[:, 1]], axis=1)
    ref = pl.solve_homogenized(g.mesh_domain(SQUARE, 1 / 64), that, f, 1e-12)
    errs = []
    for h in (1 / 8, 1 / 16):
        u = pl.solve_homogenized(g.mesh_domain(SQUARE, h), that, f, 1e-12)
        errs.append(pl.h1_error(u, ref, u.mesh))
    # first-order H1 convergence in h
    assert errs[0] / errs[1] >= 1.6


def test_small_sweep_invariants(iso, hole_cell):
    cfg = pl.SweepConfig(hole_cell, iso, epsilons=(1 / 4, 1 / 8), h_over_eps=1 / 8, M=M_CANON)
    rec = pl.convergence_sweep(cfg)
    for r in rec.reports:
        assert r.h1_error <= r.u_minus_u0 + r.corrector_norm + 1e-12
    ratios = [r.h1_norm_u / r.trace_norm for r in rec.reports]
    assert max(ratios) / min(ratios) <= 2.0
    assert len(rec.slope_running) == 2 and math.isnan(rec.slope_running[0])
