import math

import numpy as np
import pytest
from scipy.special import roots_legendre

from perfhomog import elasticity as el
from perfhomog import geometry as g
from perfhomog import probe as pr
from perfhomog import quadrature as quad
from perfhomog.errors import GeometryError, ParameterError, RankDeficiency

from .conftest import M_CANON

BALL = g.DomainSpec.ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="module")
def ball_mesh():
    return g.mesh_domain(BALL, 1 / 48)


def _field(mesh, func):
    return el.VectorField.interpolate(mesh, func)


def _lin(x):
    return np.asarray(x) @ M_CANON.T


def _quad_field(x):
    x = np.asarray(x)
    return np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]], axis=1)


def test_averaged_gradient_affine(ball_mesh):
    u = _field(ball_mesh, _lin)
    val = pr.averaged_gradient(u, (0.1, -0.2), 0.3)
    assert val == pytest.approx(np.linalg.norm(M_CANON) * math.sqrt(math.pi), rel=1e-12)
    const = _field(ball_mesh, lambda x: np.ones_like(x))
    assert pr.averaged_gradient(const, (0.0, 0.0), 0.5) <= 1e-12


def test_averaged_gradient_polar_oracle(ball_mesh):
    # |grad u|^2 = 5 x^2 + y^2 for u = (x^2, xy); polar Gauss rule on the disk
    x0, r = np.array([0.2, 0.1]), 0.4
    u = _field(ball_mesh, _quad_field)
    s, ws = roots_legendre(20)
    rho, wr = r * (s + 1) / 2, r * ws / 2
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    R, T = np.meshgrid(rho, th, indexing="ij")
    X, Y = x0[0] + R * np.cos(T), x0[1] + R * np.sin(T)
    integral = np.sum((5 * X**2 + Y**2) * R * wr[:, None]) * (2 * np.pi / 64)
    oracle = math.sqrt(integral / r**2)
    assert pr.averaged_gradient(u, x0, r) == pytest.approx(oracle, rel=0.01)


def test_sup_gradient(ball_mesh):
    u = _field(ball_mesh, _lin)
    assert pr.sup_gradient(u, (0.0, 0.0), 0.3) == pytest.approx(np.linalg.norm(M_CANON), rel=1e-12)
    w = _field(ball_mesh, _quad_field)
    sups = [pr.sup_gradient(w, (0.0, 0.0), r) for r in (0.1, 0.2, 0.4, 0.8)]
    assert all(a <= b for a, b in zip(sups, sups[1:]))


def test_lipschitz_ratio_affine_no_holes(ball_mesh):
    u = _field(ball_mesh, _lin)
    rep = pr.lipschitz_ratio(u, (0.0, 0.0), 1.0, 1 / 16, with_extras=False)
    assert rep.radii[0] == pytest.approx(1 / 16) and rep.radii[-1] == pytest.approx(1 / 3)
    assert np.allclose(rep.ratios, 1.0, atol=2e-3)


def test_probe_radii_rejects_large_eps():
    with pytest.raises(GeometryError):
        pr.probe_radii(0.5, 1.0)
    r = pr.probe_radii(1 / 32, 1.0)
    assert all(b > a for a, b in zip(r, r[1:]))


def test_caccioppoli_degenerate_constant(ball_mesh):
    const = _field(ball_mesh, lambda x: np.ones_like(x) * [2.0, -1.0])
    res = pr.caccioppoli_check(const, (0.0, 0.0), 0.2)
    assert res.degenerate and math.isnan(res.ratio)


def test_caccioppoli_scale_invariance(ball_mesh):
    u = _field(ball_mesh, lambda x: np.stack([np.sin(3 * x[:, 0]) * x[:, 1], np.cos(2 * x[:, 1])], 1))
    a = pr.caccioppoli_check(u, (0.1, 0.0), 0.2)
    b = pr.caccioppoli_check(u * 7.5 + [3.0, -2.0], (0.1, 0.0), 0.2)
    assert not a.degenerate
    assert abs(a.ratio - b.ratio) <= 1e-8


def test_caccioppoli_affine_value(ball_mesh):
    u = _field(ball_mesh, _lin)
    res = pr.caccioppoli_check(u, (0.0, 0.0), 0.2)
    # oscillation of Mx on B(2r): int |M y|^2 = |M|_F^2 pi (2r)^4 / 4
    rhs = math.sqrt(np.linalg.norm(M_CANON) ** 2 * math.pi * (0.4) ** 4 / 4 / 0.4**2) / 0.2
    assert res.rhs == pytest.approx(rhs, rel=1e-9)
    assert res.ratio == pytest.approx(np.linalg.norm(M_CANON) * math.sqrt(math.pi) / rhs, rel=1e-9)


def test_excess_affine_zero(ball_mesh):
    u = _field(ball_mesh, lambda x: _lin(x) + [0.4, -0.3])
    rec = pr.excess(u, (0.1, 0.2), 0.3)
    assert rec.H <= 1e-10
    assert np.allclose(rec.M, M_CANON, atol=1e-10)
    assert np.allclose(rec.q, [0.4, -0.3], atol=1e-10)


def test_excess_matches_dense_normal_equations(ball_mesh):
    u = _field(ball_mesh, lambda x: np.stack([np.sin(2 * x[:, 0] + x[:, 1]), x[:, 0] ** 2 - x[:, 1] ** 3], 1))
    x0, r = np.array([0.15, -0.1]), 0.35
    rule = quad.clipped_rule(ball_mesh, x0, r)
    vals = u.at(rule.elements, rule.bary)
    # unknowns (M11, M12, M21, M22, q1, q2) on the same samples
    n = len(rule.weights)
    A = np.zeros((2 * n, 6))
    p = rule.points
    A[0::2, 0], A[0::2, 1], A[0::2, 4] = p[:, 0], p[:, 1], 1.0
    A[1::2, 2], A[1::2, 3], A[1::2, 5] = p[:, 0], p[:, 1], 1.0
    W = np.repeat(rule.weights, 2)
    sol = np.linalg.solve(A.T @ (W[:, None] * A), A.T @ (W * vals.reshape(-1)))
    res = vals.reshape(-1) - A @ sol
    H = math.sqrt(W @ res**2 / r**2) / r
    rec = pr.excess(u, x0, r)
    assert abs(rec.H - H) <= 1e-9
    assert np.allclose(rec.M.reshape(-1), sol[:4], atol=1e-9)
    assert np.allclose(rec.q, sol[4:], atol=1e-9)
    assert rec.gradient_norm <= 1e-9


def test_excess_shift_invariance(ball_mesh):
    u = _field(ball_mesh, _quad_field)
    a = pr.excess(u, (0.0, 0.1), 0.3)
    b = pr.excess(u + [5.0, -2.0], (0.0, 0.1), 0.3)
    assert abs(a.H - b.H) <= 1e-10
    assert np.allclose(b.q - a.q, [5.0, -2.0], atol=1e-10)


def test_excess_rank_deficient(ball_mesh):
    u = _field(ball_mesh, _lin)
    with pytest.raises(RankDeficiency):
        pr.excess(u, (5.0, 5.0), 0.1)
    with pytest.raises(ParameterError):
        pr.excess(u, (0.0, 0.0), 0.0)


def test_decay_series_quadratic(ball_mesh):
    # H(r) is linear in r for quadratic data, so each step shrinks H by theta
    u = _field(ball_mesh, _quad_field)
    s = pr.excess_decay_series(u, (0.0, 0.0), 0.25, 0.8, 0.05)
    assert [rec.r for rec in s.records] == pytest.approx([0.8, 0.2, 0.05])
    assert np.allclose(s.factors, 0.25, rtol=0.05)
    assert math.isnan(s.stall_radius)


def test_decay_series_parameters(ball_mesh):
    u = _field(ball_mesh, _quad_field)
    with pytest.raises(ParameterError):
        pr.excess_decay_series(u, (0.0, 0.0), 0.3, 0.5, 0.05)
    with pytest.raises(ParameterError):
        pr.excess_decay_series(u, (0.0, 0.0), 0.25, 0.01, 0.05)
    affine = _field(ball_mesh, _lin)
    s = pr.excess_decay_series(affine, (0.0, 0.0), 0.25, 0.5, 0.1)
    assert len(s.records) == 2


@pytest.fixture(scope="module")
def coarse_probe(hole_cell, iso):
    return pr.probe_solution(hole_cell, iso, 1 / 4, R=1.0)


def test_probe_report_shape(coarse_probe):
    mesh, u = coarse_probe
    rep = pr.lipschitz_ratio(u, (0.0, 0.0), 1.0, 1 / 4)
    rows = list(rep.to_rows())
    assert len(rows) == len(rep.radii) and all(len(r) == 8 for r in rows)
    assert np.all(np.isfinite(rep.ratios)) and rep.sup_ratio == max(rep.ratios)
    assert rep.excess_series is not None
