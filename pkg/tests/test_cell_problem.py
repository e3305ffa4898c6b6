import numpy as np
import pytest

from perfhomog import cell_problem as cp
from perfhomog import elasticity as el
from perfhomog import geometry as g
from perfhomog.errors import ConstraintError, ParameterError, SymmetryError

from .conftest import random_periodic_field


@pytest.fixture(scope="module")
def nohole(iso):
    mesh = g.mesh_unit_cell(g.CellGeometry(()), 0.1)
    return mesh, *cp.homogenize(mesh, iso, 1e-12)


def _sym_basis():
    e = np.zeros((3, 2, 2))
    e[0, 0, 0] = 1
    e[1, 1, 1] = 1
    e[2, 0, 1] = e[2, 1, 0] = 1 / np.sqrt(2)
    return e


def test_no_hole_correctors_vanish(nohole, iso):
    mesh, chi, that = nohole
    assert np.max(np.abs(chi.values())) <= 1e-10
    assert np.allclose(that.tensor, iso, atol=1e-10)


def test_mean_zero_and_periodic(hole_correctors, hole_cell_mesh):
    chi, _ = hole_correctors
    w = el.lumped_weights(hole_cell_mesh)
    s, m = hole_cell_mesh.periodic_pairs.T
    for j in range(2):
        for b in range(2):
            v = chi[j, b].values
            assert np.all(np.abs(w @ v) <= 1e-12)
            assert np.array_equal(v[s], v[m])


def test_weak_form_residual(hole_cell_mesh, iso):
    tol = 1e-10
    chi = cp.solve_all_correctors(hole_cell_mesh, iso, tol)
    sys = cp.assemble_cell(hole_cell_mesh, iso)
    k = sys.full_matrix
    rng = np.random.default_rng(11)
    for j in range(2):
        for b in range(2):
            r = k @ chi.full_solution(j, b).values.reshape(-1)
            bnorm = np.linalg.norm(cp._corrector_rhs(sys, j, b))
            for _ in range(5):
                phi = random_periodic_field(hole_cell_mesh, rng).reshape(-1)
                phi_r = sys.restrict(phi - np.tile(phi[:2], hole_cell_mesh.n_vertices))
                assert abs(phi @ r) <= 10 * tol * np.linalg.norm(phi_r) * bnorm


def test_mirror_equivariance(hole_correctors, hole_cell_mesh):
    chi, _ = hole_correctors
    m = hole_cell_mesh
    idx = g.mirror_map(m, lambda v: v * [-1, 1])
    v = chi[0, 0].values
    assert np.allclose(v[:, 0], -v[idx, 0], atol=1e-8)
    assert np.allclose(v[:, 1], v[idx, 1], atol=1e-8)


def test_swap_equivariance(hole_correctors, hole_cell_mesh):
    chi, _ = hole_correctors
    idx = g.mirror_map(hole_cell_mesh, lambda v: v[:, ::-1])
    assert np.allclose(chi[1, 0].values, chi[0, 1].values[idx, ::-1], atol=1e-8)
    assert np.allclose(chi[1, 1].values, chi[0, 0].values[idx, ::-1], atol=1e-8)


def test_effective_tensor_symmetric_elliptic(hole_correctors, iso):
    _, that = hole_correctors
    rep = cp.verify_effective(that, atol=1e-8, reference=iso)
    assert rep.symmetry_defect <= 1e-8
    assert 0 < rep.kappa1 <= rep.kappa2


def test_corrupted_tensor_rejected(hole_correctors):
    _, that = hole_correctors
    t = np.array(that.tensor)
    t[0, 1, 0, 0] += 1e-3
    with pytest.raises(SymmetryError):
        cp.verify_effective(t)


def test_scaling_in_A(hole_cell_mesh, hole_correctors, iso):
    chi, that = hole_correctors
    chi2, that2 = cp.homogenize(hole_cell_mesh, 2 * iso, 1e-12)
    assert np.allclose(that2.tensor, 2 * that.tensor, atol=1e-10)
    assert np.allclose(chi2.values(), chi.values(), atol=1e-9)


def test_energy_form(hole_correctors, hole_cell_mesh, iso):
    chi, that = hole_correctors
    for xi in _sym_basis():
        x = cp.combined_solution(chi, xi)
        e = cp.cell_energy(hole_cell_mesh, iso, x)
        assert abs(np.einsum("ijab,bj,ai->", that.tensor, xi, xi) - e) <= 1e-6


def test_minimality(hole_correctors, hole_cell_mesh, iso):
    chi, _ = hole_correctors
    rng = np.random.default_rng(5)
    xi = np.array([[0.4, -0.7], [-0.7, 1.1]])
    x = cp.combined_solution(chi, xi)
    e0 = cp.cell_energy(hole_cell_mesh, iso, x)
    for _ in range(20):
        phi = 1e-2 * random_periodic_field(hole_cell_mesh, rng)
        assert cp.cell_energy(hole_cell_mesh, iso, x + phi) >= e0 - 1e-12


def test_self_convergence(hole_cell, iso):
    a = cp.homogenize(g.mesh_unit_cell(hole_cell, 0.02), iso, 1e-10)[1].tensor
    b = cp.homogenize(g.mesh_unit_cell(hole_cell, 0.01), iso, 1e-10)[1].tensor
    assert np.linalg.norm(a - b) / np.linalg.norm(b) <= 0.02


def test_stiff_annulus_increases_tensor(hole_cell_mesh, hole_correctors, iso):
    coef = el.CellPeriodicCoefficient(iso, (el.Inclusion((0.0, 0.0), 0.4, 10 * iso, 0.3),))
    _, stiff = cp.homogenize(hole_cell_mesh, coef, 1e-10)
    cp.verify_effective(stiff, atol=1e-8)
    _, soft = hole_correctors
    basis = _sym_basis()
    diff = np.einsum("pia,ijab,qjb->pq", basis, stiff.tensor - soft.tensor, basis)
    assert np.linalg.eigvalsh(0.5 * (diff + diff.T))[0] > 0


def test_csv_roundtrip(tmp_path, hole_correctors):
    chi, that = hole_correctors
    p = tmp_path / "t.csv"
    that.to_csv(p)
    back = cp.EffectiveTensor.from_csv(p)
    assert np.array_equal(back.tensor, that.tensor)
    assert back.h == that.h and back.tol == that.tol
    chi.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "j,beta,vertex_index,x,y,u1,u2"
    assert len(lines) == 1 + 4 * chi.mesh.n_vertices


def test_bad_index_and_mesh(hole_cell_mesh, iso):
    with pytest.raises(ParameterError):
        cp.solve_corrector(hole_cell_mesh, iso, 2, 0)
    with pytest.raises(ConstraintError):
        cp.assemble_cell(g.mesh_domain(g.DomainSpec.unit_square(), 0.25), iso)
