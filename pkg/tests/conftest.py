import numpy as np
import pytest

from perfhomog import cell_problem as cp
from perfhomog import elasticity as el
from perfhomog import geometry as g

M_CANON = np.array([[1.0, 0.3], [0.3, -0.5]])


@pytest.fixture(scope="session")
def iso():
    return el.make_isotropic(1.0, 1.0)


@pytest.fixture(scope="session")
def hole_cell():
    return g.CellGeometry.single_hole(0.25)


@pytest.fixture(scope="session")
def hole_cell_mesh(hole_cell):
    return g.mesh_unit_cell(hole_cell, 0.05)


@pytest.fixture(scope="session")
def hole_correctors(hole_cell_mesh, iso):
    return cp.homogenize(hole_cell_mesh, iso, 1e-12)


@pytest.fixture(scope="session")
def unit_square_mesh():
    return g.mesh_domain(g.DomainSpec.unit_square(), 1 / 16)


def random_periodic_field(mesh, rng):
    """Random nodal field that respects the periodic identification of ``mesh``."""
    v = rng.standard_normal((mesh.n_vertices, 2))
    v[mesh.periodic_pairs[:, 0]] = v[mesh.periodic_pairs[:, 1]]
    return v
