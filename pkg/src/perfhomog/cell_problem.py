"""Periodic corrector problems on the perforated unit cell and the effective tensor."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import elasticity as el
from .errors import ConstraintError, ParameterError
from .geometry import Mesh


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Correctors ``chi[j][beta]`` (0-based) on a cell mesh."""

    mesh: Mesh
    chi: tuple  # chi[j][beta] -> VectorField
    tol: float = 1e-12

    def __getitem__(self, jb):
        j, b = jb
        return self.chi[j][b]

    def full_solution(self, j, beta) -> el.VectorField:
        """``X_j^beta = chi_j^beta + y_j e^beta``."""
        lin = np.zeros((self.mesh.n_vertices, 2))
        lin[:, beta] = self.mesh.vertices[:, j]
        return self.chi[j][beta] + lin

    def values(self) -> np.ndarray:
        """Nodal values stacked as ``(n_vertices, 2[gamma], 2[j], 2[beta])``."""
        return np.stack([np.stack([self.chi[j][b].values for b in range(2)], axis=-1)
                         for j in range(2)], axis=-2)

    def gradients(self) -> np.ndarray:
        """Element gradients ``(m, 2[gamma], 2[k], 2[j], 2[beta])`` of ``chi_j^{gamma beta}``."""
        return np.stack([np.stack([self.chi[j][b].gradient() for b in range(2)], axis=-1)
                         for j in range(2)], axis=-2)

    def write_csv(self, path) -> None:
        v = self.mesh.vertices
        with open(path, "w") as fh:
            fh.write("j,beta,vertex_index,x,y,u1,u2\n")
            for j in range(2):
                for b in range(2):
                    vals = self.chi[j][b].values
                    for i in range(self.mesh.n_vertices):
                        fh.write(f"{j + 1},{b + 1},{i},{v[i, 0]:.17g},{v[i, 1]:.17g},"
                                 f"{vals[i, 0]:.17g},{vals[i, 1]:.17g}\n")


@dataclass(frozen=True, eq=False)
class EffectiveTensor:
    tensor: np.ndarray
    h: float = float("nan")
    tol: float = float("nan")

    def __post_init__(self):
        t = np.array(self.tensor, dtype=float).reshape(2, 2, 2, 2)
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.tensor, dtype=dtype)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# effective tensor; cell mesh h={self.h:.17g}; solver tol={self.tol:.17g}\n")
            fh.write("i,j,alpha,beta,value\n")
            for (i, j, a, b), val in np.ndenumerate(self.tensor):
                fh.write(f"{i + 1},{j + 1},{a + 1},{b + 1},{val:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "EffectiveTensor":
        t = np.full((2, 2, 2, 2), np.nan)
        h = tol = float("nan")
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#"):
                    for part in line[1:].split(";"):
                        key, _, val = part.strip().partition("=")
                        if key == "cell mesh h":
                            h = float(val)
                        elif key == "solver tol":
                            tol = float(val)
                    continue
                if not line or line.startswith("i,"):
                    continue
                i, j, a, b, val = line.split(",")
                t[int(i) - 1, int(j) - 1, int(a) - 1, int(b) - 1] = float(val)
        if np.isnan(t).any():
            raise ParameterError(f"{path}: incomplete effective tensor")
        return cls(t, h, tol)


@dataclass(frozen=True)
class EffectiveReport:
    kappa1: float
    kappa2: float
    symmetry_defect: float
    softer_than: bool | None = None  # kappa1_hat <= kappa1 when a reference tensor is given


def _check_cell_mesh(mesh):
    if len(mesh.periodic_pairs) == 0:
        raise ConstraintError("corrector problems need a periodic cell mesh")


def _corrector_rhs(system: el.SparseSystem, j, beta):
    lin = np.zeros((system.mesh.n_vertices, 2))
    lin[:, beta] = system.mesh.vertices[:, j]
    return -(system.P.T @ (system.full_matrix @ lin.reshape(-1)))


def assemble_cell(cell_mesh: Mesh, A) -> el.SparseSystem:
    _check_cell_mesh(cell_mesh)
    return el.assemble(cell_mesh, A, 1.0, el.PeriodicPlusMeanZero())


def solve_corrector(cell_mesh: Mesh, A, j: int, beta: int, tol: float = 1e-12, system=None) -> el.VectorField:
    """Corrector ``chi_j^beta`` (0-based indices) with periodic, mean-zero constraints."""
    if j not in (0, 1) or beta not in (0, 1):
        raise ParameterError("corrector indices must be 0 or 1")
    if system is None:
        system = assemble_cell(cell_mesh, A)
    return el.solve(system.with_rhs(_corrector_rhs(system, j, beta)), tol)


def solve_all_correctors(cell_mesh: Mesh, A, tol: float = 1e-12) -> CorrectorSet:
    system = assemble_cell(cell_mesh, A)
    jobs = [(j, b) for j in range(2) for b in range(2)]
    run = lambda jb: solve_corrector(cell_mesh, A, jb[0], jb[1], tol, system)
    nt = el.n_threads()
    if nt > 1:
        with ThreadPoolExecutor(min(nt, 4)) as pool:
            fields = list(pool.map(run, jobs))
    else:
        fields = [run(jb) for jb in jobs]
    chi = ((fields[0], fields[1]), (fields[2], fields[3]))
    return CorrectorSet(cell_mesh, chi, tol)


def _full_gradients(correctors: CorrectorSet):
    g = correctors.gradients().copy()  # (m, gamma, k, j, beta)
    for j in range(2):
        for b in range(2):
            g[:, b, j, j, b] += 1.0
    return g


def effective_tensor(correctors: CorrectorSet, A, cell_mesh: Mesh | None = None) -> EffectiveTensor:
    """``a_hat_ij^ab = int_{Q∩ω} a_ik^{a g} d_k X_j^{g b}`` (the cell has unit area)."""
    mesh = correctors.mesh if cell_mesh is None else cell_mesh
    tensors = el._element_tensors(mesh, el.as_coefficient(A), 1.0)
    gx = _full_gradients(correctors)
    that = np.einsum("e,eikag,egkjb->ijab", mesh.areas, tensors, gx, optimize=True)
    return EffectiveTensor(that, mesh.mesh_size, correctors.tol)


def cell_energy(mesh: Mesh, A, u: el.VectorField | np.ndarray) -> float:
    """``int A grad u : grad u`` for a nodal field (periodic or not)."""
    vals = u.values if isinstance(u, el.VectorField) else np.asarray(u)
    k = el.stiffness_matrix(mesh, A)
    x = vals.reshape(-1)
    return float(x @ (k @ x))


def combined_solution(correctors: CorrectorSet, xi) -> np.ndarray:
    """Nodal values of ``X xi = xi_j^beta X_j^beta``."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros((correctors.mesh.n_vertices, 2))
    for j in range(2):
        for b in range(2):
            out += xi[b, j] * correctors.full_solution(j, b).values
    return out


def verify_effective(that, atol: float = 1e-8, reference=None) -> EffectiveReport:
    """Symmetry and ellipticity of an effective tensor."""
    t = that.tensor if isinstance(that, EffectiveTensor) else np.asarray(that, dtype=float)
    rep = el.check_elasticity_conditions(t, atol=atol)
    softer = None
    if reference is not None:
        softer = rep.kappa1 <= el.ellipticity_bounds(reference)[0] + 1e-12
    return EffectiveReport(rep.kappa1, rep.kappa2, rep.symmetry_defect, softer)


def homogenize(cell_mesh: Mesh, A, tol: float = 1e-12):
    """Correctors and effective tensor in one call."""
    chi = solve_all_correctors(cell_mesh, A, tol)
    return chi, effective_tensor(chi, A)
