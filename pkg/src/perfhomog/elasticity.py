"""Vector P1 finite elements for linear elasticity.

Coefficient tensors are stored as arrays ``a[i, j, alpha, beta]`` (index
order ``a_{ij}^{alpha beta}``), so the bilinear form reads
``sum a[i,j,al,be] * d_j u^be * d_i w^al``.  Displacement gradients are
``grad[..., alpha, j] = d_j u^alpha``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import (
    ConstraintError,
    EllipticityError,
    NonConvergence,
    ParameterError,
    QuadratureError,
    SingularPencil,
    SymmetryError,
)
from .geometry import Mesh, Tag
from . import quadrature

# orthonormal basis of symmetric 2x2 matrices
_SYM_BASIS = np.array([
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
    [[0.0, 1 / math.sqrt(2)], [1 / math.sqrt(2), 0.0]],
])


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("PERFHOMOG_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- tensors

def make_isotropic(lam: float, mu: float) -> np.ndarray:
    """Isotropic tensor ``lam d_ia d_jb + mu (d_ij d_ab + d_ib d_ja)``."""
    if not mu > 0:
        raise ParameterError(f"shear modulus must be positive, got mu={mu}")
    if lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    d = np.eye(2)
    return (lam * np.einsum("ia,jb->ijab", d, d)
            + mu * (np.einsum("ij,ab->ijab", d, d) + np.einsum("ib,ja->ijab", d, d)))


def symmetry_defect(a) -> float:
    """Largest violation of ``a_ij^ab = a_ji^ba = a_aj^ib``."""
    a = np.asarray(a)
    return float(max(np.max(np.abs(a - a.transpose(1, 0, 3, 2))),
                     np.max(np.abs(a - a.transpose(2, 1, 0, 3)))))


def ellipticity_bounds(a) -> tuple[float, float]:
    """Extreme eigenvalues of ``xi -> a xi : xi`` on symmetric matrices."""
    gram = np.einsum("pia,ijab,qjb->pq", _SYM_BASIS, np.asarray(a), _SYM_BASIS)
    ev = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    return float(ev[0]), float(ev[-1])


@dataclass(frozen=True)
class ElasticityReport:
    kappa1: float
    kappa2: float
    symmetry_defect: float


def check_elasticity_conditions(a, atol: float = 0.0) -> ElasticityReport:
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2, 2, 2):
        raise ParameterError(f"expected a (2,2,2,2) tensor, got shape {a.shape}")
    defect = symmetry_defect(a)
    if defect > atol:
        raise SymmetryError(f"index symmetries violated by {defect:.3g} (tolerance {atol:.3g})")
    k1, k2 = ellipticity_bounds(a)
    if not k1 > 0:
        raise EllipticityError(f"tensor is not elliptic on symmetric matrices (kappa1={k1:.6g})")
    return ElasticityReport(k1, k2, defect)


# ---------------------------------------------------------------- coefficients

class CoefficientField:
    """1-periodic coefficient ``A(y)``, evaluated at cell coordinates."""

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, factor: float) -> "CoefficientField":
        return _Scaled(self, factor)


@dataclass(frozen=True)
class ConstantCoefficient(CoefficientField):
    tensor: np.ndarray

    def evaluate(self, y):
        return np.broadcast_to(np.asarray(self.tensor, dtype=float), (len(y), 2, 2, 2, 2))


@dataclass(frozen=True)
class Inclusion:
    """Annulus ``r_in <= |y - center| < r_out`` (``r_in = 0`` gives a disk)."""

    center: tuple[float, float]
    r_out: float
    tensor: np.ndarray
    r_in: float = 0.0


@dataclass(frozen=True)
class CellPeriodicCoefficient(CoefficientField):
    base: np.ndarray
    inclusions: tuple[Inclusion, ...] = ()

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        w = y - np.round(y)
        out = np.array(np.broadcast_to(np.asarray(self.base, float), (len(y), 2, 2, 2, 2)))
        for inc in self.inclusions:
            d = np.linalg.norm(w - np.asarray(inc.center), axis=1)
            out[(d >= inc.r_in) & (d < inc.r_out)] = inc.tensor
        return out


@dataclass(frozen=True)
class SmoothCoefficient(CoefficientField):
    """Callable ``y -> (2,2,2,2)`` tensor, 1-periodic, with Hölder exponent ``tau``."""

    func: Callable
    tau: float = 1.0

    def evaluate(self, y):
        y = np.asarray(y, dtype=float)
        try:
            vals = np.asarray(self.func(y), dtype=float)
            if vals.shape == (len(y), 2, 2, 2, 2):
                return vals
        except Exception:
            pass
        try:
            return np.stack([np.asarray(self.func(p), dtype=float) for p in y])
        except Exception as exc:
            raise QuadratureError(f"coefficient evaluation failed: {exc}") from exc


@dataclass(frozen=True)
class _Scaled(CoefficientField):
    inner: CoefficientField
    factor: float

    def evaluate(self, y):
        return self.factor * self.inner.evaluate(y)


def as_coefficient(a) -> CoefficientField:
    if isinstance(a, CoefficientField):
        return a
    return ConstantCoefficient(np.asarray(a, dtype=float))


# ---------------------------------------------------------------- fields

@dataclass(frozen=True, eq=False)
class VectorField:
    mesh: Mesh
    values: np.ndarray  # (n_vertices, 2)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.mesh.n_vertices, 2)
        object.__setattr__(self, "values", v)

    @classmethod
    def interpolate(cls, mesh, func):
        return cls(mesh, np.asarray(func(mesh.vertices), dtype=float).reshape(-1, 2))

    def gradient(self) -> np.ndarray:
        """Element gradients ``(m, 2, 2)`` with ``g[e, alpha, j] = d_j u^alpha``."""
        return np.einsum("mak,maj->mkj", self.values[self.mesh.triangles], self.mesh.shape_gradients)

    def at(self, elements, bary) -> np.ndarray:
        """Values at barycentric coordinates ``bary`` (n,3) inside ``elements``."""
        return np.einsum("na,nak->nk", bary, self.values[self.mesh.triangles[elements]])

    def __add__(self, other):
        return VectorField(self.mesh, self.values + _values_of(other))

    def __sub__(self, other):
        return VectorField(self.mesh, self.values - _values_of(other))

    def __mul__(self, c):
        return VectorField(self.mesh, self.values * c)

    __rmul__ = __mul__


def _values_of(other):
    return other.values if isinstance(other, VectorField) else np.asarray(other, dtype=float)


def symmetric_gradient(u: VectorField) -> np.ndarray:
    g = u.gradient()
    return 0.5 * (g + g.transpose(0, 2, 1))


def l2_norm(u: VectorField, elements=None) -> float:
    """Exact L2 norm of a P1 field, optionally restricted to a boolean element mask."""
    v = u.values[u.mesh.triangles]
    area = u.mesh.areas
    per = area / 12.0 * (np.sum(v**2, axis=(1, 2)) + np.sum(np.sum(v, axis=1) ** 2, axis=1))
    if elements is not None:
        per = per[elements]
    return float(math.sqrt(max(per.sum(), 0.0)))


def h1_seminorm(u: VectorField, elements=None) -> float:
    per = u.mesh.areas * np.sum(u.gradient() ** 2, axis=(1, 2))
    if elements is not None:
        per = per[elements]
    return float(math.sqrt(per.sum()))


def h1_norm(u: VectorField, elements=None) -> float:
    return math.hypot(l2_norm(u, elements), h1_seminorm(u, elements))


def averaged_l2(field_values, x0, r, mesh: Mesh) -> float:
    """``(r^-2 * int_{B(x0,r) ∩ mesh} f^2)^(1/2)`` for an element-wise constant ``f``."""
    if not r > 0:
        raise ParameterError("radius must be positive")
    elem, area = quadrature.clipped_areas(mesh, x0, r)
    if len(elem) == 0:
        return 0.0
    f = np.asarray(field_values, dtype=float)[elem]
    return float(math.sqrt(np.sum(area * f**2) / r**2))


def write_field_csv(u: VectorField, path) -> None:
    with open(path, "w") as fh:
        fh.write("vertex_index,x,y,u1,u2\n")
        for i, ((x, y), (a, b)) in enumerate(zip(u.mesh.vertices, u.values)):
            fh.write(f"{i},{x:.17g},{y:.17g},{a:.17g},{b:.17g}\n")


# ---------------------------------------------------------------- constraints

@dataclass(frozen=True)
class DirichletOnGamma:
    """Prescribe ``data(x)`` on vertices of OuterDirichlet edges (zero when ``data`` is None)."""

    data: Callable | None = None
    tags: tuple = (Tag.OuterDirichlet,)


@dataclass(frozen=True)
class DirichletEverywhereOnOuter:
    """Prescribe ``data(x)`` on every boundary vertex (unperforated meshes)."""

    data: Callable | None = None


@dataclass(frozen=True)
class PeriodicPlusMeanZero:
    pass


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Reduced SPD system: full dof vector ``= P @ x + offset``."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    P: sparse.csr_matrix
    offset: np.ndarray
    mesh: Mesh
    full_matrix: sparse.csr_matrix
    mean_zero: bool = False

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def expand(self, x) -> np.ndarray:
        return self.P @ x + self.offset

    def restrict(self, full) -> np.ndarray:
        """Least-squares inverse of ``expand`` for vectors that satisfy the constraints."""
        full = np.asarray(full, dtype=float).reshape(-1)
        counts = np.asarray(self.P.sum(axis=0)).ravel()
        counts[counts == 0] = 1.0
        return (self.P.T @ (full - self.offset)) / counts

    def with_rhs(self, rhs) -> "SparseSystem":
        return SparseSystem(self.matrix, np.asarray(rhs, float), self.P, self.offset, self.mesh,
                            self.full_matrix, self.mean_zero)


def element_dofs(mesh: Mesh) -> np.ndarray:
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(-1, 6)


def _element_tensors(mesh: Mesh, coefficient: CoefficientField, eps: float) -> np.ndarray:
    y = mesh.cell_coordinates(mesh.centroids, eps)
    try:
        a = coefficient.evaluate(y)
    except QuadratureError:
        raise
    except Exception as exc:
        raise QuadratureError(f"coefficient evaluation failed: {exc}") from exc
    a = np.asarray(a, dtype=float)
    if a.shape != (mesh.n_triangles, 2, 2, 2, 2) or not np.all(np.isfinite(a)):
        raise QuadratureError("coefficient returned invalid values")
    return a


def stiffness_matrix(mesh: Mesh, coefficient, eps: float = 1.0) -> sparse.csr_matrix:
    """Unconstrained P1 stiffness, one-point (exact) quadrature with barycentric coefficients."""
    coefficient = as_coefficient(coefficient)
    if isinstance(coefficient, ConstantCoefficient):
        tensors = None
        const = np.asarray(coefficient.tensor, dtype=float)
    else:
        tensors = _element_tensors(mesh, coefficient, eps)
    dofs = element_dofs(mesh)
    n = 2 * mesh.n_vertices
    m = mesh.n_triangles
    grads = mesh.shape_gradients
    areas = mesh.areas
    chunk = 65536
    blocks = [(s, min(s + chunk, m)) for s in range(0, m, chunk)]

    def work(bounds):
        s, e = bounds
        if tensors is None:
            ke = np.einsum("eai,ijxy,ebj->eaxby", grads[s:e], const, grads[s:e], optimize=True)
        else:
            ke = np.einsum("eai,eijxy,ebj->eaxby", grads[s:e], tensors[s:e], grads[s:e], optimize=True)
        ke = (ke * areas[s:e, None, None, None, None]).reshape(e - s, 6, 6)
        d = dofs[s:e]
        rows = np.repeat(d, 6, axis=1).ravel()
        cols = np.tile(d, (1, 6)).ravel()
        return sparse.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))

    nt = n_threads()
    if nt > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(nt) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    k = parts[0]
    for p in parts[1:]:  # fixed order keeps the sum deterministic
        k = k + p
    k = k.tocsr()
    k.sum_duplicates()
    return k


def mass_matrix(mesh: Mesh) -> sparse.csr_matrix:
    """Consistent vector P1 mass matrix."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    t = mesh.triangles
    vals = mesh.areas[:, None, None] * local
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    ms = sparse.csr_matrix((vals.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    return sparse.kron(ms, sparse.eye(2), format="csr")


def lumped_weights(mesh: Mesh) -> np.ndarray:
    """``int N_a`` for each vertex (exact)."""
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                       minlength=mesh.n_vertices)


def _dirichlet_vertices(mesh, constraint):
    if isinstance(constraint, DirichletEverywhereOnOuter):
        return mesh.boundary_vertices
    return mesh.vertices_with_tag(*constraint.tags)


def _constraint_map(mesh: Mesh, constraints):
    n = 2 * mesh.n_vertices
    offset = np.zeros(n)
    if isinstance(constraints, PeriodicPlusMeanZero):
        if len(mesh.periodic_pairs) == 0:
            raise ConstraintError("periodic constraints need a mesh with periodic pairs")
        master = np.arange(mesh.n_vertices)
        for s, m in mesh.periodic_pairs:
            if master[m] != m:
                raise ConstraintError(f"master vertex {m} is itself a slave")
            master[s] = m
        tol = 1e-12 * max(1.0, float(np.max(np.abs(mesh.vertices))))
        d = mesh.vertices[mesh.periodic_pairs[:, 0]] - mesh.vertices[mesh.periodic_pairs[:, 1]]
        if np.any(np.abs(d - np.rint(d)) > tol):
            raise ConstraintError("periodic pairs are not related by lattice translations")
        keep = np.flatnonzero(master == np.arange(mesh.n_vertices))
        pin = keep[0]  # translations are the kernel; pin the first master vertex
        free = keep[keep != pin]
        col_of = -np.ones(mesh.n_vertices, dtype=np.int64)
        col_of[free] = np.arange(len(free))
        vcols = col_of[master]
        rows = np.flatnonzero(vcols >= 0)
        cols = vcols[rows]
        r2 = np.r_[2 * rows, 2 * rows + 1]
        c2 = np.r_[2 * cols, 2 * cols + 1]
        P = sparse.csr_matrix((np.ones(len(r2)), (r2, c2)), shape=(n, 2 * len(free)))
        return P, offset, True
    if isinstance(constraints, (DirichletOnGamma, DirichletEverywhereOnOuter)):
        fixed = _dirichlet_vertices(mesh, constraints)
        if constraints.data is not None and len(fixed):
            vals = np.asarray(constraints.data(mesh.vertices[fixed]), dtype=float).reshape(-1, 2)
            offset[2 * fixed] = vals[:, 0]
            offset[2 * fixed + 1] = vals[:, 1]
        free_v = np.setdiff1d(np.arange(mesh.n_vertices), fixed)
        free = np.sort(np.r_[2 * free_v, 2 * free_v + 1])
        P = sparse.csr_matrix((np.ones(len(free)), (free, np.arange(len(free)))), shape=(n, len(free)))
        return P, offset, False
    raise ConstraintError(f"unsupported constraint specification {constraints!r}")


def assemble(mesh: Mesh, coefficient, eps: float, constraints) -> SparseSystem:
    """Assemble the weak form with traction-free (natural) hole boundaries and eliminate constraints."""
    k = stiffness_matrix(mesh, coefficient, eps)
    P, offset, mean_zero = _constraint_map(mesh, constraints)
    kr = (P.T @ k @ P).tocsr()
    kr = 0.5 * (kr + kr.T)
    rhs = -(P.T @ (k @ offset))
    return SparseSystem(kr.tocsr(), np.asarray(rhs).ravel(), P.tocsr(), offset, mesh, k, mean_zero)


def solve(system: SparseSystem, tol: float = 1e-10, x0=None, maxiter=None) -> VectorField:
    """Jacobi-preconditioned conjugate gradients; ``x0`` is a full-length initial guess."""
    if not tol > 0:
        raise ParameterError("tol must be positive")
    n = system.n_dofs
    b = system.rhs
    if n == 0 or not np.any(b):
        x = np.zeros(n)
    else:
        diag = system.matrix.diagonal()
        if np.any(diag <= 0):
            raise NonConvergence("matrix has nonpositive diagonal entries")
        prec = spla.LinearOperator((n, n), matvec=lambda v: v / diag, dtype=float)
        cap = maxiter if maxiter is not None else int(math.ceil(50 * math.sqrt(n)))
        guess = None if x0 is None else system.restrict(np.asarray(x0).reshape(-1))
        x, info = spla.cg(system.matrix, b, x0=guess, rtol=tol, atol=0.0, maxiter=cap, M=prec)
        res = np.linalg.norm(system.matrix @ x - b) / np.linalg.norm(b)
        # cg can report success on breakdown; trust the true residual, allowing recurrence drift
        if res > tol and (info != 0 or res > 10 * tol):
            raise NonConvergence(f"CG did not reach tol={tol:g} within {cap} iterations (residual {res:.3g})")
    full = system.expand(x).reshape(-1, 2)
    if system.mean_zero:
        w = lumped_weights(system.mesh)
        full = full - (w @ full) / w.sum()
    return VectorField(system.mesh, full)


# ---------------------------------------------------------------- Korn constant

@dataclass(frozen=True)
class KornResult:
    constant: float
    iterations: int
    n_dofs: int


def korn_constant(mesh: Mesh, dirichlet_tags=(Tag.OuterDirichlet,), tol=1e-10, maxiter=5000) -> KornResult:
    """Discrete ``max ||w||_H1 / ||e(w)||_L2`` over P1 fields vanishing on the tagged edges.

    Inverse power iteration on the pencil (H1 Gram, symmetric-gradient Gram).
    """
    fixed = mesh.vertices_with_tag(*dirichlet_tags)
    if len(fixed) == 0:
        raise SingularPencil("no Dirichlet vertices: rigid motions have zero symmetric gradient")
    gram_h1 = mass_matrix(mesh) + stiffness_matrix(mesh, np.einsum("ij,ab->ijab", np.eye(2), np.eye(2)))
    gram_e = stiffness_matrix(mesh, make_isotropic(0.0, 0.5))
    P, _, _ = _constraint_map(mesh, DirichletOnGamma(None, tuple(dirichlet_tags)))
    a = (P.T @ gram_h1 @ P).tocsc()
    b = (P.T @ gram_e @ P).tocsc()
    n = a.shape[0]
    if n == 0:
        raise SingularPencil("constrained space is empty")
    lu = spla.splu(b)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n)
    rho_old = 0.0
    for it in range(1, maxiter + 1):
        y = lu.solve(a @ x)
        if not np.all(np.isfinite(y)):
            raise SingularPencil("symmetric-gradient Gram matrix is singular on the constrained space")
        ay = a @ y
        rho = float(y @ ay) / float(y @ (b @ y))
        x = y / math.sqrt(float(y @ ay))
        if abs(rho - rho_old) <= tol * abs(rho):
            break
        rho_old = rho
    else:
        raise NonConvergence(f"Korn power iteration did not converge in {maxiter} steps")
    return KornResult(math.sqrt(rho), it, n)
