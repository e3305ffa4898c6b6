"""Two-scale approximation of perforated elasticity problems and the rate sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from . import elasticity as el
from . import quadrature as quad
from .cell_problem import CorrectorSet, EffectiveTensor, homogenize
from .errors import GridTooCoarse, ParameterError
from .geometry import (
    CellGeometry,
    DomainSpec,
    Mesh,
    indicator,
    mesh_domain,
    mesh_perforated_domain,
    mesh_unit_cell,
)

# interior three-point rule, exact for quadratics; avoids evaluating element
# gradients on edges where they are two-valued
_INTERIOR_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


# ---------------------------------------------------------------- mollifier and grids

@dataclass(frozen=True)
class Mollifier:
    """Radial bump ``c (1 - |x|^2)^power`` on the unit disk."""

    power: int = 4

    def profile(self, x) -> np.ndarray:
        s = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
        return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** self.power, 0.0)

    def stencil(self, eps: float, dx: float) -> np.ndarray:
        """Discrete kernel weights ``zeta_eps(y) dy`` on the grid, summing to one."""
        n = int(math.floor(eps / dx))
        k = np.arange(-n, n + 1) * dx / eps
        yy = np.stack(np.meshgrid(k, k, indexing="ij"), axis=-1)
        w = self.profile(yy)
        total = w.sum()
        if not total > 0:
            raise GridTooCoarse("mollifier stencil is empty")
        return w / total


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples on a uniform grid ``origin + spacing * (i, j)``; values shaped ``(nx, ny, ...)``."""

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape[:2]

    def axes(self):
        nx, ny = self.shape
        return (self.origin[0] + self.spacing * np.arange(nx),
                self.origin[1] + self.spacing * np.arange(ny))

    def points(self) -> np.ndarray:
        ax, ay = self.axes()
        return np.stack(np.meshgrid(ax, ay, indexing="ij"), axis=-1)

    def with_values(self, values) -> "GridField":
        return GridField(self.origin, self.spacing, values)

    def gradient(self) -> "GridField":
        """Central differences; trailing axis gets the derivative direction."""
        gx, gy = np.gradient(self.values, self.spacing, axis=(0, 1))
        return self.with_values(np.stack([gx, gy], axis=-1))

    def sample(self, points) -> np.ndarray:
        ax, ay = self.axes()
        interp = RegularGridInterpolator((ax, ay), self.values, method="linear",
                                         bounds_error=False, fill_value=0.0)
        return interp(np.asarray(points, dtype=float).reshape(-1, 2))

    def l2_norm(self) -> float:
        return float(math.sqrt(np.sum(self.values**2) * self.spacing**2))


def background_grid(domain: DomainSpec, eps: float, ratio: int = 8) -> GridField:
    """Grid of spacing ``eps / ratio`` covering the bounding box of ``domain``."""
    if ratio < 8:
        raise GridTooCoarse(f"background grid spacing must be at most eps/8 (got eps/{ratio})")
    dx = eps / ratio
    lo, hi = domain.bbox
    n = np.ceil((np.asarray(hi) - np.asarray(lo)) / dx - 1e-9).astype(int) + 1
    return GridField(np.asarray(lo, dtype=float), dx, np.zeros((n[0], n[1])))


def smooth(g: GridField, eps: float, mollifier: Mollifier | None = None, periodic=False) -> GridField:
    """Discrete ``K_eps g``; ``g`` is extended by zero (or periodically when ``periodic``)."""
    mollifier = mollifier or Mollifier()
    if g.spacing > eps / 8 * (1 + 1e-12):
        raise GridTooCoarse(f"grid spacing {g.spacing:g} exceeds eps/8 = {eps / 8:g}")
    w = mollifier.stencil(eps, g.spacing)
    vals = np.asarray(g.values, dtype=float)
    flat = vals.reshape(vals.shape[:2] + (-1,))
    mode = "wrap" if periodic else "constant"
    out = np.stack([ndimage.convolve(flat[..., c], w, mode=mode, cval=0.0)
                    for c in range(flat.shape[-1])], axis=-1)
    return g.with_values(out.reshape(vals.shape))


# ---------------------------------------------------------------- cutoff

@dataclass(frozen=True)
class CutoffSpec:
    """``eta = clip((delta - 3 eps) / eps, 0, 1)`` with ``delta`` the distance to the boundary."""

    domain: DomainSpec
    eps: float

    def __call__(self, x) -> np.ndarray:
        d = self.domain.distance_to_boundary(np.asarray(x, dtype=float))
        return np.clip((d - 3 * self.eps) / self.eps, 0.0, 1.0)

    @property
    def gradient_bound(self) -> float:
        return 1.0 / self.eps


def cutoff(domain: DomainSpec, eps: float) -> CutoffSpec:
    if not eps > 0:
        raise ParameterError("eps must be positive")
    return CutoffSpec(domain, eps)


# ---------------------------------------------------------------- solves

def _interpolated_guess(mesh, f):
    return np.asarray(f(mesh.vertices), dtype=float).reshape(-1)


def solve_eps_problem(mesh: Mesh, A, eps: float, f: Callable, tol: float = 1e-10) -> el.VectorField:
    """Dirichlet data ``f`` on the outer boundary, traction-free holes."""
    system = el.assemble(mesh, A, eps, el.DirichletOnGamma(f))
    return el.solve(system, tol, x0=_interpolated_guess(mesh, f))


def solve_homogenized(mesh: Mesh, that, f: Callable, tol: float = 1e-10) -> el.VectorField:
    t = that.tensor if isinstance(that, EffectiveTensor) else np.asarray(that)
    system = el.assemble(mesh, el.ConstantCoefficient(t), 1.0, el.DirichletOnGamma(f))
    return el.solve(system, tol, x0=_interpolated_guess(mesh, f))


# ---------------------------------------------------------------- two-scale approximation

class _P1Evaluator:
    """Values and gradients of a P1 field at arbitrary points."""

    def __init__(self, u: el.VectorField):
        self.u = u
        self.locator = quad.locator_for(u.mesh, tol=0.5 * float(np.max(u.mesh.diameters)))
        self._grad = u.gradient()

    def locate(self, x):
        return self.locator.locate(x)

    def eval(self, x):
        e, b = self.locator.locate(x)
        return self.u.at(e, b), self._grad[e]


@dataclass(eq=False)
class TwoScaleField:
    """``v = u0 + eps chi(x/eps) G`` with ``G = K_eps^2(eta grad u0)``."""

    u0: el.VectorField
    correctors: CorrectorSet
    eps: float
    G: GridField  # values (nx, ny, 2[beta], 2[j])
    cell_shift: np.ndarray

    def __post_init__(self):
        self._u0 = _P1Evaluator(self.u0)
        self._chi_vals = self.correctors.values()  # (nv, gamma, j, beta)
        self._chi_grads = self.correctors.gradients()  # (m, gamma, k, j, beta)
        self._cell_loc = quad.locator_for(self.correctors.mesh,
                                          tol=0.5 * float(np.max(self.correctors.mesh.diameters)))
        self._dG = self.G.gradient()

    def cell_coordinates(self, x):
        y = np.asarray(x, dtype=float) / self.eps - self.cell_shift
        return y - np.round(y)

    def _chi(self, x):
        e, b = self._cell_loc.locate(self.cell_coordinates(x))
        tri = self.correctors.mesh.triangles[e]
        vals = np.einsum("na,nagjb->ngjb", b, self._chi_vals[tri])
        return vals, self._chi_grads[e]

    def corrector_term(self, x, with_gradient=True):
        """``eps chi(x/eps) G(x)`` and its gradient ``(n, 2, 2)``."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        G = self.G.sample(x)  # (n, beta, j)
        chi, dchi = self._chi(x)
        val = self.eps * np.einsum("ngjb,nbj->ng", chi, G)
        if not with_gradient:
            return val
        dG = self._dG.sample(x)  # (n, beta, j, i)
        grad = (np.einsum("ngijb,nbj->ngi", dchi, G)
                + self.eps * np.einsum("ngjb,nbji->ngi", chi, dG))
        return val, grad

    def value(self, x):
        u0, _ = self._u0.eval(x)
        return u0 + self.corrector_term(x, with_gradient=False)

    def gradient(self, x):
        _, g0 = self._u0.eval(x)
        return g0 + self.corrector_term(x)[1]

    def evaluate(self, x):
        u0, g0 = self._u0.eval(x)
        c, gc = self.corrector_term(x)
        return u0 + c, g0 + gc


def smoothed_gradient(u0: el.VectorField, eps: float, domain: DomainSpec,
                      mollifier: Mollifier | None = None, ratio: int = 8) -> GridField:
    """``K_eps(K_eps(eta grad u0))`` on the background grid, shaped ``(nx, ny, 2, 2)``."""
    grid = background_grid(domain, eps, ratio)
    pts = grid.points().reshape(-1, 2)
    eta = cutoff(domain, eps)(pts)
    g = np.zeros((len(pts), 2, 2))
    live = eta > 0
    if np.any(live):
        loc = quad.locator_for(u0.mesh, tol=0.5 * float(np.max(u0.mesh.diameters)))
        e, _ = loc.locate(pts[live])
        g[live] = u0.gradient()[e] * eta[live, None, None]
    base = grid.with_values(g.reshape(grid.shape + (2, 2)))
    return smooth(smooth(base, eps, mollifier), eps, mollifier)


def first_order_approx(u0: el.VectorField, correctors: CorrectorSet, eps: float,
                       mollifier: Mollifier | None, domain: DomainSpec, ratio: int = 8,
                       cell_shift=None) -> TwoScaleField:
    from .geometry import LATTICE_SHIFT

    G = smoothed_gradient(u0, eps, domain, mollifier, ratio)
    shift = LATTICE_SHIFT if cell_shift is None else np.asarray(cell_shift, dtype=float)
    return TwoScaleField(u0, correctors, eps, G, shift)


def interior_rule(mesh: Mesh):
    m = mesh.n_triangles
    tri = mesh.vertices[mesh.triangles]
    pts = np.einsum("qa,mak->mqk", _INTERIOR_BARY, tri).reshape(-1, 2)
    wts = np.repeat(np.abs(mesh.areas) / 3.0, 3)
    return pts, wts, np.repeat(np.arange(m), 3), np.tile(_INTERIOR_BARY, (m, 1))


def _field_at_rule(u, rule, mesh):
    """Values and gradients of ``u`` (VectorField on ``mesh`` or a TwoScaleField) at rule points."""
    pts, _, elem, bary = rule
    if isinstance(u, el.VectorField) and u.mesh is mesh:
        return u.at(elem, bary), u.gradient()[elem]
    if isinstance(u, el.VectorField):
        return _P1Evaluator(u).eval(pts)
    return u.evaluate(pts)


def h1_error(u_eps, v, mesh: Mesh, chunk: int = 400_000) -> float:
    """``||u_eps - v||_{H1}`` over ``mesh`` with an interior three-point rule."""
    pts, wts, elem, bary = interior_rule(mesh)
    total = 0.0
    for s in range(0, len(pts), chunk):
        sl = slice(s, s + chunk)
        r = (pts[sl], wts[sl], elem[sl], bary[sl])
        a, ga = _field_at_rule(u_eps, r, mesh)
        b, gb = _field_at_rule(v, r, mesh)
        total += float(np.dot(wts[sl], np.sum((a - b) ** 2, axis=1) + np.sum((ga - gb) ** 2, axis=(1, 2))))
    return math.sqrt(total)


def corrector_term_norm(v: TwoScaleField, mesh: Mesh, chunk: int = 400_000) -> float:
    pts, wts, _, _ = interior_rule(mesh)
    total = 0.0
    for s in range(0, len(pts), chunk):
        c, gc = v.corrector_term(pts[s:s + chunk])
        total += float(np.dot(wts[s:s + chunk], np.sum(c**2, axis=1) + np.sum(gc**2, axis=(1, 2))))
    return math.sqrt(total)


def trace_norm(mesh: Mesh, f: Callable, tags=None) -> float:
    """Discrete ``||f||_{H1(boundary)}`` from the P1 interpolant on outer boundary edges."""
    edges = mesh.boundary_edges if tags is None else mesh.boundary_edges[np.isin(mesh.edge_tags, list(tags))]
    fv = np.asarray(f(mesh.vertices), dtype=float).reshape(-1, 2)
    a, b = fv[edges[:, 0]], fv[edges[:, 1]]
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    l2 = np.sum(length[:, None] / 3 * (a * a + a * b + b * b))
    tang = np.sum(np.sum((b - a) ** 2, axis=1) / length)
    return float(math.sqrt(l2 + tang))


# ---------------------------------------------------------------- reports and sweep

@dataclass(frozen=True)
class ApproximationReport:
    eps: float
    h: float
    h1_error: float
    h1_norm_u: float
    relative_error: float
    trace_norm: float
    u_minus_u0: float = float("nan")
    corrector_norm: float = float("nan")
    n_vertices: int = 0


@dataclass
class SweepRecord:
    reports: list
    slope: float
    intercept: float
    status: str  # "ok", "degenerate" or "undefined"
    slope_running: list = field(default_factory=list)

    @property
    def epsilons(self):
        return [r.eps for r in self.reports]

    @property
    def errors(self):
        return [r.h1_error for r in self.reports]

    def strictly_decreasing(self) -> bool:
        e = self.errors
        return all(b < a for a, b in zip(e, e[1:]))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epsilon,h,h1_error,h1_norm_u,relative_error,slope_running\n")
            for r, s in zip(self.reports, self.slope_running):
                fh.write(f"{r.eps:.17g},{r.h:.17g},{r.h1_error:.17g},{r.h1_norm_u:.17g},"
                         f"{r.relative_error:.17g},{_fmt(s)}\n")


def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else f"{x:.17g}"


def fit_slope(eps, errors):
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(eps) < 2 or np.any(errors <= 0):
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(eps), np.log(errors), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class SweepConfig:
    cell: CellGeometry
    A: object
    epsilons: Sequence[float] = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
    h_over_eps: float = 1 / 16
    M: np.ndarray | None = None
    f: Callable | None = None
    domain: DomainSpec = field(default_factory=DomainSpec.unit_square)
    tol: float = 1e-10
    cell_tol: float = 1e-12
    grid_ratio: int = 8
    h0: float | None = None  # homogenized mesh size; defaults to the finest eps-mesh size
    degenerate_floor: float = 1e-8

    def boundary_data(self) -> Callable:
        if self.f is not None:
            return self.f
        M = np.asarray(self.M if self.M is not None else [[1.0, 0.3], [0.3, -0.5]], dtype=float)
        return lambda x: np.asarray(x) @ M.T


def run_single(cfg: SweepConfig, eps: float, correctors: CorrectorSet, that: EffectiveTensor,
               u0: el.VectorField, mollifier: Mollifier | None = None) -> ApproximationReport:
    f = cfg.boundary_data()
    h = cfg.h_over_eps * eps
    mesh = mesh_perforated_domain(cfg.domain, cfg.cell, eps, h)
    u_eps = solve_eps_problem(mesh, cfg.A, eps, f, cfg.tol)
    v = first_order_approx(u0, correctors, eps, mollifier, cfg.domain, cfg.grid_ratio, mesh.cell_shift)
    err = h1_error(u_eps, v, mesh)
    norm_u = el.h1_norm(u_eps)
    return ApproximationReport(
        eps=eps, h=h, h1_error=err, h1_norm_u=norm_u,
        relative_error=err / norm_u if norm_u > 0 else float("nan"),
        trace_norm=trace_norm(mesh, f, tags=(1,)),
        u_minus_u0=h1_error(u_eps, u0, mesh),
        corrector_norm=corrector_term_norm(v, mesh),
        n_vertices=mesh.n_vertices,
    )


def convergence_sweep(cfg: SweepConfig, mollifier: Mollifier | None = None,
                      progress: Callable | None = None) -> SweepRecord:
    eps_list = [float(e) for e in cfg.epsilons]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("epsilons must be strictly decreasing")
    # the cell mesh size h/eps is the same for every eps, so correctors are shared
    cell_mesh = mesh_unit_cell(cfg.cell, cfg.h_over_eps)
    correctors, that = homogenize(cell_mesh, cfg.A, cfg.cell_tol)
    h0 = cfg.h0 if cfg.h0 is not None else cfg.h_over_eps * min(eps_list)
    u0 = solve_homogenized(mesh_domain(cfg.domain, h0), that, cfg.boundary_data(), cfg.tol)
    reports = []
    for eps in eps_list:
        reports.append(run_single(cfg, eps, correctors, that, u0, mollifier))
        if progress:
            progress(reports[-1])
    errors = [r.h1_error for r in reports]
    running = [float("nan")] + [fit_slope(eps_list[:k + 1], errors[:k + 1])[0] for k in range(1, len(reports))]
    floor = cfg.degenerate_floor * max(max(r.h1_norm_u for r in reports), 1e-300)
    if all(e <= floor for e in errors):
        return SweepRecord(reports, float("nan"), float("nan"), "degenerate", running)
    if len(reports) < 2:
        return SweepRecord(reports, float("nan"), float("nan"), "undefined", running)
    slope, intercept = fit_slope(eps_list, errors)
    return SweepRecord(reports, slope, intercept, "ok", running)


# ---------------------------------------------------------------- smoothing checks

@dataclass(frozen=True)
class SmoothingReport:
    epsilons: tuple
    resonant: tuple  # ||g - K g|| / (eps ||grad g||), g = sin(2 pi x1/eps) cos(2 pi x2)
    smooth_mode: tuple  # same ratio for g = sin(2 pi x1)
    weighted: tuple  # max over random g of ||h^eps K g|| / (||h||_Q ||g||)
    kernel_bound: tuple  # max over random g of ||K g|| / ||g||

    @staticmethod
    def variation(values) -> float:
        v = np.asarray(values, dtype=float)
        return float(v.max() / v.min() - 1.0) if v.min() > 0 else float("inf")


def _torus_grid(eps, ratio):
    n = int(round(ratio / eps))
    if abs(n * eps / ratio - 1.0) > 1e-9:
        raise ParameterError("torus checks need eps/ratio to divide 1")
    return GridField(np.zeros(2), 1.0 / n, np.zeros((n, n)))


def smoothing_error_constant(func, grad_norm_sq, eps, mollifier=None, ratio=8) -> float:
    """``||g - K_eps g||_L2 / (eps ||grad g||_L2)`` on the unit torus."""
    grid = _torus_grid(eps, ratio)
    pts = grid.points()
    g = grid.with_values(func(pts))
    kg = smooth(g, eps, mollifier, periodic=True)
    num = g.with_values(g.values - kg.values).l2_norm()
    den = eps * math.sqrt(np.sum(grad_norm_sq(pts)) * grid.spacing**2)
    return num / den


def periodic_grid_sample(cell_values: Callable, grid: GridField, eps: float) -> np.ndarray:
    y = grid.points() / eps
    return cell_values((y - np.round(y)).reshape(-1, 2)).reshape(grid.shape)


def corrector_gradient_magnitude(correctors: CorrectorSet, cell: CellGeometry) -> Callable:
    """``y -> |grad chi(y)|_F`` over all four correctors, zero inside holes."""
    mesh = correctors.mesh
    mag = np.sqrt(np.sum(correctors.gradients() ** 2, axis=(1, 2, 3, 4)))
    loc = quad.locator_for(mesh, tol=0.5 * float(np.max(mesh.diameters)))

    def h(y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        out = np.zeros(len(y))
        solid = np.asarray(indicator(cell, y), dtype=bool)
        if np.any(solid):
            e, _ = loc.locate(y[solid])
            out[solid] = mag[e]
        return out

    h.l2_cell = float(math.sqrt(np.sum(mesh.areas * mag**2)))
    return h


def weighted_smoothing_constant(h: Callable, h_l2: float, eps: float, g_values, mollifier=None, ratio=8) -> float:
    grid = _torus_grid(eps, ratio)
    g = grid.with_values(np.asarray(g_values, dtype=float))
    kg = smooth(g, eps, mollifier, periodic=True)
    hv = periodic_grid_sample(h, grid, eps)
    lhs = grid.with_values(hv * kg.values).l2_norm()
    den = h_l2 * g.l2_norm()
    return lhs / den if den > 0 else 0.0


def smoothing_property_checks(mollifier: Mollifier | None = None, epsilons=(1 / 8, 1 / 16, 1 / 32),
                              h: Callable | None = None, h_l2: float | None = None,
                              n_random: int = 5, seed: int = 0, ratio: int = 8) -> SmoothingReport:
    """Measure the smoothing constants; ``h`` defaults to the constant 1."""
    if h is None:
        h = lambda y: np.ones(len(y))
        h_l2 = 1.0
    rng = np.random.default_rng(seed)
    res_err, smooth_err, weighted, kb = [], [], [], []
    for eps in epsilons:
        k = 2 * np.pi / eps
        res_err.append(smoothing_error_constant(
            lambda p: np.sin(k * p[..., 0]) * np.cos(2 * np.pi * p[..., 1]),
            lambda p: (k * np.cos(k * p[..., 0]) * np.cos(2 * np.pi * p[..., 1])) ** 2
            + (2 * np.pi * np.sin(k * p[..., 0]) * np.sin(2 * np.pi * p[..., 1])) ** 2,
            eps, mollifier, ratio))
        smooth_err.append(smoothing_error_constant(
            lambda p: np.sin(2 * np.pi * p[..., 0]),
            lambda p: (2 * np.pi * np.cos(2 * np.pi * p[..., 0])) ** 2,
            eps, mollifier, ratio))
        grid = _torus_grid(eps, ratio)
        cw, ck = [], []
        for _ in range(n_random):
            gv = rng.standard_normal(grid.shape)
            cw.append(weighted_smoothing_constant(h, h_l2, eps, gv, mollifier, ratio))
            g = grid.with_values(gv)
            ck.append(smooth(g, eps, mollifier, periodic=True).l2_norm() / g.l2_norm())
        weighted.append(max(cw))
        kb.append(max(ck))
    return SmoothingReport(tuple(epsilons), tuple(res_err), tuple(smooth_err), tuple(weighted), tuple(kb))
