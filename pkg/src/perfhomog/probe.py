"""Scale-by-scale diagnostics of solutions on perforated balls.

All averages use the ``r^-2`` normalisation over ``B(x0, r)`` intersected with
the mesh (the solid part), so holes count as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from . import elasticity as el
from . import quadrature as quad
from .errors import GeometryError, ParameterError, RankDeficiency
from .geometry import CellGeometry, DomainSpec, mesh_perforated_domain


def _grad_sq(u: el.VectorField) -> np.ndarray:
    return np.sum(u.gradient() ** 2, axis=(1, 2))


def averaged_gradient(u: el.VectorField, x0, r: float, mesh=None) -> float:
    """``(r^-2 int_{B(x0,r)} |grad u|_F^2)^(1/2)``."""
    mesh = u.mesh if mesh is None else mesh
    return el.averaged_l2(np.sqrt(_grad_sq(u)), x0, r, mesh)


def sup_gradient(u: el.VectorField, x0, r: float, mesh=None) -> float:
    """Largest element gradient (Frobenius) over elements meeting ``B(x0, r)``."""
    mesh = u.mesh if mesh is None else mesh
    elem, _ = quad.clipped_areas(mesh, x0, r)
    if len(elem) == 0:
        return 0.0
    return float(np.sqrt(_grad_sq(u)[elem].max()))


def _rule_values(u: el.VectorField, rule: quad.ClippedRule) -> np.ndarray:
    return u.at(rule.elements, rule.bary)


# ---------------------------------------------------------------- Caccioppoli

@dataclass(frozen=True)
class CaccioppoliResult:
    lhs: float
    rhs: float
    ratio: float
    degenerate: bool = False  # rhs vanished; u is constant on the outer ball


def caccioppoli_check(u: el.VectorField, x0, r: float, mesh=None, guard: float = 1e-10) -> CaccioppoliResult:
    """Gradient average on ``B(r)`` against the oscillation average on ``B(2r)``."""
    mesh = u.mesh if mesh is None else mesh
    lhs = averaged_gradient(u, x0, r, mesh)
    rule = quad.clipped_rule(mesh, x0, 2 * r)
    if rule.measure <= 0:
        return CaccioppoliResult(lhs, 0.0, float("nan"), True)
    vals = _rule_values(u, rule)
    q = rule.weights @ vals / rule.measure
    osc = max(rule.integrate(np.sum((vals - q) ** 2, axis=1)), 0.0)
    rhs = math.sqrt(osc / (2 * r) ** 2) / r
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if rhs <= guard * scale / r:
        return CaccioppoliResult(lhs, rhs, float("nan"), True)
    return CaccioppoliResult(lhs, rhs, lhs / rhs, False)


# ---------------------------------------------------------------- excess

@dataclass(frozen=True)
class ExcessRecord:
    r: float
    H: float
    M: np.ndarray
    q: np.ndarray
    gradient_norm: float = 0.0  # size of the least-squares normal-equation residual

    @property
    def M_norm(self) -> float:
        return float(np.linalg.norm(self.M))


def _excess_from_samples(pts, wts, vals, x0, r, rcond=1e-12):
    x0 = np.asarray(x0, dtype=float)
    z = (pts - x0) / r  # scaled local coordinates keep the Gram matrix well conditioned
    phi = np.column_stack([z, np.ones(len(z))])
    gram = (phi * wts[:, None]).T @ phi
    rhs = (phi * wts[:, None]).T @ vals  # (3, 2)
    ev = np.linalg.eigvalsh(gram)
    if not ev[-1] > 0 or ev[0] <= rcond * ev[-1]:
        raise RankDeficiency("intersection too small or degenerate for an affine fit")
    coef = scipy.linalg.solve(gram, rhs, assume_a="pos")
    resid = vals - phi @ coef
    normal = np.abs((phi * wts[:, None]).T @ resid).max() / max(np.abs(rhs).max(), 1e-300)
    M = coef[:2].T / r
    q = coef[2] - M @ x0
    H = math.sqrt(max(float(wts @ np.sum(resid**2, axis=1)), 0.0) / r**2) / r
    return H, M, q, normal


def excess(w: el.VectorField, x0, r: float, eps: float | None = None, mesh=None) -> ExcessRecord:
    """``(1/r) min_{M,q} (r^-2 int_{B(x0,r)} |w - Mx - q|^2)^(1/2)`` and its minimisers."""
    mesh = w.mesh if mesh is None else mesh
    if not r > 0:
        raise ParameterError("radius must be positive")
    rule = quad.clipped_rule(mesh, x0, r)
    if len(rule.weights) < 3:
        raise RankDeficiency("ball does not meet the mesh")
    H, M, q, normal = _excess_from_samples(rule.points, rule.weights, _rule_values(w, rule), x0, r)
    return ExcessRecord(r, H, M, q, normal)


@dataclass(frozen=True)
class ExcessSeries:
    theta: float
    records: tuple
    factors: tuple  # H(theta r) / H(r) per step
    stall_radius: float  # largest r whose step factor exceeds ``stall``; nan if none


def excess_decay_series(u: el.VectorField, x0, theta: float, r_max: float, eps: float,
                        mesh=None, stall: float = 0.9) -> ExcessSeries:
    if not 0 < theta <= 0.25:
        raise ParameterError("theta must lie in (0, 1/4]")
    if not r_max >= eps:
        raise ParameterError("r_max must be at least eps")
    recs = []
    r = r_max
    while r >= eps * (1 - 1e-12):
        recs.append(excess(u, x0, r, eps, mesh))
        r *= theta
    factors = []
    for a, b in zip(recs, recs[1:]):
        factors.append(b.H / a.H if a.H > 0 else float("nan"))
    stalled = [a.r for a, f in zip(recs, factors) if np.isfinite(f) and f > stall]
    return ExcessSeries(theta, tuple(recs), tuple(factors), max(stalled) if stalled else float("nan"))


# ---------------------------------------------------------------- Lipschitz probe

@dataclass(frozen=True)
class ProbeReport:
    x0: tuple
    R: float
    eps: float
    radii: tuple
    averaged: tuple
    ratios: tuple
    sup_ratio: float
    caccioppoli: tuple = ()  # ratio per radius (nan when 2r exceeds R)
    excess_values: tuple = ()
    excess_series: ExcessSeries | None = None

    def to_rows(self):
        for i, r in enumerate(self.radii):
            cacc = self.caccioppoli[i] if self.caccioppoli else float("nan")
            H = self.excess_values[i] if self.excess_values else float("nan")
            yield (self.eps, self.x0[0], self.x0[1], r, self.averaged[i], self.ratios[i], H, cacc)


def probe_radii(eps: float, R: float, ratio: float = 2.0):
    if eps > R / 3 * (1 + 1e-12):
        raise GeometryError(f"eps={eps:g} exceeds R/3={R / 3:g}")
    radii = []
    r = eps
    while r < R / 3 * (1 - 1e-12):
        radii.append(r)
        r *= ratio
    radii.append(R / 3)
    return radii


def lipschitz_ratio(u: el.VectorField, x0, R: float, eps: float, mesh=None, theta: float = 0.25,
                    with_extras: bool = True) -> ProbeReport:
    """Gradient averages on a geometric radius grid in ``[eps, R/3]`` relative to ``B(x0, R)``."""
    mesh = u.mesh if mesh is None else mesh
    radii = probe_radii(eps, R)
    ref = averaged_gradient(u, x0, R, mesh)
    avgs = [averaged_gradient(u, x0, r, mesh) for r in radii]
    ratios = [a / ref if ref > 0 else (1.0 if a == 0 else float("inf")) for a in avgs]
    cacc, hs, series = (), (), None
    if with_extras:
        cacc = tuple(caccioppoli_check(u, x0, r, mesh).ratio if 2 * r <= R else float("nan") for r in radii)
        hs = tuple(excess(u, x0, r, eps, mesh).H for r in radii)
        series = excess_decay_series(u, x0, theta, R / 3, eps, mesh)
    return ProbeReport(tuple(np.asarray(x0, float)), R, eps, tuple(radii), tuple(avgs), tuple(ratios),
                       float(max(ratios)), cacc, hs, series)


def probe_solution(cell: CellGeometry, A, eps: float, R: float = 1.0, h: float | None = None,
                   f: Callable | None = None, x0=(0.0, 0.0), tol: float = 1e-10):
    """Solve on the perforated ball ``B(x0, R)`` with Dirichlet data on the outer circle only."""
    from .pipeline import solve_eps_problem

    if eps > R / 3:
        raise GeometryError(f"eps={eps:g} exceeds R/3={R / 3:g}")
    h = eps / 8 if h is None else h
    if f is None:
        M = np.array([[1.0, 0.3], [0.3, -0.5]])
        f = lambda x: np.asarray(x) @ M.T
    mesh = mesh_perforated_domain(DomainSpec.ball(x0, R), cell, eps, h)
    return mesh, solve_eps_problem(mesh, A, eps, f, tol)
