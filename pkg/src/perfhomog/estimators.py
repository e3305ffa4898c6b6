"""Estimator-style wrappers (``fit`` / ``transform`` / ``predict``) over the solver modules."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import cell_problem as cp
from . import elasticity as el
from . import pipeline as pl
from .geometry import DomainSpec, mesh_domain, mesh_perforated_domain, mesh_unit_cell
from .validation import check_cell, check_points, check_strains


class CellHomogenizer(TransformerMixin, BaseEstimator):
    """Fit correctors on a perforated unit cell; ``transform`` maps strains to effective stresses.

    ``fit`` takes a ``CellGeometry`` or an ``(n_holes, 3)`` array ``[cx, cy, radius]``.
    """

    def __init__(self, lam=1.0, mu=1.0, h=0.05, tol=1e-12):
        self.lam = lam
        self.mu = mu
        self.h = h
        self.tol = tol

    def fit(self, X, y=None):
        cell = check_cell(X)
        self.tensor_ = el.make_isotropic(self.lam, self.mu)
        self.cell_ = cell
        self.cell_mesh_ = mesh_unit_cell(cell, self.h)
        self.correctors_, self.effective_tensor_ = cp.homogenize(self.cell_mesh_, self.tensor_, self.tol)
        self.report_ = cp.verify_effective(self.effective_tensor_, reference=self.tensor_)
        return self

    def transform(self, X):
        """Stresses ``sigma^{i alpha} = a_hat_ij^{alpha beta} xi^beta_j`` as ``(n, 4)`` rows."""
        check_is_fitted(self, "effective_tensor_")
        xi = check_strains(X)  # xi[n, beta, j]
        sig = np.einsum("ijab,nbj->nai", self.effective_tensor_.tensor, xi)
        return sig.reshape(len(xi), 4)

    def energy(self, X):
        """Effective energy density ``a_hat xi : xi`` per strain."""
        xi = check_strains(X)
        return np.einsum("nai,nai->n", self.transform(xi).reshape(-1, 2, 2), xi)


class TwoScaleApproximator(BaseEstimator):
    """Solve the perforated and homogenized problems for affine data ``M x`` on the unit square.

    ``predict`` evaluates the smoothed two-scale expansion at points.
    """

    def __init__(self, eps=0.125, lam=1.0, mu=1.0, hole_radius=0.25, h_over_eps=1 / 16,
                 tol=1e-10, grid_ratio=8):
        self.eps = eps
        self.lam = lam
        self.mu = mu
        self.hole_radius = hole_radius
        self.h_over_eps = h_over_eps
        self.tol = tol
        self.grid_ratio = grid_ratio

    def fit(self, X, y=None):
        """``X`` is the 2x2 boundary-data matrix ``M``."""
        M = np.asarray(X, dtype=float).reshape(2, 2)
        self.M_ = M
        f = lambda x: np.asarray(x) @ M.T
        homog = CellHomogenizer(self.lam, self.mu, self.h_over_eps, 1e-12).fit(
            np.array([[0.0, 0.0, self.hole_radius]]))
        self.homogenizer_ = homog
        domain = DomainSpec.unit_square()
        h = self.h_over_eps * self.eps
        self.mesh_ = mesh_perforated_domain(domain, homog.cell_, self.eps, h)
        self.u_eps_ = pl.solve_eps_problem(self.mesh_, homog.tensor_, self.eps, f, self.tol)
        self.u0_ = pl.solve_homogenized(mesh_domain(domain, h), homog.effective_tensor_, f, self.tol)
        self.approximation_ = pl.first_order_approx(self.u0_, homog.correctors_, self.eps, None, domain,
                                                    self.grid_ratio, self.mesh_.cell_shift)
        self.error_ = pl.h1_error(self.u_eps_, self.approximation_, self.mesh_)
        return self

    def predict(self, X):
        check_is_fitted(self, "approximation_")
        return self.approximation_.value(check_points(X))

    def score(self, X=None, y=None):
        """Negative H1 error of the expansion against the perforated solution."""
        check_is_fitted(self, "error_")
        return -self.error_
