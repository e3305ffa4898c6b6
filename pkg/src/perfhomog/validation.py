"""Input checks for the estimator layer, built on ``sklearn.utils.check_array``."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .errors import ParameterError
from .geometry import CellGeometry, HoleSpec


def check_tensor4(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2, 2, 2):
        raise ParameterError(f"expected a (2,2,2,2) tensor, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ParameterError("tensor has non-finite entries")
    return a


def check_points(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ParameterError(f"points must have 2 columns, got {X.shape[1]}")
    return X


def check_strains(X) -> np.ndarray:
    """Accept ``(n, 2, 2)`` matrices or ``(n, 4)`` rows ``[e11, e12, e21, e22]``; return ``(n, 2, 2)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 3 and X.shape[1:] == (2, 2):
        X = X.reshape(len(X), 4)
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != 4:
        raise ParameterError("strains must be (n, 2, 2) or (n, 4)")
    return X.reshape(-1, 2, 2)


def check_cell(X) -> CellGeometry:
    """A ``CellGeometry`` or an ``(n_holes, 3)`` array of ``[cx, cy, radius]`` rows."""
    if isinstance(X, CellGeometry):
        return X
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return CellGeometry(())
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != 3:
        raise ParameterError("hole array must have columns [cx, cy, radius]")
    return CellGeometry(tuple(HoleSpec((float(cx), float(cy)), float(r)) for cx, cy, r in X))
