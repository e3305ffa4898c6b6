"""Numerical homogenization of elasticity systems in periodically perforated domains."""

from .cell_problem import (
    CorrectorSet,
    EffectiveTensor,
    effective_tensor,
    homogenize,
    solve_all_correctors,
    solve_corrector,
    verify_effective,
)
from .elasticity import (
    CellPeriodicCoefficient,
    ConstantCoefficient,
    DirichletEverywhereOnOuter,
    DirichletOnGamma,
    PeriodicPlusMeanZero,
    SmoothCoefficient,
    VectorField,
    assemble,
    averaged_l2,
    check_elasticity_conditions,
    h1_norm,
    korn_constant,
    l2_norm,
    make_isotropic,
    solve,
    symmetric_gradient,
)
from .estimators import CellHomogenizer, TwoScaleApproximator
from .geometry import (
    CellGeometry,
    DomainSpec,
    HoleSpec,
    Mesh,
    Tag,
    indicator,
    mesh_domain,
    mesh_perforated_domain,
    mesh_unit_cell,
    read_mesh,
    validate_cell,
    write_mesh,
)
from .pipeline import (
    Mollifier,
    SweepConfig,
    convergence_sweep,
    cutoff,
    first_order_approx,
    h1_error,
    smooth,
    smoothing_property_checks,
    solve_eps_problem,
    solve_homogenized,
)
from .probe import (
    averaged_gradient,
    caccioppoli_check,
    excess,
    excess_decay_series,
    lipschitz_ratio,
    probe_solution,
    sup_gradient,
)

__version__ = "0.1.0"
