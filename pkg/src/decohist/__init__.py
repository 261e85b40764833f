"""Interval histories of a harmonically bound (or free) particle that drags
a pointer while it moves.

The package evaluates class operator matrix elements in closed form, builds
branch wavefunctions and the decoherence functional on grids, and carries
independent slow oracles (k-space quadrature, lattice path sums) used to
cross-check the closed forms.
"""

from .core import (
    CoarseGraining,
    Endpoints,
    GaussianState,
    KernelFactors,
    SharpState,
    SystemParams,
    containing_alpha,
    indicator,
    interval_edges,
    regime_report,
    window_E,
    window_partition_sum,
)
from .errors import (
    BudgetError,
    CausticError,
    DecohistError,
    DegenerateError,
    DomainError,
    GridError,
    KindError,
    OutOfRangeError,
    ParameterError,
    ValidationError,
)
from .histories import (
    BranchGrid,
    DecoherenceMatrix,
    GridSpec,
    branch_wavefunction,
    branch_wavefunctions,
    completeness_residual,
    decoherence_analysis,
    decoherence_matrix,
    decoherence_metric,
    evolve,
    moments,
    plan_branch_range,
    plan_grid,
)
from .oracle import (
    QuadratureReport,
    classop_k_quadrature,
    eom_residual,
    lattice_constrained_propagator,
    path_diagnostics,
)
from .specfun import cerf, fresnel_erf
from .sweep import SweepRow, SweepSpec, run_sweep

__version__ = "0.1.0"

__all__ = [
    "BranchGrid",
    "BudgetError",
    "CausticError",
    "CoarseGraining",
    "DecoherenceMatrix",
    "DecohistError",
    "DegenerateError",
    "DomainError",
    "Endpoints",
    "GaussianState",
    "GridError",
    "GridSpec",
    "KernelFactors",
    "KindError",
    "OutOfRangeError",
    "ParameterError",
    "QuadratureReport",
    "SharpState",
    "SweepRow",
    "SweepSpec",
    "SystemParams",
    "ValidationError",
    "branch_wavefunction",
    "branch_wavefunctions",
    "cerf",
    "classop_k_quadrature",
    "completeness_residual",
    "containing_alpha",
    "decoherence_analysis",
    "decoherence_matrix",
    "decoherence_metric",
    "eom_residual",
    "evolve",
    "fresnel_erf",
    "indicator",
    "interval_edges",
    "lattice_constrained_propagator",
    "moments",
    "path_diagnostics",
    "plan_branch_range",
    "plan_grid",
    "regime_report",
    "run_sweep",
    "window_E",
    "window_partition_sum",
]
