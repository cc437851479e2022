"""Numerical checks of strip-wise energy balance between levels of the
Bernoulli function Q = |v|^2/2 + p for periodic incompressible flows."""

__version__ = "0.1.0"

from .bernoulli import (
    BernoulliBundle,
    compute_bundle,
    compute_pressure,
    lemma21_relative_residual,
    lemma21_residual,
    lemma21_terms,
    normalize_pressure,
)
from .dynamics import (
    FlowState,
    RHSResult,
    build_initial_state,
    enstrophy,
    init_abc_3d,
    init_random_solenoidal,
    init_taylor_green_2d,
    init_zero,
    integrate,
    kinetic_energy,
    ns_rhs,
    step_rk4,
)
from .errors import (
    CFLViolation,
    ConfigError,
    GridMismatch,
    InvalidStrip,
    LedgerError,
    MissingFullRange,
    NonZeroMeanRHS,
    UnresolvedField,
)
from .ledger import (
    ConvergenceReport,
    LedgerEntry,
    LedgerTable,
    assemble_entry,
    convergence_study,
    quantile_levels,
    sweep_levels,
    verify_global_limit,
    verify_sign_constraints,
)
from .levelset import (
    Isosurface,
    LevelStrip,
    RegularityReport,
    check_regularity,
    coarea_level_integral,
    extract_isosurface,
    flux_integral,
    strip_volume_integral,
    surface_integral,
)
from .spectral import (
    Grid,
    ScalarField,
    SpectralDiagnostics,
    VectorField,
    dealias,
    divergence,
    gradient,
    laplacian,
    leray_project,
    solve_poisson,
    spectral_diagnostics,
    vorticity_norm_sq,
)
