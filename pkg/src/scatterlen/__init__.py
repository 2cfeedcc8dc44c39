"""Scattering length of nonnegative potentials for symmetric alpha-stable
processes: deterministic Riesz-kernel fixed point, Monte Carlo Feynman-Kac,
and eigenvalue bounds for the regional fractional Laplacian on a box."""

from .grids import (
    BallIndicator,
    BoxIndicator,
    Gaussian,
    GridSpec,
    Potential,
    ScalarField,
    Scaled,
    Sum,
    build_grid,
    embed_potential,
    eval_potential,
    integrate,
    restrict_field,
    scale_potential,
)
from .riesz import (
    KernelMatrix,
    apply_riesz,
    assemble_riesz,
    laplacian_constant,
    load_kernel,
    riesz_constant,
    save_kernel,
)
from .capacitory import (
    CapacitoryResult,
    SolverOptions,
    capacity_sweep,
    consistency_check,
    epsilon_expansion,
    equilibrium_capacity,
    scaling_check,
    scattering_length,
    solve_capacitory,
)
from .spectral import (
    BoundReport,
    FormMatrix,
    SpectralResult,
    assemble_neumann_form,
    box_integral_constant,
    eigen_bound_report,
    full_space_energy,
    rayleigh_quotient,
    schrodinger_lowest,
)
from .mc import (
    FoldSpec,
    McConfig,
    PathBatch,
    empirical_cf,
    feynman_kac,
    fold_point,
    folded_comparison,
    mc_scattering,
    moment_decay,
    sample_positive_stable,
    sample_stable_increment,
    simulate_path,
)

__version__ = "0.1.0"
