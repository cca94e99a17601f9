"""viscophase: structured-grid simulator and diagnostics for a
cross-diffusively coupled phase-separation / bulk-stress / flow model."""

from .errors import (
    BlowUpError, ConfigError, DegenerateMobilityError, GridMismatchError,
    InvalidDeltaError, PotentialDomainError, QuadratureResolutionError,
    SolverError,
)
from .material import (
    Potential, Entropy, MaterialModel, double_well, flory_huggins_split,
    regularize_potential, regularize_mobility, entropy_from_mobility,
    regular_model, degenerate_model, check_assumptions, eval_potential,
)
from .fields import (
    Grid, ScalarField, VectorField, gradient, divergence, laplacian,
    integrate, l2_norm, solve_poisson, project_divergence_free,
)
from .dynamics import (
    State, SimConfig, Trajectory, chemical_potential, flux_phi,
    step_phi_q, step_velocity, simulate, build_grid, build_material,
    initial_state, dt_max,
)
from .diagnostics import (
    EnergyBreakdown, EnergyInequalityReport, RelativeEnergyReport,
    GronwallFit, BoundsReport, CheckRecord, energy, check_energy_inequality,
    relative_energy, gronwall_fit, bounds_report, write_report,
)
from .galerkin import (
    CosineBasis, GalerkinState, project, assemble_rhs, integrate_galerkin,
    energy_galerkin, convergence_study,
)
from .snapshots import write_snapshot, read_snapshot, write_state

__version__ = "0.1.0"
