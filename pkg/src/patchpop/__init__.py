"""Age-structured population dynamics on dispersal-coupled patches.

Simulates the nonlinear multi-patch balance equations along characteristics,
solves the newborn renewal equation by monotone iteration, assembles the net
reproductive matrix and its spectral radius, classifies long-term dynamics
(extinction vs permanency), and extends the analysis to periodic and
irregularly varying environments.
"""

from .characteristics import (
    CohortState,
    Trajectory,
    check_comparison,
    check_majorant,
    solve_linearized,
    solve_phi,
    solve_psi,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    DegenerateEigenvalueError,
    DesignError,
    InvalidModelError,
    PatchPopError,
    PreconditionError,
    ReducibleMatrixError,
    StepSizeError,
    StructuralModelError,
)
from .model import (
    ConditionReport,
    DispersalMatrix,
    LogisticMortality,
    ModelSpec,
    MortalityLaw,
    PowerLawMortality,
    ValidationReport,
    accessibility,
    omega_constants,
    validate,
)
from .periodic import (
    BoundReport,
    EnvelopePair,
    PeriodicProfile,
    apply_Ktilde,
    assemble_periodic_R0,
    envelope_bounds,
    periodic_maximal_solution,
)
from .rates import (
    Constant,
    PeriodicModulation,
    PiecewiseLinear,
    RateFunction,
    SeparableProduct,
    Window,
)
from .renewal import (
    ConvolutionWitness,
    DensityField,
    NewbornPath,
    apply_F,
    apply_K,
    convolution_positivity_witness,
    iteration_certificate,
    reconstruct_density,
    solve_renewal,
    total_population,
)
from .scenarios import (
    PerturbationResult,
    TwoSinkDesign,
    certify_supercritical_interval,
    perturbed_sigma,
    two_sink_design,
)
from .spectral import (
    ReproMatrix,
    SigmaBounds,
    apply_R_lambda,
    assemble_R0,
    sigma_bounds,
    spectral_radius,
    theta_lower_bound,
    theta_upper_bound,
)
from .steady import (
    Classification,
    SteadyState,
    apply_Kbar,
    check_lower_solution,
    check_upper_solution,
    classify,
    maximal_solution,
)

__version__ = "0.1.0"
