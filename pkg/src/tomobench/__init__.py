"""tomobench: statistical benchmarking of quantum-tomography measurement setups."""

from .errors import (
    BoundaryStateError,
    DegenerateExperimentError,
    InvariantViolation,
    SupportViolationError,
    TomobenchError,
)
from .qstate import (
    BlochState,
    fidelity_loss,
    fidelity_sq,
    from_density,
    generator_basis,
    hs_distance_sq,
    hs_norm_sq,
    random_interior_state,
    to_density,
    trace_distance_sq,
)
from .tester import (
    Tester,
    fisher_matrix,
    informational_completeness,
    is_interior,
    load_tester,
    parameter_count,
    probabilities,
    save_tester,
    six_state_povm,
    z_projective_povm,
)
from .loss import (
    LossSpec,
    evaluate,
    finite_difference_hessian,
    hessian_sqrt,
    make_loss,
    same_point_hessian,
)
from .rates import (
    RateReport,
    g_matrix,
    kl_infimum_oracle,
    pseudo_inverse,
    rate_report,
    rayleigh_identity_check,
    scalar_functional_rate,
)
from .estimators import Estimate, Frequencies, linear_estimate, mle_estimate
from .montecarlo import (
    AveragePerformance,
    DecayRecord,
    ExperimentConfig,
    RiskTable,
    WorstCaseGrid,
    average_performance,
    error_probability_curve,
    figure2_sweep,
    risk_curve,
    run_experiment,
    sample_outcomes,
    worst_case_performance,
)

__version__ = "0.1.0"
