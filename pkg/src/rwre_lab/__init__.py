"""rwre-lab: transient zero-speed random walks in random environment.

Simulation and numerical analysis of the log-scale limit log X_n / log n ->
kappa: environment models, the large-deviation layer (Lambda, J, kappa,
speed), quenched walk simulation with hitting-time identities, the branching
process with immigration and its generating-function recursions, and a
deterministic experiment harness with a FastAPI service and CLI on top.
"""

from .env import (
    AdmissibilityError,
    EnvironmentModel,
    EnvironmentRealization,
    ModelError,
    make_constant,
    make_iid_discrete,
    make_iid_two_point,
    make_markov_finite,
    omega_at,
    rho_at,
)
from .spectrum import (
    RMomentEstimate,
    SpectrumReport,
    SpeedEstimate,
    empirical_log_rho_mean,
    kappa_root,
    kappa_via_rate,
    lambda_fn,
    r_moment,
    rate_function,
    spectrum_report,
    speed,
)
from .walk import (
    HittingRecord,
    WalkState,
    WalkSummary,
    default_step_cap,
    hitting_time,
    left_tail_mass,
    run_to_time,
    step,
    verify_identity,
)
from .branching import (
    BranchingPath,
    MeanProfile,
    b_direct,
    f_step,
    log_b,
    phi_product,
    psi_mc,
    quenched_mean_profile,
    simulate_z,
)
from .harness import (
    AuditReport,
    ExperimentConfig,
    ModelSpec,
    ScalingResult,
    emit,
    run_experiment,
    run_genfn_audit,
    run_hitting_exponent,
    run_walk_exponent,
    run_zsum_exponent,
)

__version__ = "0.1.0"
