"""safeembed: barrier states, safety-embedded systems, and safe feedback synthesis.

Safety constraints h(x) > 0 are wrapped in barrier operators and turned into
barrier states whose boundedness is equivalent to forward invariance of the
safe set; stabilizing the embedded system then stabilizes the plant safely.
The package provides the embedding construction, exact linearization,
pole-placement/LQR synthesis, closed-loop simulation with safety monitoring,
empirical input-to-state-safety checks, and an executable scenario registry
with a CLI.
"""

from .analysis import (
    IssfReport,
    IssfTrial,
    SafetyAudit,
    Trajectory,
    bas_consistency,
    bas_deviation_profile,
    issf_case_bound,
    issf_empirical,
    issf_rate_check,
    safety_audit,
    simulate_closed_loop,
)
from .embedding import (
    BarrierStateSpec,
    EmbeddedSystem,
    aggregate_constraints,
    bas_rhs,
    consistent_xbar0,
    consistent_z0,
    embed,
    input_embed,
)
from .linearize import LinearizedSystem, NonEquilibriumWarning, fd_linearize, linearize_embedded
from .model import (
    BarrierFunction,
    ControlSystem,
    DisturbanceSignal,
    LinearFeedback,
    SafetyConstraint,
    SafetyViolationError,
    disturbance_sample,
    make_barrier,
)
from .numkit import (
    IntegrationResult,
    NotHurwitzError,
    NumericsError,
    SingularMatrixError,
    StabilizationError,
    eigenvalues,
    jacobian_fd,
    lyapunov_kron_oracle,
    rk4_integrate,
    solve_care,
    solve_linear,
    solve_lyapunov,
)
from .scenarios import (
    SCENARIO_IDS,
    ScenarioResult,
    check_scenario,
    run_scenario,
    scenario_params,
)
from .synthesis import (
    PidbGains,
    UncontrollableError,
    ackermann,
    assemble_pidb,
    closed_loop_spectrum,
    lqr,
)

__version__ = "0.1.0"
