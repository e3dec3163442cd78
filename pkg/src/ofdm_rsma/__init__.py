"""Rate-splitting MIMO-OFDM over doubly-dispersive channels.

Channel synthesis with inter-carrier interference, a cluster-based hybrid SIC
receiver model, swarm-searched analog precoding, WMMSE digital precoding, and
a seeded Monte-Carlo harness for scheme comparisons.
"""

__version__ = "0.1.0"

from .channel import (
    ChannelRealization,
    ConfigurationError,
    FreqChannel,
    PathParams,
    SystemConfig,
    build_cp_matrices,
    build_dft_matrix,
    delay_matrix,
    doppler_matrix,
    freq_channel,
    freq_equiv_channel,
    raised_cosine,
    sample_channel,
    time_domain_channel,
)
from .rsma import (
    ClusterPlan,
    EffectiveCoefficients,
    HybridPrecoder,
    InfeasibleRateError,
    RateReport,
    allocate_common_rate,
    common_power_terms,
    common_rate_feasible,
    effective_coeffs,
    make_cluster_plan,
    private_power_terms,
    rate_report,
    sic_cancellation_sweep,
    sic_complexity,
)
from .pso import PsoConfig, PsoResult, PsoState, boundary_compress, fitness, pso_step, run_abc_pso
from .qcqp import AWMSE_RATE_OFFSET, QcqpSolution, SolverError
from .wmmse import (
    WmmseResult,
    WmmseState,
    awmse,
    mmse_equalizers,
    mse_values,
    optimal_weights,
    optimize_hybrid,
    run_wmmse,
    solve_qcqp,
    state_from_coeffs,
)
from .baselines import Scheme, noma_decode_order, noma_rate_report, sdma_rate_report
from .harness import (
    ExperimentSpec,
    ExperimentResult,
    TrialResult,
    emit_outputs,
    run_experiment,
    snr_to_noise,
)
