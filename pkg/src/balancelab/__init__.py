"""Random pairwise load balancing on the complete graph, instrumented for analysis."""

from .core import (
    DerivedQuantities,
    InvalidConfiguration,
    LoadVector,
    PairChoice,
    PairStream,
    RngStream,
    StepRecord,
    balance_pair,
    derived_quantities,
    round_average,
    sample_pair,
    step,
)
from .distributions import DistributionSpec, generate_initial
from .harness import (
    EnsembleResult,
    ScalingFit,
    coupling_experiment,
    fit_scaling,
    run_ensemble,
    selection_coverage_experiment,
)
from .metrics import (
    PhaseDetector,
    PhaseTimes,
    detect_phases,
    exact_expected_potential_after_step,
    gamma_fraction,
    overloaded_set,
    pairwise_square_sum_identity_check,
    potential,
    potential_drop,
)
from .simulation import ExperimentConfig, RunResult, run
from .tokens import (
    BalanceMode,
    InvalidTransfer,
    TokenLayout,
    apply_balanced_transfer,
    normalized_height,
    transfer_shuffle_stack,
    transfer_skip,
    transfer_stack,
)

__version__ = "0.1.0"
