"""Transferable-utility stable matching for two-sided markets via batch and mini-batch IPFP."""

from .evaluation import (
    ComparisonConfig,
    PolicyKind,
    RankingTable,
    WelfareReport,
    build_rankings,
    cross_ratio,
    examination,
    expected_matches,
    run_comparison,
    score_policy,
)
from .ipfp import (
    IpfpDiagnostics,
    NonFiniteKernelError,
    constraint_residual,
    ipfp_u_update,
    reconstruct_mu,
    solve_batch,
    solve_minibatch,
    stability_residual,
)
from .market import (
    DenseMu,
    DensePreferences,
    FactorizedMu,
    FactorizedPreferences,
    MarketShape,
    MassSpec,
    ScalingState,
    SolverConfig,
    ValidationReport,
    joint_utility,
    uniform_mass,
    validate_market,
)

__version__ = "0.1.0"
