"""Psychometric fitting and rank statistics for the perceptual studies."""

from .fit import (
    DIFFERENT,
    DT_CRITERION,
    PUBLISHED_AVERAGE,
    PUBLISHED_STD,
    PUBLISHED_THRESHOLDS,
    SAME,
    Exclusion,
    MissRates,
    PsychometricFit,
    SeparationError,
    ThresholdSummary,
    TrialResponse,
    UndefinedThresholdError,
    exclude_participants,
    fit_psychometric,
    fit_rates_least_squares,
    group_by_participant,
    miss_rate,
    pooled_curve,
    published_summary,
    simulate_responses,
    summarize_thresholds,
)
from .stats import (
    ATTRIBUTES,
    FriedmanResult,
    LikertTable,
    PairwiseComparison,
    WilcoxonResult,
    bonferroni,
    chi2_sf,
    friedman_permutation_p,
    friedman_statistic,
    friedman_test,
    pairwise_wilcoxon,
    wilcoxon_signed_rank,
)

__all__ = [
    "ATTRIBUTES", "DIFFERENT", "DT_CRITERION", "Exclusion", "FriedmanResult",
    "LikertTable", "MissRates", "PUBLISHED_AVERAGE", "PUBLISHED_STD",
    "PUBLISHED_THRESHOLDS", "PairwiseComparison", "PsychometricFit", "SAME",
    "SeparationError", "ThresholdSummary", "TrialResponse", "UndefinedThresholdError",
    "WilcoxonResult", "bonferroni", "chi2_sf", "exclude_participants",
    "fit_psychometric", "fit_rates_least_squares", "friedman_permutation_p",
    "friedman_statistic", "friedman_test", "group_by_participant", "miss_rate",
    "pairwise_wilcoxon", "pooled_curve", "published_summary", "simulate_responses",
    "summarize_thresholds", "wilcoxon_signed_rank",
]
