"""Mutual-information scaling analysis for token sequences.

Exact MI on hierarchical Gaussian chains, bias-corrected entropy and MI
estimators over token counts and model log-probs, and scaling-law fits
that separate power-law from logarithmic growth.
"""

from .entropy import (
    CountTable,
    digamma,
    entropy_grassberger,
    entropy_naive,
    grassberger_g,
    pack_pair,
    unpack_pair,
)
from .estimators import (
    BipartiteEstimate,
    MetricCurve,
    avg_of,
    direct_bipartite,
    positionwise_kl,
    positionwise_nll,
    smooth_curve,
    twopoint_mi_hat,
    vclub_bipartite,
)
from .fits import (
    LogFit,
    ModelComparison,
    PowerLawFit,
    ScalingSeries,
    extrapolate,
    fit_log,
    fit_powerlaw_loglog,
    fit_powerlaw_offset,
    l2m_required_dim,
    model_compare,
)
from .gaussian import (
    ConditionalLaw,
    CovarianceModel,
    bipartite_mi_exact,
    build_covariance,
    conditional_kl,
    conditional_law,
    conditional_stds,
    gaussian_kl,
    mc_bipartite_mi,
    mixing_matrix,
    sample,
    sweep_bipartite,
    twopoint_mi_exact,
)
from .ngrams import (
    TokenCorpus,
    count_pairs_at_distance,
    count_segment_leading_pairs,
    count_unigrams,
    read_corpus,
)
from .records import (
    AlignedDataset,
    LogProbRecord,
    ShuffleManifest,
    join_for_estimation,
    make_shuffle_manifest,
    read_records,
    validate,
    write_records,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset",
    "BipartiteEstimate",
    "ConditionalLaw",
    "CountTable",
    "CovarianceModel",
    "LogFit",
    "LogProbRecord",
    "MetricCurve",
    "ModelComparison",
    "PowerLawFit",
    "ScalingSeries",
    "ShuffleManifest",
    "TokenCorpus",
    "avg_of",
    "bipartite_mi_exact",
    "build_covariance",
    "conditional_kl",
    "conditional_law",
    "conditional_stds",
    "count_pairs_at_distance",
    "count_segment_leading_pairs",
    "count_unigrams",
    "digamma",
    "direct_bipartite",
    "entropy_grassberger",
    "entropy_naive",
    "extrapolate",
    "fit_log",
    "fit_powerlaw_loglog",
    "fit_powerlaw_offset",
    "gaussian_kl",
    "grassberger_g",
    "join_for_estimation",
    "l2m_required_dim",
    "make_shuffle_manifest",
    "mc_bipartite_mi",
    "mixing_matrix",
    "model_compare",
    "pack_pair",
    "positionwise_kl",
    "positionwise_nll",
    "read_corpus",
    "read_records",
    "sample",
    "smooth_curve",
    "sweep_bipartite",
    "twopoint_mi_exact",
    "twopoint_mi_hat",
    "unpack_pair",
    "validate",
    "vclub_bipartite",
    "write_records",
]
