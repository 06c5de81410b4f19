"""Correlation structure in the trading strategies of exchange members."""

from .bootstrap import BootstrapBand, bootstrap_band, shuffle_rows
from .cluster import (
    ClusterCut,
    Dendrogram,
    complete_linkage,
    cut,
    cut_k,
    distance_matrix,
    leaf_order,
    rand_index,
)
from .config import RunConfig
from .ingest import MonthSample, TradeRecord, Venue, bucketize, parse_trades
from .persistence import (
    LinkMap,
    RegressionResult,
    chain_links,
    exact_poisson_binomial,
    link_codes,
    minority_counts,
    minority_probability,
    ols,
    persistence_pairs,
)
from .spectra import (
    CorrelationResult,
    EigenReport,
    MPNull,
    correlate,
    eigenvalues_sym,
    mp_bounds,
    mp_density,
    pooled_spectrum,
    significant_share,
    tail_probability,
)
from .strategy import StrategyMatrix, build_strategy_matrix, net_volume, ternary_sign
from .synth import GroundTruth, SynthConfig, generate, ground_truth_compare

__version__ = "0.1.0"
