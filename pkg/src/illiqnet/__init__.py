"""Illiquidity networks from limit-order-book quotes.

Minute-level illiquidity series are linked by normalized mutual information
into daily networks, which feed cascade profiling and a next-day crash
warning.  A synthetic market with planted contagion exercises every stage.
"""

from .cascade import FailureEvent, before_peak_score, crash_days, detect_failures, detect_peaks, distance_profile
from .config import PipelineConfig
from .dependency import (
    DependencyMatrix, IlliquidityNetwork, build_network, discretize, gcc_ratio, nmi, nmi_stats,
    pairwise_nmi, select_threshold,
)
from .dynamics import group_proportion, link_evolution
from .early_warning import SignalState, daily_nonrandomness, evaluate, interval_nonrandomness, signal
from .illiquidity import IlliquiditySeries, LiquidityState, classify_state, compute_illiquidity
from .market_data import QuoteSnapshot, StockMeta, aggregate_minute, load_metadata, parse_quotes
from .synthetic import SynthConfig, SyntheticMarket, generate

__version__ = "0.1.0"

__all__ = [
    "DependencyMatrix", "FailureEvent", "IlliquidityNetwork", "IlliquiditySeries", "LiquidityState",
    "PipelineConfig", "QuoteSnapshot", "SignalState", "StockMeta", "SynthConfig", "SyntheticMarket",
    "aggregate_minute", "before_peak_score", "build_network", "classify_state", "compute_illiquidity",
    "crash_days", "daily_nonrandomness", "detect_failures", "detect_peaks", "discretize",
    "distance_profile", "evaluate", "gcc_ratio", "generate", "group_proportion", "interval_nonrandomness",
    "link_evolution", "load_metadata", "nmi", "nmi_stats", "pairwise_nmi", "parse_quotes",
    "select_threshold", "signal",
]
