"""Bayesian measurement of preferential attachment from network evolution logs."""
from prefattach.evolution import (EdgeEvent, EvolutionLog, IncrementPanel, SufficientStats,
                                  concat_stats, extract_increments, ingest, partition_periods,
                                  split_stats, summarize)
from prefattach.kernels import BACKEND
from prefattach.likelihood import RatePrior, loglik_collapsed, loglik_full, posterior_mu
from prefattach.preference import PIECEWISE, POWER, PreferenceParams, g
from prefattach.priors import HyperConfig
from prefattach.sampler import ChainConfig, ChainResult, fit_single

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChainConfig", "ChainResult", "EdgeEvent", "EvolutionLog", "HyperConfig",
    "IncrementPanel", "PIECEWISE", "POWER", "PreferenceParams", "RatePrior", "SufficientStats",
    "concat_stats", "extract_increments", "fit_single", "g", "ingest", "loglik_collapsed",
    "loglik_full", "partition_periods", "posterior_mu", "split_stats", "summarize",
]
