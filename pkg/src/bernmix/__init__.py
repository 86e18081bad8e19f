"""Bernoulli mixture models for longitudinal binary cohort data with missing answers."""

__version__ = "0.1.0"

from .analysis import ClusterFlow, align_clusters, dominant_cluster_count, k_sweep, sankey_flows
from .core import (
    MixtureParams,
    component_log_density,
    expected_complete_log_likelihood,
    mixture_cov,
    mixture_log_likelihood,
    mixture_mean,
)
from .dataset import CohortDataset, MissingProfile, complete_rows, missing_profile, parse_csv, read_csv, to_csv
from .em import FitConfig, FitResult, Responsibilities, e_step, fit, m_step, predict
from .simulate import SyntheticSample, sample_dataset
from .stats import PrevalenceEstimate, prevalence_table, prevalence_with_ci, t_quantile

__all__ = [
    "ClusterFlow", "CohortDataset", "FitConfig", "FitResult", "MissingProfile", "MixtureParams",
    "PrevalenceEstimate", "Responsibilities", "SyntheticSample", "align_clusters", "complete_rows",
    "component_log_density", "dominant_cluster_count", "e_step", "expected_complete_log_likelihood",
    "fit", "k_sweep", "m_step", "missing_profile", "mixture_cov", "mixture_log_likelihood",
    "mixture_mean", "parse_csv", "predict", "prevalence_table", "prevalence_with_ci", "read_csv", "sample_dataset", "t_quantile",
    "to_csv",
]
