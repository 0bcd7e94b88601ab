"""Exact-likelihood exponential random graph models for small networks."""

__version__ = "0.1.0"

from .estimation import FitOptions, FitResult, check_boundary, fit_mle, fit_pooled, standard_errors, vcov_of
from .formula import FormulaError, parse_formula, print_formula
from .graph import AttributeTable, Graph, graph_from_adjacency, graph_from_edges
from .inference import aic, bic, bootstrap, gof_exact, lr_test
from .likelihood import build_pooled, gradient_pooled, hessian_pooled, loglik_pooled, stat_distribution
from .simulation import StudyConfig, regenerate_fivenets, run_sim_study, sample_graphs
from .tables import StatTable, TableCache, build_table
from .terms import ModelError, ModelSpec, eval_stats

__all__ = [
    "AttributeTable", "FitOptions", "FitResult", "FormulaError", "Graph", "ModelError",
    "ModelSpec", "StatTable", "StudyConfig", "TableCache", "aic", "bic", "bootstrap",
    "build_pooled", "build_table", "check_boundary", "eval_stats", "fit_mle", "fit_pooled",
    "gof_exact", "gradient_pooled", "graph_from_adjacency", "graph_from_edges",
    "hessian_pooled", "loglik_pooled", "lr_test", "parse_formula", "print_formula",
    "regenerate_fivenets", "run_sim_study", "sample_graphs", "stat_distribution",
    "standard_errors", "vcov_of",
]
