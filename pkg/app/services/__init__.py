"""
app/services/__init__.py

サービスパッケージ

使用例:
    from app.services import fit, sample_graph
"""
from .estimator import (
    BetaEstimate,
    BlockFit,
    FitResult,
    fit,
    fit_differential_homophily,
    fit_multi_covariate,
)
from .graph_io import Graph, read_covariates, read_edge_list
from .simulate import SampledGraph, run_design, sample_graph

__all__ = [
    "BetaEstimate",
    "BlockFit",
    "FitResult",
    "fit",
    "fit_differential_homophily",
    "fit_multi_covariate",
    "Graph",
    "read_covariates",
    "read_edge_list",
    "SampledGraph",
    "run_design",
    "sample_graph",
]
