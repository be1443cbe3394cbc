"""Rank-1 reconstruction diagnostics for binary response matrices.

Refactor scores the in-sample reconstruction ``u v'`` built from row and
column association images; Verifactor scores bi-cross-validated block
predictions of the same model.
"""

from .assoc import AssociationKind, ContingencyTable, association, contingency, image, tetrachoric
from .core import BlockPartition, ResponseMatrix, RngSpec, ValidationError, as_response_matrix, random_partition
from .estimators import RefactorAnalysis, VerifactorAnalysis
from .factor import ecv, fit_rank_one, leading_loadings, minres, traditional_panel
from .io import DatasetSpec, ReportDocument, load_long, load_wide, read_report, write_report
from .metrics import METRIC_KEYS, MetricPanel, full_panel
from .refactor import isotonic_calibrate, isotonic_r2, pava, reconstruct, refactor_functional
from .sim import SimHierConfig, SimThresholdConfig, replicate, sim_hierarchical, sim_threshold
from .verifactor import BcvConfig, predict_block_loading, predict_block_pinv, verifactor_functional

__version__ = "0.1.0"

__all__ = [
    "AssociationKind", "BcvConfig", "BlockPartition", "ContingencyTable", "DatasetSpec", "METRIC_KEYS",
    "MetricPanel", "RefactorAnalysis", "ReportDocument", "ResponseMatrix", "RngSpec", "SimHierConfig",
    "SimThresholdConfig", "ValidationError", "VerifactorAnalysis", "as_response_matrix", "association",
    "contingency", "ecv", "fit_rank_one", "full_panel", "image", "isotonic_calibrate", "isotonic_r2",
    "leading_loadings", "load_long", "load_wide", "minres", "pava", "predict_block_loading",
    "predict_block_pinv", "random_partition", "read_report", "reconstruct", "refactor_functional",
    "replicate", "sim_hierarchical", "sim_threshold", "tetrachoric", "traditional_panel",
    "verifactor_functional", "write_report",
]
