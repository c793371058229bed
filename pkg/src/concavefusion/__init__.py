"""Subgroup analysis of heterogeneous treatment effects by concave pairwise fusion."""

from .admm import AdmmState, AdmmWorkspace, PairIndex, solve
from .inference import InferenceReport, infer
from .model import Dataset, TrueModel, load_csv, make_dataset, standardize, unstandardize
from .path import FusionPath, PathConfig, compute_path, export_fusiongram, refine_assignment, ridge_initialize
from .penalty import PenaltySpec, penalty_value, prox
from .sim import DgpSpec, ReplicationSummary, generate, run_study
from .subgroup import Partition, SubgroupResult, extract_groups, modified_bic, select_model

__all__ = [
    "AdmmState", "AdmmWorkspace", "PairIndex", "solve",
    "InferenceReport", "infer",
    "Dataset", "TrueModel", "load_csv", "make_dataset", "standardize", "unstandardize",
    "FusionPath", "PathConfig", "compute_path", "export_fusiongram", "refine_assignment", "ridge_initialize",
    "PenaltySpec", "penalty_value", "prox",
    "DgpSpec", "ReplicationSummary", "generate", "run_study",
    "Partition", "SubgroupResult", "extract_groups", "modified_bic", "select_model",
]

__version__ = "0.1.0"
