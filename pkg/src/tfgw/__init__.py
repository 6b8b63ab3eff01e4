"""Template-based Fused Gromov-Wasserstein graph classification.

Exact optimal transport (network simplex), FGW distances via conditional
gradient with exact line search, learnable graph templates with
envelope-theorem gradients, a small GIN/MLP stack with hand-written
backpropagation, and the holdout + k-fold evaluation protocol.
"""

from .checkpoint import CheckpointError, load_model, save_model, write_history
from .exact_ot import Coupling, OtInputError, brute_force_ot, solve_exact_ot
from .fgw import (CgOptions, FgwResult, exact_line_search, feature_cost,
                  fgw_cost, fgw_cost_naive, cg_linearized_gradient, solve_fgw)
from .graphs import (DatasetParseError, Graph, GraphValidationError,
                     LabeledDataset, StructureKind, apply_structure_kind,
                     degree_features, gen_four_cycles, gen_skip_circles,
                     load_tu_dataset, make_graph, save_tu_dataset,
                     shortest_path_matrix, uniform_weights)
from .layer import (Template, TfgwForwardRecord, TfgwGrads, apply_constraints,
                    simplex_project, tfgw_backward, tfgw_forward)
from .nn import (AdamState, GinParams, MlpParams, adam_step, cross_entropy,
                 cross_entropy_batch, gin_backward, gin_forward, init_gin,
                 init_mlp, mlp_backward, mlp_forward)
from .trainer import (FoldReport, TfgwModel, TrainConfig, TrainingError,
                      cross_validate, evaluate, init_templates, pca_project,
                      stratified_folds, stratified_split, train)

__version__ = "1.0.0"

__all__ = [
    "AdamState", "CgOptions", "CheckpointError", "Coupling",
    "DatasetParseError", "FgwResult", "FoldReport", "GinParams", "Graph",
    "GraphValidationError", "LabeledDataset", "MlpParams", "OtInputError",
    "StructureKind", "Template", "TfgwForwardRecord", "TfgwGrads",
    "TfgwModel", "TrainConfig", "TrainingError", "adam_step",
    "apply_constraints", "apply_structure_kind", "brute_force_ot",
    "cg_linearized_gradient", "cross_entropy", "cross_entropy_batch",
    "cross_validate", "degree_features", "evaluate", "exact_line_search",
    "feature_cost", "fgw_cost", "fgw_cost_naive", "gen_four_cycles",
    "gen_skip_circles", "gin_backward", "gin_forward", "init_gin",
    "init_mlp", "init_templates", "load_model", "load_tu_dataset",
    "make_graph", "mlp_backward", "mlp_forward", "pca_project", "save_model",
    "save_tu_dataset", "shortest_path_matrix", "simplex_project",
    "solve_exact_ot", "solve_fgw", "stratified_folds", "stratified_split",
    "tfgw_backward", "tfgw_forward", "train", "uniform_weights",
    "write_history",
]
