"""Entropy-based outlier scores on directed kNN similarity graphs."""

from .dataset import (
    LabeledDataset,
    OutlierTrial,
    gen_gaussian_with_planted_outlier,
    gen_synthetic_road_rasters,
    load_dataset,
    make_outlier_trials,
)
from .estimators import AffinityGraphTransformer, GraphOutlierDetector
from .evaluation import aggregate_dataset, auc_single_outlier, compare_methods, sweep_k
from .knn import NeighborIndex, build_neighbor_index, dissimilarity
from .scores import METHODS, ScoreResult, compute_score
from .similarity import (
    SimilarityGraph,
    build_bh_sne_graph,
    build_umap_graph,
    incoming_view,
    normalize_umap_weights,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityGraphTransformer",
    "GraphOutlierDetector",
    "LabeledDataset",
    "METHODS",
    "NeighborIndex",
    "OutlierTrial",
    "ScoreResult",
    "SimilarityGraph",
    "aggregate_dataset",
    "auc_single_outlier",
    "build_bh_sne_graph",
    "build_neighbor_index",
    "build_umap_graph",
    "compare_methods",
    "compute_score",
    "dissimilarity",
    "gen_gaussian_with_planted_outlier",
    "gen_synthetic_road_rasters",
    "incoming_view",
    "load_dataset",
    "make_outlier_trials",
    "normalize_umap_weights",
    "sweep_k",
]
