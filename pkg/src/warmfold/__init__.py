"""Warm-start fold-in for UltraGCN-style graph recommenders."""

from .data import (
    GraphStats,
    InteractionLog,
    TemporalSplit,
    build_matrix,
    graph_stats,
    ingest,
    merge_for_foldin,
    temporal_split,
)
from .foldin import (
    FoldInPlan,
    FoldInRequest,
    SgdFoldInConfig,
    build_plan,
    exact_wls_foldin,
    full_retrain,
    linear_foldin,
    mean_foldin,
    sgd_foldin,
    svd_foldin,
    zero_foldin,
)
from .linalg import matvec, pseudo_inverse, truncated_svd
from .model import (
    EmbeddingModel,
    TrainConfig,
    load_model,
    save_model,
    score,
    score_all,
    train_puresvd,
    train_ultragcn,
)

__version__ = "0.1.0"
