"""Warm-user embedding updates against a frozen item side.

``linear_foldin`` is the closed-form update: scale the interaction vector by
1/beta_i, push it through the precomputed pseudo-inverse of V and divide by
beta_u. The other strategies are baselines or references for it.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import build_matrix, graph_stats, merge_for_foldin
from .errors import (
    ColdUserError,
    FoldInDivergedError,
    NumericalWarning,
    PlanBuildError,
    StalePlanError,
)
from .linalg import pseudo_inverse
from .model import PURESVD, ULTRAGCN, EmbeddingModel, TrainConfig, train_ultragcn

STRATEGIES = ("zero", "mean", "linear", "wls", "sgd", "svd", "full")


@dataclass(frozen=True)
class FoldInPlan:
    v_pinv: np.ndarray      # d x N
    inv_beta_i: np.ndarray  # N, sqrt(d_i + 1)
    rank: int
    built_from: str

    @property
    def n_items(self) -> int:
        return self.v_pinv.shape[1]


@dataclass(frozen=True)
class FoldInRequest:
    """Support of a_u (``items``), its values (binary unless rescaled) and beta_u."""

    user: int
    items: np.ndarray
    beta_u: float
    values: np.ndarray | None = None

    def __post_init__(self):
        if len(self.items) == 0:
            raise ColdUserError(f"user {self.user} has an empty interaction vector")
        if not (np.isfinite(self.beta_u) and self.beta_u > 0):
            raise ColdUserError(f"user {self.user}: beta_u={self.beta_u} is undefined")

    @property
    def weights(self) -> np.ndarray:
        return np.ones(len(self.items)) if self.values is None else np.asarray(self.values, np.float64)

    def dense(self, n_items: int) -> np.ndarray:
        a = np.zeros(n_items)
        a[self.items] = self.weights
        return a


def make_request(train, warm, user: int) -> FoldInRequest:
    """Request for ``user`` from the union of train row and warm events."""
    items, _, beta_u = merge_for_foldin(train, warm, user)
    return FoldInRequest(user, items, beta_u)


@dataclass
class SgdFoldInConfig:
    steps: int = 50
    learning_rate: float = 1e-2
    mix: float = 0.1
    init: str = "previous"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")
        if self.init not in ("zero", "previous", "mean"):
            raise ValueError(f"unknown init {self.init!r}")


def build_plan(model: EmbeddingModel, rank_tol: float = 1e-10) -> FoldInPlan:
    if model.kind != ULTRAGCN:
        raise PlanBuildError(f"linear fold-in needs an UltraGCN model, got {model.kind}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        pinv = pseudo_inverse(model.item_embeddings, rank_tol)
    if pinv.degenerate:
        raise PlanBuildError("item embedding matrix has rank 0")
    inv_beta = np.sqrt(model.stats.item_degrees.astype(np.float64) + 1.0)
    return FoldInPlan(pinv.matrix, inv_beta, pinv.rank, model.fingerprint())


def check_plan(plan: FoldInPlan, model: EmbeddingModel) -> None:
    if plan.built_from != model.fingerprint():
        raise StalePlanError("fold-in plan was built from a different model")


def linear_foldin(plan: FoldInPlan, req: FoldInRequest, gather: bool = False) -> np.ndarray:
    """e_u = (1 / beta_u) * (a_u / beta_i) @ V^+.

    The default path materializes c = a_u B_I^-1 as a length-N vector and does
    one dense d x N mat-vec, which is the O(Nd) cost model. ``gather=True``
    multiplies only the columns of V^+ on the support of a_u (O(nnz * d)).
    """
    c_support = req.weights * plan.inv_beta_i[req.items]
    if gather:
        return (plan.v_pinv[:, req.items] @ c_support) / req.beta_u
    c = np.zeros(plan.n_items)
    c[req.items] = c_support
    return (plan.v_pinv @ c) / req.beta_u


def exact_wls_foldin(model: EmbeddingModel, req: FoldInRequest) -> np.ndarray:
    """Minimizer of ||a_u - beta_u B_I V e||_2 via the normal equations.

    Agrees with :func:`linear_foldin` only when B_I is a multiple of identity.
    """
    w = model.stats.beta_i[:, None] * model.item_embeddings
    gram = w.T @ w
    rhs = w[req.items].T @ req.weights / req.beta_u
    d = gram.shape[0]
    if np.linalg.matrix_rank(gram) < d:
        ridge = 1e-10 * np.trace(gram) / d
        warnings.warn(f"singular normal matrix; ridge {ridge:.3g} added", NumericalWarning, stacklevel=2)
        gram = gram + ridge * np.eye(d)
    return np.linalg.solve(gram, rhs)


def svd_foldin(model: EmbeddingModel, req: FoldInRequest) -> np.ndarray:
    """e_u = (a_u^T V) Sigma^-1 for a PureSVD model."""
    if model.kind != PURESVD:
        raise ValueError("svd_foldin needs a PureSVD model")
    proj = model.item_embeddings[req.items].T @ req.weights
    sigma = model.sigma
    positive = sigma > 0
    if not positive.all():
        warnings.warn("zero singular values dropped from fold-in", NumericalWarning, stacklevel=2)
    out = np.zeros_like(proj)
    out[positive] = proj[positive] / sigma[positive]
    return out


def foldin_gradient(model: EmbeddingModel, e, a, beta_u: float) -> np.ndarray:
    """2 beta_u V^T (B_I (beta_u B_I (V e) - a)) with ``a`` dense."""
    b_i = model.stats.beta_i
    v = model.item_embeddings
    return 2.0 * beta_u * (v.T @ (b_i * (beta_u * b_i * (v @ e) - a)))


def foldin_objective(model: EmbeddingModel, e, a, beta_u: float) -> float:
    r = a - beta_u * model.stats.beta_i * (model.item_embeddings @ e)
    return float(r @ r)


def mean_foldin(model: EmbeddingModel) -> np.ndarray:
    return model.mean_user_embedding()


def zero_foldin(model: EmbeddingModel, user: int) -> np.ndarray:
    """The trained embedding, untouched (zeros for users absent from training)."""
    if user < model.n_users:
        return model.user_embeddings[user].copy()
    return np.zeros(model.rank)


def sgd_foldin(model: EmbeddingModel, req: FoldInRequest, config: SgdFoldInConfig,
               mean_embedding=None) -> np.ndarray:
    """``steps`` gradient steps on the fold-in objective, then mix with the mean user.

    ``mean_embedding`` may be passed in to avoid recomputing it per user.
    """
    e_mean = model.mean_user_embedding() if mean_embedding is None else mean_embedding
    if config.init == "mean":
        e = np.array(e_mean, dtype=np.float64)
    elif config.init == "previous" and req.user < model.n_users and model.stats.user_defined[req.user]:
        e = model.user_embeddings[req.user].astype(np.float64)
    else:
        e = np.zeros(model.rank)

    a = req.dense(model.n_items)
    eta = config.learning_rate
    for step in range(1, config.steps + 1):
        e -= eta * foldin_gradient(model, e, a, req.beta_u)
        norm = np.linalg.norm(e)
        if not np.isfinite(norm) or norm > 1e6:
            raise FoldInDivergedError(step, norm)
    return config.mix * e_mean + (1.0 - config.mix) * e


def full_retrain(train_log, warm_log, config: TrainConfig) -> EmbeddingModel:
    """Retrain from scratch on train + warm events with fresh graph stats."""
    matrix = build_matrix(train_log.concat(warm_log))
    return train_ultragcn(matrix, graph_stats(matrix), config)


@dataclass
class FoldInRecord:
    user_id: str
    strategy: str
    time_ns: int
    embedding_norm: float


@dataclass
class FoldInExport:
    records: list[FoldInRecord] = field(default_factory=list)

    HEADER = ("user_id", "strategy", "time_ns", "embedding_norm")

    def add(self, user_id, strategy, time_ns, embedding):
        self.records.append(FoldInRecord(str(user_id), strategy, int(time_ns),
                                         float(np.linalg.norm(embedding))))

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for r in self.records:
                w.writerow([r.user_id, r.strategy, r.time_ns, f"{r.embedding_norm:.10g}"])

    @classmethod
    def read(cls, path) -> "FoldInExport":
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != cls.HEADER:
                raise ValueError(f"unexpected header {reader.fieldnames}")
            for row in reader:
                out.records.append(FoldInRecord(row["user_id"], row["strategy"],
                                                int(row["time_ns"]), float(row["embedding_norm"])))
        return out
