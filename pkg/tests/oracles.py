"""Dense reference solutions shared by the unit and acceptance suites."""

import numpy as np

from warmfold.data import GraphStats
from warmfold.foldin import FoldInRequest
from warmfold.model import PURESVD, ULTRAGCN, EmbeddingModel


def lstsq(a, b):
    return np.linalg.lstsq(a, b, rcond=None)[0]


def reweighted_oracle(model, req):
    """argmin_e || B_I^-1 a - beta_u V e ||."""
    a = req.dense(model.n_items)
    return lstsq(req.beta_u * model.item_embeddings, a / model.stats.beta_i)


def weighted_oracle(model, req):
    """argmin_e || a - beta_u B_I V e ||."""
    a = req.dense(model.n_items)
    return lstsq(req.beta_u * model.stats.beta_i[:, None] * model.item_embeddings, a)


def svd_oracle(model, req):
    """argmin_e || a - V Sigma e ||."""
    return lstsq(model.item_embeddings * model.sigma, req.dense(model.n_items))


def rel(x, ref):
    return np.linalg.norm(x - ref) / max(np.linalg.norm(ref), 1e-300)


def random_instance(rng, n_items=None, rank=None, constant_beta=False):
    """A random UltraGCN model plus one fold-in request for user 0."""
    n_items = n_items or int(rng.integers(40, 501))
    rank = rank or int(rng.integers(1, 33))
    rank = min(rank, n_items)
    di = np.full(n_items, 3) if constant_beta else rng.integers(0, 200, n_items)
    nnz = int(rng.integers(1, min(n_items, 60) + 1))
    items = np.sort(rng.choice(n_items, nnz, replace=False))
    du = np.array([nnz])
    model = EmbeddingModel(ULTRAGCN, rng.standard_normal((1, rank)),
                           rng.standard_normal((n_items, rank)) / np.sqrt(n_items),
                           GraphStats.from_degrees(du, di))
    return model, FoldInRequest(0, items, float(model.stats.beta_u[0]))


def random_svd_instance(rng, n_items=None, rank=None):
    n_items = n_items or int(rng.integers(20, 301))
    rank = min(rank or int(rng.integers(1, 21)), n_items)
    v, _ = np.linalg.qr(rng.standard_normal((n_items, rank)))
    sigma = np.sort(rng.uniform(0.5, 20.0, rank))[::-1]
    stats = GraphStats.from_degrees([1], np.zeros(n_items, dtype=np.int64))
    model = EmbeddingModel(PURESVD, np.zeros((1, rank)), v, stats, sigma=sigma)
    nnz = int(rng.integers(1, n_items + 1))
    items = np.sort(rng.choice(n_items, nnz, replace=False))
    return model, FoldInRequest(0, items, 1.0)


def sgd_instance(rng, n_items=500, rank=32):
    """Unit-variance item factors with moderate degrees so the fold-in quadratic
    is well conditioned enough for a fixed step grid."""
    di = rng.integers(1, 50, n_items)
    nnz = int(rng.integers(5, 60))
    items = np.sort(rng.choice(n_items, nnz, replace=False))
    model = EmbeddingModel(ULTRAGCN, np.zeros((1, rank)), rng.standard_normal((n_items, rank)),
                           GraphStats.from_degrees([nnz], di))
    return model, FoldInRequest(0, items, float(model.stats.beta_u[0]))


def tuned_sgd(model, req, steps=200, grid=(1e-3, 3e-3, 1e-2, 3e-2, 1e-1)):
    """Best step size on the grid, judged by the fold-in objective alone."""
    from warmfold.errors import FoldInDivergedError
    from warmfold.foldin import SgdFoldInConfig, foldin_objective, sgd_foldin

    a = req.dense(model.n_items)
    best = None
    for eta in grid:
        try:
            e = sgd_foldin(model, req, SgdFoldInConfig(steps=steps, learning_rate=eta, mix=0.0, init="zero"))
        except FoldInDivergedError:
            continue
        obj = foldin_objective(model, e, a, req.beta_u)
        if best is None or obj < best[0]:
            best = (obj, e, eta)
    return best[1], best[2]
