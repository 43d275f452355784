"""UltraGCN-style and PureSVD embedding models: training, scoring, persistence."""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import GraphStats, graph_stats
from .errors import (
    ChecksumError,
    ColdUserError,
    CorruptFileError,
    DimensionError,
    TrainingDivergedError,
)
from .linalg import truncated_svd

log = logging.getLogger(__name__)

ULTRAGCN = "ultragcn"
PURESVD = "puresvd"
KINDS = (ULTRAGCN, PURESVD)


@dataclass
class TrainConfig:
    rank: int = 64
    lam: float = 1.0
    negatives_per_positive: int = 64
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 1024
    init_scale: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        for name in ("rank", "negatives_per_positive", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.init_scale <= 0:
            raise ValueError("learning_rate and init_scale must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")


@dataclass
class EmbeddingModel:
    kind: str
    user_embeddings: np.ndarray  # M x d
    item_embeddings: np.ndarray  # N x d
    stats: GraphStats
    sigma: np.ndarray | None = None  # PureSVD only
    lam: float = 0.0
    loss_history: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == PURESVD and self.sigma is None:
            raise ValueError("PureSVD model needs singular values")

    @property
    def n_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_embeddings.shape[0]

    @property
    def rank(self) -> int:
        return self.item_embeddings.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.kind.encode())
        for arr in (self.user_embeddings, self.item_embeddings, self.sigma,
                    self.stats.user_degrees, self.stats.item_degrees):
            if arr is not None:
                h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def mean_user_embedding(self) -> np.ndarray:
        """Average embedding over users that were present in training."""
        defined = self.stats.user_defined
        rows = self.user_embeddings[defined] if defined.any() else self.user_embeddings
        return rows.mean(axis=0)


def score(model: EmbeddingModel, u: int, i: int) -> float:
    e_u = model.user_embeddings[u]
    if model.kind == PURESVD:
        return float(e_u @ (model.sigma * model.item_embeddings[i]))
    beta_u = model.stats.beta_u[u]
    if not np.isfinite(beta_u):
        raise ColdUserError(f"user {u} has no training interactions; beta_u undefined")
    return float(beta_u * model.stats.beta_i[i] * (e_u @ model.item_embeddings[i]))


def score_vector(model: EmbeddingModel, e_u, beta_u: float = 1.0) -> np.ndarray:
    """Scores of an arbitrary user embedding against every item."""
    e_u = np.asarray(e_u, dtype=np.float64)
    if model.kind == PURESVD:
        return model.item_embeddings @ (model.sigma * e_u)
    return beta_u * model.stats.beta_i * (model.item_embeddings @ e_u)


def score_all(model: EmbeddingModel, u: int) -> np.ndarray:
    if model.kind == PURESVD:
        return score_vector(model, model.user_embeddings[u])
    beta_u = model.stats.beta_u[u]
    if not np.isfinite(beta_u):
        raise ColdUserError(f"user {u} has no training interactions; beta_u undefined")
    return score_vector(model, model.user_embeddings[u], beta_u)


# ----------------------------------------------------------------------------
# loss


def _neg_log_sigmoid(x):
    """-ln sigmoid(x) and its derivative -sigmoid(-x), sharing one exp."""
    e = np.exp(-np.abs(x))
    value = np.maximum(-x, 0.0) + np.log1p(e)
    inv = 1.0 / (1.0 + e)
    deriv = -np.where(x >= 0, e * inv, inv)
    return value, deriv


def _segment_sum(index, rows):
    """Unique values of ``index`` and the sums of ``rows`` grouped by them."""
    uniq, inverse = np.unique(index, return_inverse=True)
    b = len(index)
    s = sp.csr_matrix((np.ones(b, dtype=rows.dtype), (inverse, np.arange(b))), shape=(len(uniq), b))
    return uniq, np.asarray(s @ rows)


def _batch_gradient(U, V, beta_u, beta_i, users, pos, negs, lam):
    """Loss plus row-sparse gradients: (loss, user rows, dU rows, item rows, dV rows)."""
    users = np.asarray(users, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    negs = np.asarray(negs, dtype=np.int64)
    if negs.ndim != 2 or negs.shape[0] != len(users) or negs.shape[1] == 0:
        raise DimensionError("negs must be a non-empty (B, J) array")

    eu = U[users]                      # B x d
    vp = V[pos]                        # B x d
    vn = np.take(V, negs, axis=0)      # B x J x d
    s_pos = np.einsum("bd,bd->b", eu, vp)
    s_neg = np.matmul(vn, eu[:, :, None])[:, :, 0]
    bu = beta_u[users][:, None]
    bi = beta_i[pos][:, None]
    bj = beta_i[negs]

    l_b, g_b = _neg_log_sigmoid(bu * (bi * s_pos[:, None] - bj * s_neg))
    l_o, g_o = _neg_log_sigmoid(s_pos[:, None] - s_neg)
    loss = l_b.sum(dtype=np.float64) + lam * l_o.sum(dtype=np.float64)

    g_o *= g_o.dtype.type(lam)
    c_pos = (g_b * bu * bi + g_o).sum(axis=1)   # dL/ds_pos
    c_neg = -(g_b * bu * bj + g_o)              # dL/ds_neg

    gu_rows = c_pos[:, None] * vp + np.matmul(c_neg[:, None, :], vn)[:, 0, :]
    uniq_u, grad_u = _segment_sum(users, gu_rows)

    b, j = negs.shape
    items = np.concatenate([pos, negs.ravel()])
    uniq_i, inverse = np.unique(items, return_inverse=True)
    cols = np.concatenate([np.arange(b), np.repeat(np.arange(b), j)])
    coef = np.concatenate([c_pos, c_neg.ravel()])
    grad_v = np.asarray(sp.csr_matrix((coef, (inverse, cols)), shape=(len(uniq_i), b)) @ eu)
    return float(loss), uniq_u, grad_u, uniq_i, grad_v


def pairwise_loss_grad(U, V, beta_u, beta_i, users, pos, negs, lam):
    """Sampled L_B + lam * L_O over a batch and its gradients w.r.t. U and V.

    ``negs`` has shape (B, J): J negatives for each (users[b], pos[b]) pair.
    ln(sigmoid(x)) is evaluated as -softplus(-x). Gradients are dense.
    """
    loss, ru, gu, ri, gv = _batch_gradient(U, V, beta_u, beta_i, users, pos, negs, lam)
    grad_u = np.zeros(U.shape)
    grad_u[ru] = gu
    grad_v = np.zeros(V.shape)
    grad_v[ri] = gv
    return loss, grad_u, grad_v


def loss_and_gradient(model: EmbeddingModel, users, pos, negs, lam=None):
    """Model-level wrapper of :func:`pairwise_loss_grad`; ``lam`` defaults to the model's."""
    lam = model.lam if lam is None else lam
    return pairwise_loss_grad(
        model.user_embeddings, model.item_embeddings,
        model.stats.beta_u, model.stats.beta_i, users, pos, negs, lam,
    )


# ----------------------------------------------------------------------------
# training


class _RowAdam:
    """Adam applied only to the rows a batch touches (moments of other rows are
    left alone), the usual choice for embedding tables."""

    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s, dtype=np.float32) for s in shapes]
        self.v = [np.zeros(s, dtype=np.float32) for s in shapes]
        self.t = 0

    def step(self, params, rows, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, r, g, m, v in zip(params, rows, grads, self.m, self.v):
            mr = self.b1 * m[r] + (1.0 - self.b1) * g
            vr = self.b2 * v[r] + (1.0 - self.b2) * g * g
            m[r] = mr
            v[r] = vr
            p[r] -= self.lr * (mr / c1) / (np.sqrt(vr / c2) + self.eps)


BITMAP_LIMIT = 1 << 26  # cells; above this, membership uses sorted keys


def positive_keys(matrix: sp.csr_matrix) -> np.ndarray:
    """Sorted u * N + i keys of every stored interaction."""
    rows = np.repeat(np.arange(matrix.shape[0], dtype=np.int64), np.diff(matrix.indptr))
    return rows * matrix.shape[1] + matrix.indices  # sorted: rows ascending, columns sorted


def positive_index(matrix: sp.csr_matrix):
    """Dense boolean bitmap for small matrices, else sorted keys."""
    if matrix.shape[0] * matrix.shape[1] <= BITMAP_LIMIT:
        return matrix.toarray().astype(bool)
    return positive_keys(matrix)


def sample_negatives(rng, known, n_items, users, n_neg):
    """Uniform negatives per user, resampling any that hit a known positive.

    ``known`` is either a boolean (users x items) bitmap or sorted keys
    from :func:`positive_keys`; both give the same draws.
    """
    users = np.asarray(users, dtype=np.int64)
    negs = rng.integers(0, n_items, size=(len(users), n_neg))
    owner = np.repeat(users, n_neg)
    flat = negs.reshape(-1)
    todo = np.arange(flat.size)
    while todo.size:
        if known.ndim == 2:
            clash = known[owner[todo], flat[todo]]
        else:
            keys = owner[todo] * n_items + flat[todo]
            hit = np.minimum(np.searchsorted(known, keys), len(known) - 1)
            clash = known[hit] == keys
        todo = todo[clash]
        flat[todo] = rng.integers(0, n_items, size=todo.size)
    return negs


def train_ultragcn(matrix: sp.csr_matrix, stats: GraphStats, config: TrainConfig) -> EmbeddingModel:
    """Fit user/item embeddings by Adam on negative-sampled L_B + lam * L_O.

    Users without training interactions keep zero embeddings.
    """
    matrix = matrix.tocsr()
    n_users, n_items = matrix.shape
    if matrix.nnz == 0:
        raise DimensionError("cannot train on an empty interaction matrix")
    if len(stats.user_degrees) != n_users or len(stats.item_degrees) != n_items:
        raise DimensionError("graph stats do not match the interaction matrix")

    rng = np.random.default_rng(config.seed)
    # float32 during training halves memory traffic; saved models are float32 anyway
    U = rng.normal(0.0, config.init_scale, size=(n_users, config.rank)).astype(np.float32)
    V = rng.normal(0.0, config.init_scale, size=(n_items, config.rank)).astype(np.float32)
    U[~stats.user_defined] = 0.0

    # users whose every item is a positive cannot be given negatives
    trainable = stats.user_degrees < n_items
    pos_users = np.repeat(np.arange(n_users, dtype=np.int64), np.diff(matrix.indptr))
    pos_items = matrix.indices.astype(np.int64)
    keep = trainable[pos_users]
    pos_users, pos_items = pos_users[keep], pos_items[keep]
    n_pos = len(pos_users)
    if n_pos == 0:
        raise DimensionError("no trainable positive pairs")

    beta_u = np.nan_to_num(stats.beta_u, nan=0.0).astype(np.float32)
    beta_i = stats.beta_i.astype(np.float32)
    known = positive_index(matrix)
    opt = _RowAdam([U.shape, V.shape], config.learning_rate)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_pos)
        total = 0.0
        for start in range(0, n_pos, config.batch_size):
            idx = order[start : start + config.batch_size]
            users, pos = pos_users[idx], pos_items[idx]
            negs = sample_negatives(rng, known, n_items, users, config.negatives_per_positive)
            loss, ru, gu, ri, gv = _batch_gradient(U, V, beta_u, beta_i, users, pos, negs, config.lam)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            opt.step([U, V], [ru, ri], [gu, gv])
            total += loss
        mean_loss = total / (n_pos * config.negatives_per_positive)
        if not np.isfinite(mean_loss) or not (np.isfinite(U).all() and np.isfinite(V).all()):
            raise TrainingDivergedError(epoch, mean_loss)
        history.append(mean_loss)
        log.debug("epoch %d loss %.6f", epoch, mean_loss)

    U[~stats.user_defined] = 0.0
    return EmbeddingModel(ULTRAGCN, U.astype(np.float64), V.astype(np.float64), stats,
                          lam=config.lam, loss_history=history)


def train_puresvd(matrix: sp.csr_matrix, rank: int, seed: int = 0) -> EmbeddingModel:
    svd = truncated_svd(matrix, rank, seed=seed)
    return EmbeddingModel(PURESVD, svd.left, svd.right, graph_stats(matrix), sigma=svd.singular_values)


# ----------------------------------------------------------------------------
# persistence
#
# little-endian layout:
#   b"WFLD1" | kind u8 | M, N, d u64 | lam f64 | U f32[M*d] | V f32[N*d]
#   | sigma f32[d] (PureSVD) | b_U f64[M] | b_I f64[N] | d_u i64[M] | d_i i64[N]
#   | sha256 of everything before (32 bytes)

MAGIC = b"WFLD1"
_HEADER = struct.Struct("<5sBQQQd")
_KIND_TAGS = {ULTRAGCN: 0, PURESVD: 1}


@dataclass(frozen=True)
class ModelHeader:
    kind: str
    n_users: int
    n_items: int
    rank: int
    lam: float
    checksum: str


def model_bytes(model: EmbeddingModel) -> bytes:
    m, n, d = model.n_users, model.n_items, model.rank
    parts = [
        _HEADER.pack(MAGIC, _KIND_TAGS[model.kind], m, n, d, float(model.lam)),
        np.ascontiguousarray(model.user_embeddings, dtype="<f4").tobytes(),
        np.ascontiguousarray(model.item_embeddings, dtype="<f4").tobytes(),
    ]
    if model.kind == PURESVD:
        parts.append(np.ascontiguousarray(model.sigma, dtype="<f4").tobytes())
    parts += [
        np.ascontiguousarray(model.stats.beta_u, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.stats.beta_i, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.stats.user_degrees, dtype="<i8").tobytes(),
        np.ascontiguousarray(model.stats.item_degrees, dtype="<i8").tobytes(),
    ]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_model(model: EmbeddingModel, path) -> str:
    """Write the container; returns its hex checksum."""
    blob = model_bytes(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob[-32:].hex()


def _parse(blob: bytes):
    if len(blob) < _HEADER.size + 32:
        raise CorruptFileError("file too short for a model header")
    magic, tag, m, n, d, lam = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}")
    kinds = {v: k for k, v in _KIND_TAGS.items()}
    if tag not in kinds:
        raise CorruptFileError(f"unknown kind tag {tag}")
    kind = kinds[tag]
    expected = _HEADER.size + 4 * (m * d + n * d) + 8 * 2 * (m + n) + 32
    if kind == PURESVD:
        expected += 4 * d
    if len(blob) != expected:
        raise CorruptFileError(f"file has {len(blob)} bytes, header implies {expected}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checksum mismatch: file is corrupt or was modified")
    header = ModelHeader(kind, m, n, d, lam, digest.hex())
    return header, body


def read_header(path) -> ModelHeader:
    with open(path, "rb") as fh:
        blob = fh.read()
    return _parse(blob)[0]


def load_model(path) -> tuple[EmbeddingModel, ModelHeader]:
    """Load a container; float32 embeddings are promoted to float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header, body = _parse(blob)
    m, n, d = header.n_users, header.n_items, header.rank
    off = _HEADER.size

    def take(dtype, count):
        nonlocal off
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    U = take("<f4", m * d).reshape(m, d).astype(np.float64)
    V = take("<f4", n * d).reshape(n, d).astype(np.float64)
    sigma = take("<f4", d).astype(np.float64) if header.kind == PURESVD else None
    beta_u = take("<f8", m).astype(np.float64)
    beta_i = take("<f8", n).astype(np.float64)
    du = take("<i8", m).astype(np.int64)
    di = take("<i8", n).astype(np.int64)
    stats = GraphStats(du, di, beta_u, beta_i)
    return EmbeddingModel(header.kind, U, V, stats, sigma=sigma, lam=header.lam), header
