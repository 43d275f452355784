"""Top-k ranking, HR/NDCG/coverage, the warm-start protocol and timing benchmarks."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import (
    GraphStats,
    InteractionLog,
    TemporalSplit,
    build_matrix,
    group_items_by_user,
)
from .errors import ColdUserError, FoldInDivergedError, NumericalWarning
from .foldin import (
    FoldInPlan,
    FoldInRequest,
    SgdFoldInConfig,
    build_plan,
    check_plan,
    exact_wls_foldin,
    full_retrain,
    linear_foldin,
    make_request,
    mean_foldin,
    sgd_foldin,
    svd_foldin,
    zero_foldin,
)
from .model import ULTRAGCN, EmbeddingModel, TrainConfig, score_vector

log = logging.getLogger(__name__)

WARMUP_CALLS = 5


# ----------------------------------------------------------------------------
# ranking and metrics


def topk(scores, k: int, exclude=None) -> np.ndarray:
    """Indices of the k best scores; ties go to the lower item index."""
    scores = np.array(scores, dtype=np.float64)
    n = len(scores)
    if exclude is not None and len(exclude):
        exclude = np.unique(np.asarray(exclude, dtype=np.int64))
        scores[exclude] = -np.inf
        n_excluded = len(exclude)
    else:
        n_excluded = 0
    if not 1 <= k <= n - n_excluded:
        raise ValueError(f"k={k} but only {n - n_excluded} candidates remain")
    thresh = np.partition(scores, n - k)[n - k]
    cand = np.flatnonzero(scores >= thresh)
    order = np.lexsort((cand, -scores[cand]))
    return cand[order[:k]]


def _per_user(recs, truths):
    for rec, truth in zip(recs, truths):
        truth = set(int(t) for t in truth)
        if truth:
            yield list(rec), truth


def hit_rate(recs, truths, k: int) -> float:
    """Share of users with at least one ground-truth item in their top-k."""
    hits = [any(r in truth for r in rec[:k]) for rec, truth in _per_user(recs, truths)]
    if not hits:
        raise ValueError("no users with ground truth")
    return float(np.mean(hits))


def _dcg_discount(k):
    return 1.0 / np.log2(np.arange(2, k + 2))


def ndcg(recs, truths, k: int) -> float:
    disc = _dcg_discount(k)
    vals = []
    for rec, truth in _per_user(recs, truths):
        gains = np.array([r in truth for r in rec[:k]], dtype=np.float64)
        dcg = float(gains @ disc[: len(gains)])
        idcg = float(disc[: min(len(truth), k)].sum())
        vals.append(dcg / idcg)
    if not vals:
        raise ValueError("no users with ground truth")
    return float(np.mean(vals))


def coverage(lists, k: int, n_items: int) -> float:
    seen = set()
    for rec in lists:
        seen.update(int(r) for r in rec[:k])
    return len(seen) / n_items


# ----------------------------------------------------------------------------
# warm-start protocol


@dataclass
class WarmStartData:
    """A split prepared for fold-in and ranking.

    ``train`` is the binary train matrix. ``warm`` / ``test`` map users to
    their sorted unique items. Items with zero train degree have no trained
    embedding and are never ranked.
    """

    train: sp.csr_matrix
    warm: dict[int, np.ndarray]
    test: dict[int, np.ndarray]
    train_log: InteractionLog
    warm_log: InteractionLog

    @classmethod
    def from_split(cls, split: TemporalSplit) -> "WarmStartData":
        return cls(
            build_matrix(split.train),
            group_items_by_user(split.warm),
            group_items_by_user(split.test),
            split.train,
            split.warm,
        )

    @property
    def n_items(self) -> int:
        return self.train.shape[1]

    @property
    def warm_users(self) -> np.ndarray:
        return np.array(sorted(self.warm), dtype=np.int64)

    def train_row(self, user: int) -> np.ndarray:
        return self.train.indices[self.train.indptr[user] : self.train.indptr[user + 1]]

    def history(self, user: int) -> np.ndarray:
        return np.union1d(self.train_row(user), self.warm.get(user, np.empty(0, np.int64)))

    def unrankable_items(self) -> np.ndarray:
        return np.flatnonzero(self.train.getnnz(axis=0) == 0)

    def request(self, user: int) -> FoldInRequest:
        return make_request(self.train, self.warm, user)


@dataclass
class EvalConfig:
    ks: tuple[int, ...] = (5, 10)
    sgd: SgdFoldInConfig = field(default_factory=SgdFoldInConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class FoldInOutcome:
    """Embeddings produced by one strategy for the warm users.

    ``model`` is the model to score against; it differs from the input model
    for full retraining and for the PureSVD strategy.
    """

    strategy: str
    model: EmbeddingModel
    users: np.ndarray
    embeddings: np.ndarray
    betas: np.ndarray
    times_ns: np.ndarray
    setup_s: float = 0.0
    n_cold: int = 0


def _timed(fn, reqs):
    if reqs:
        for _ in range(WARMUP_CALLS):
            fn(reqs[0])
    out, times = [], []
    for req in reqs:
        t0 = time.perf_counter_ns()
        e = fn(req)
        times.append(time.perf_counter_ns() - t0)
        out.append(e)
    return out, np.asarray(times, dtype=np.int64)


def apply_strategy(model: EmbeddingModel, data: WarmStartData, strategy: str,
                   config: EvalConfig | None = None, plan: FoldInPlan | None = None,
                   svd_model: EmbeddingModel | None = None) -> FoldInOutcome:
    """Fold every warm user in with ``strategy``.

    Strategies: zero, mean, linear, wls, sgd, svd (needs ``svd_model``), full.
    """
    config = config or EvalConfig()
    users = data.warm_users
    scoring_model = model
    setup_s = 0.0
    n_cold = 0

    reqs = []
    for u in users:
        try:
            reqs.append(data.request(int(u)))
        except ColdUserError:
            n_cold += 1
    users = np.array([r.user for r in reqs], dtype=np.int64)
    betas = np.array([r.beta_u for r in reqs], dtype=np.float64)

    if strategy == "zero":
        embs, times = _timed(lambda r: zero_foldin(model, r.user), reqs)
        # untouched model keeps the train-time beta_u
        betas = np.array([model.stats.beta_u[u] if model.stats.user_defined[u] else 1.0 for u in users])
    elif strategy == "mean":
        embs, times = _timed(lambda r: mean_foldin(model), reqs)
    elif strategy == "linear":
        if plan is None:
            t0 = time.perf_counter()
            plan = build_plan(model)
            setup_s = time.perf_counter() - t0
        check_plan(plan, model)
        embs, times = _timed(lambda r: linear_foldin(plan, r), reqs)
    elif strategy == "wls":
        embs, times = _timed(lambda r: exact_wls_foldin(model, r), reqs)
    elif strategy == "sgd":
        e_mean = model.mean_user_embedding()
        embs, times = _timed(lambda r: sgd_foldin(model, r, config.sgd, e_mean), reqs)
    elif strategy == "svd":
        if svd_model is None:
            raise ValueError("the svd strategy needs a PureSVD model")
        scoring_model = svd_model
        embs, times = _timed(lambda r: svd_foldin(svd_model, r), reqs)
    elif strategy == "full":
        t0 = time.perf_counter_ns()
        scoring_model = full_retrain(data.train_log, data.warm_log, config.train)
        elapsed = time.perf_counter_ns() - t0
        setup_s = elapsed / 1e9
        embs = [scoring_model.user_embeddings[u] for u in users]
        betas = scoring_model.stats.beta_u[users] if len(users) else betas
        times = np.full(len(users), elapsed // max(len(users), 1), dtype=np.int64)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    embs = np.array(embs, dtype=np.float64).reshape(len(users), scoring_model.rank)
    return FoldInOutcome(strategy, scoring_model, users, embs, betas, times, setup_s, n_cold)


@dataclass
class StrategyResult:
    strategy: str
    metrics: dict[str, float]
    n_users: int
    n_cold: int
    times_ns: np.ndarray
    setup_s: float
    recommendations: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def timing_stats(self) -> dict[str, float]:
        t = self.times_ns / 1e9
        if len(t) == 0:
            return {"mean": 0.0, "p50": 0.0, "p99": 0.0, "sec_per_user": 0.0}
        return {
            "mean": float(t.mean()),
            "p50": float(np.percentile(t, 50)),
            "p99": float(np.percentile(t, 99)),
            "sec_per_user": float(t.mean()),
        }


def rank_and_score(outcome: FoldInOutcome, data: WarmStartData, ks=(5, 10)) -> StrategyResult:
    """Rank every test user and compute HR@k, NDCG@k and coverage@max(k).

    Warm users use the fold-in embeddings; other users keep their trained
    embedding. Users with neither train nor warm history, and users whose
    test items are all already in their history, are not evaluated.
    """
    model = outcome.model
    k_max = max(ks)
    folded = {int(u): i for i, u in enumerate(outcome.users)}
    unrankable = data.unrankable_items()
    recs, truths = {}, {}
    n_cold = 0
    for u in sorted(data.test):
        hist = data.history(u)
        if len(hist) == 0:
            n_cold += 1
            continue
        truth = np.setdiff1d(data.test[u], hist)
        if len(truth) == 0:
            continue
        if u in folded:
            idx = folded[u]
            e, beta = outcome.embeddings[idx], outcome.betas[idx]
        else:
            e = model.user_embeddings[u]
            beta = model.stats.beta_u[u] if model.stats.user_defined[u] else 1.0
        scores = score_vector(model, e, beta)
        excl = np.union1d(hist, unrankable)
        k = min(k_max, data.n_items - len(excl))
        if k < 1:
            continue
        recs[u] = topk(scores, k, excl)
        truths[u] = truth

    rec_list = [recs[u] for u in recs]
    truth_list = [truths[u] for u in recs]
    metrics = {}
    if rec_list:
        for k in ks:
            metrics[f"HR@{k}"] = hit_rate(rec_list, truth_list, k)
        for k in ks:
            metrics[f"NDCG@{k}"] = ndcg(rec_list, truth_list, k)
        metrics[f"coverage@{k_max}"] = coverage(rec_list, k_max, data.n_items)
    return StrategyResult(outcome.strategy, metrics, len(rec_list), n_cold + outcome.n_cold,
                          outcome.times_ns, outcome.setup_s, recs)


def evaluate_strategy(model: EmbeddingModel, data: WarmStartData, strategy: str,
                      config: EvalConfig | None = None, **kwargs) -> StrategyResult:
    config = config or EvalConfig()
    outcome = apply_strategy(model, data, strategy, config, **kwargs)
    return rank_and_score(outcome, data, config.ks)


def tuning_data(split: TemporalSplit) -> WarmStartData:
    """Validation view of a split: warm events before the warm median timestamp
    are folded in, the later ones serve as targets. The test subset is unused."""
    warm = split.warm
    if len(warm) == 0:
        raise ValueError("empty warm subset; nothing to tune on")
    cut = np.median(warm.timestamps)
    early, late = warm.subset(warm.timestamps <= cut), warm.subset(warm.timestamps > cut)
    return WarmStartData(build_matrix(split.train), group_items_by_user(early),
                         group_items_by_user(late), split.train, early)


def tune_sgd(model: EmbeddingModel, data: WarmStartData, base: SgdFoldInConfig,
             learning_rates=(1e-3, 3e-3, 1e-2, 3e-2, 1e-1),
             mixes=(0.05, 0.1, 0.25, 0.5), metric="NDCG@10", ks=(5, 10)):
    """Grid search over step size and mean-mix weight. Returns (best config, table)."""
    best, best_val, table = None, -math.inf, []
    for eta, mu in itertools.product(learning_rates, mixes):
        cfg = SgdFoldInConfig(base.steps, eta, mu, base.init)
        try:
            res = evaluate_strategy(model, data, "sgd", EvalConfig(ks=ks, sgd=cfg))
            val = res.metrics.get(metric, -math.inf)
        except FoldInDivergedError:
            val = -math.inf
        table.append((eta, mu, val))
        if val > best_val:
            best, best_val = cfg, val
    if best is None:
        raise FoldInDivergedError(base.steps, math.inf)
    return best, table


# ----------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    results: list[StrategyResult]
    ks: tuple[int, ...] = (5, 10)
    fingerprints: dict[str, str] = field(default_factory=dict)

    def metric_names(self) -> list[str]:
        return ([f"HR@{k}" for k in self.ks] + [f"NDCG@{k}" for k in self.ks]
                + [f"coverage@{max(self.ks)}"])

    def row(self, strategy: str) -> StrategyResult:
        for r in self.results:
            if r.strategy == strategy:
                return r
        raise KeyError(strategy)

    def format_table(self) -> str:
        names = self.metric_names()
        head = f"{'strategy':<10}" + "".join(f"{n:>13}" for n in names) + f"{'sec/user':>12}{'setup_s':>10}{'users':>8}"
        lines = [head, "-" * len(head)]
        for r in self.results:
            vals = "".join(f"{r.metrics.get(n, float('nan')):>13.4f}" for n in names)
            ts = r.timing_stats()
            lines.append(f"{r.strategy:<10}{vals}{ts['sec_per_user']:>12.3g}{r.setup_s:>10.3g}{r.n_users:>8d}")
        return "\n".join(lines)

    def write_metrics_csv(self, path) -> None:
        names = self.metric_names()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", *names, "n_users", "n_cold"])
            for r in self.results:
                w.writerow([r.strategy, *(f"{r.metrics.get(n, float('nan')):.6f}" for n in names),
                            r.n_users, r.n_cold])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "n_users", "mean_s", "p50_s", "p99_s", "sec_per_user", "setup_s"])
            for r in self.results:
                ts = r.timing_stats()
                w.writerow([r.strategy, len(r.times_ns), f"{ts['mean']:.9f}", f"{ts['p50']:.9f}",
                            f"{ts['p99']:.9f}", f"{ts['sec_per_user']:.9f}", f"{r.setup_s:.6f}"])


# ----------------------------------------------------------------------------
# scaling benchmark


@dataclass(frozen=True)
class ScalingRow:
    strategy: str
    n_items: int
    rank: int
    trials: int
    mean_s: float
    std_s: float
    p50_s: float


@dataclass
class ScalingTable:
    rows: list[ScalingRow] = field(default_factory=list)
    partial: bool = False
    setup_s: dict[int, float] = field(default_factory=dict)

    HEADER = ("strategy", "n_items", "rank", "trials", "mean_s", "std_s", "p50_s")

    def times(self, strategy: str):
        rows = [r for r in self.rows if r.strategy == strategy]
        return np.array([r.n_items for r in rows]), np.array([r.mean_s for r in rows])

    def slope(self, strategy: str) -> float:
        return fit_loglog_slope(*self.times(strategy))

    def ratio(self, slow: str, fast: str) -> dict[int, float]:
        n_s, t_s = self.times(slow)
        n_f, t_f = self.times(fast)
        fast_by_n = dict(zip(n_f.tolist(), t_f.tolist()))
        return {n: t / fast_by_n[n] for n, t in zip(n_s.tolist(), t_s.tolist()) if n in fast_by_n}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for r in self.rows:
                w.writerow([r.strategy, r.n_items, r.rank, r.trials,
                            f"{r.mean_s:.9g}", f"{r.std_s:.9g}", f"{r.p50_s:.9g}"])


def fit_loglog_slope(sizes, times) -> float:
    """Least-squares slope of log(time) against log(size)."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)[0])


def zipf_popularity(n_items: int, exponent: float = 1.1) -> np.ndarray:
    p = np.arange(1, n_items + 1, dtype=np.float64) ** -exponent
    return p / p.sum()


def synthetic_model(n_items: int, rank: int, rng, n_users: int = 256,
                    mean_history: float = 20.0, exponent: float = 1.1) -> EmbeddingModel:
    """Random UltraGCN-shaped model whose item degrees follow a Zipf law."""
    popularity = zipf_popularity(n_items, exponent)
    total = int(n_users * mean_history)
    degrees = np.floor(popularity * total * 50).astype(np.int64)
    degrees = degrees[rng.permutation(n_items)]
    user_deg = np.maximum(1, rng.poisson(mean_history, n_users))
    stats = GraphStats.from_degrees(user_deg, degrees)
    # columns of V have unit expected norm, which keeps SGD step sizes N-independent
    V = rng.standard_normal((n_items, rank)) / math.sqrt(n_items)
    U = rng.standard_normal((n_users, rank)) / math.sqrt(rank)
    return EmbeddingModel(ULTRAGCN, U, V, stats, lam=1.0)


def synthetic_requests(n_items: int, count: int, rng, mean_history: float = 20.0,
                       exponent: float = 1.1, n_users: int = 256) -> list[FoldInRequest]:
    """Warm users with power-law history lengths and Zipf-distributed items."""
    cdf = np.cumsum(zipf_popularity(n_items, exponent))
    perm = rng.permutation(n_items)
    shape = 2.5  # Pareto tail; mean of 5 + scale * pareto is ~ mean_history
    scale = (mean_history - 5.0) * (shape - 1.0)
    reqs = []
    for t in range(count):
        length = int(min(n_items, 5 + scale * rng.pareto(shape)))
        draws = np.searchsorted(cdf, rng.random(length), side="right")
        items = np.unique(perm[np.minimum(draws, n_items - 1)])
        deg = len(items)
        reqs.append(FoldInRequest(t % n_users, items, math.sqrt(deg + 1.0) / deg))
    return reqs


def scaling_bench(rank: int = 32, sizes=(10**3, 10**4, 10**5, 10**6), trials: int = 100,
                  seed: int = 0, strategies=("linear", "sgd"), sgd_steps: int = 50,
                  sgd_learning_rate: float = 0.1, sgd_max_size: int | None = None,
                  sgd_trials: int | None = None) -> ScalingTable:
    """Time per-user fold-in over synthetic catalogues of increasing size.

    Plan build time is excluded from the per-user figures and kept in
    ``setup_s``. Each timed series is preceded by discarded warm-up calls.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if trials < 10:
        raise ValueError("trials must be >= 10")
    table = ScalingTable()
    sgd_cfg = SgdFoldInConfig(steps=sgd_steps, learning_rate=sgd_learning_rate, mix=0.0, init="zero")
    for n in sizes:
        rng = np.random.default_rng([seed, n])
        try:
            model = synthetic_model(n, rank, rng)
            t0 = time.perf_counter()
            plan = build_plan(model) if "linear" in strategies else None
            table.setup_s[n] = time.perf_counter() - t0
            reqs = synthetic_requests(n, trials, rng)
            e_mean = model.mean_user_embedding()
            for strategy in strategies:
                if strategy == "linear":
                    fn, series = (lambda r: linear_foldin(plan, r)), reqs
                elif strategy == "sgd":
                    if sgd_max_size is not None and n > sgd_max_size:
                        continue
                    series = reqs[: sgd_trials or trials]
                    fn = lambda r: sgd_foldin(model, r, sgd_cfg, e_mean)  # noqa: E731
                else:
                    raise ValueError(f"strategy {strategy!r} is not benchmarked")
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NumericalWarning)
                    _, times = _timed(fn, series)
                t = times / 1e9
                table.rows.append(ScalingRow(strategy, n, rank, len(t), float(t.mean()),
                                             float(t.std()), float(np.median(t))))
                log.info("%s N=%d mean=%.3gs", strategy, n, t.mean())
            del model, plan
        except MemoryError:
            log.warning("out of memory at N=%d; table is partial", n)
            table.partial = True
            break
    return table
