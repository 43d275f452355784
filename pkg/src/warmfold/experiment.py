"""In-memory train -> fold-in -> evaluate pipeline used by scripts and tests."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .config import RunConfig, derive_seed
from .data import InteractionLog, TemporalSplit, graph_stats, temporal_split
from .evaluate import (
    EvalConfig,
    EvalReport,
    WarmStartData,
    rank_and_score,
    apply_strategy,
    tune_sgd,
    tuning_data,
)
from .foldin import build_plan
from .model import EmbeddingModel, train_puresvd, train_ultragcn

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    report: EvalReport
    split: TemporalSplit
    model: EmbeddingModel
    train_s: float
    sgd_config: object = None
    sgd_grid: list = field(default_factory=list)


def run_experiment(log_: InteractionLog, cfg: RunConfig) -> ExperimentResult:
    split = temporal_split(log_, cfg.fractions)
    data = WarmStartData.from_split(split)
    stats = graph_stats(data.train)

    t0 = time.perf_counter()
    model = train_ultragcn(data.train, stats, cfg.train_config())
    train_s = time.perf_counter() - t0
    log.info("trained UltraGCN in %.1fs (final loss %.4f)", train_s, model.loss_history[-1])

    sgd_cfg, grid = cfg.sgd, []
    if cfg.tune_sgd and "sgd" in cfg.strategies:
        sgd_cfg, grid = tune_sgd(model, tuning_data(split), cfg.sgd, ks=cfg.ks)
        log.info("tuned SGD: eta=%g mu=%g", sgd_cfg.learning_rate, sgd_cfg.mix)

    eval_cfg = EvalConfig(ks=cfg.ks, sgd=sgd_cfg, train=cfg.train_config())
    svd_model = None
    if "svd" in cfg.strategies:
        svd_model = train_puresvd(data.train, cfg.train.rank, derive_seed(cfg.seed, "puresvd"))
    plan = build_plan(model) if "linear" in cfg.strategies else None

    results = []
    for strategy in cfg.strategies:
        outcome = apply_strategy(model, data, strategy, eval_cfg, plan=plan, svd_model=svd_model)
        results.append(rank_and_score(outcome, data, cfg.ks))
        log.info("%s: %s", strategy, results[-1].metrics)
    report = EvalReport(results, tuple(cfg.ks), {"model": model.fingerprint()})
    return ExperimentResult(report, split, model, train_s, sgd_cfg, grid)
