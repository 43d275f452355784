"""Command-line entry point: ``warmfold train | foldin | eval | bench | inspect``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time

import numpy as np

from .config import RunConfig, derive_seed, load_config
from .data import (
    filter_min_counts,
    graph_stats,
    ingest,
    read_manifest,
    temporal_split,
    write_manifest,
)
from .errors import FingerprintError, WarmFoldError
from .evaluate import (
    EvalConfig,
    EvalReport,
    FoldInOutcome,
    WarmStartData,
    apply_strategy,
    rank_and_score,
    scaling_bench,
    tune_sgd,
    tuning_data,
)
from .foldin import FoldInExport, build_plan
from .model import PURESVD, ULTRAGCN, load_model, read_header, save_model, train_puresvd, train_ultragcn

log = logging.getLogger("warmfold")

MODEL_FILE = "model.wfld"
PURESVD_FILE = "model_puresvd.wfld"
FULL_FILE = "model_full.wfld"
MANIFEST = "split.manifest"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_split(cfg: RunConfig):
    log_ = ingest(cfg.data_path, cfg.data_format)
    log_ = filter_min_counts(log_, cfg.min_user_count, cfg.min_item_count)
    return log_, temporal_split(log_, cfg.fractions)


def _check_split(cfg: RunConfig, split, out_dir):
    manifest = read_manifest(os.path.join(out_dir, MANIFEST))
    if manifest.get("data_sha256") != _file_sha256(cfg.data_path):
        raise FingerprintError("dataset differs from the one recorded in the split manifest")
    got = (str(split.boundaries[0]), str(split.boundaries[1]))
    if (manifest.get("t1"), manifest.get("t2")) != got:
        raise FingerprintError("split boundaries differ from the manifest")
    return manifest


def _check_model(path, expected: str | None):
    header = read_header(path)
    if expected is not None and header.checksum != expected:
        raise FingerprintError(f"{path}: checksum {header.checksum[:12]} does not match "
                               f"recorded {expected[:12]}")
    return header


# ----------------------------------------------------------------------------
# subcommands


def cmd_train(cfg: RunConfig, args) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    log_, split = _load_split(cfg)
    data = WarmStartData.from_split(split)
    stats = graph_stats(data.train)
    print(f"data: {log_.n_users} users, {log_.n_items} items, {len(log_)} events; "
          f"split train/warm/test = {split.counts()}")

    extra = {"data_sha256": _file_sha256(cfg.data_path)}
    t0 = time.perf_counter()
    if cfg.model_kind == ULTRAGCN:
        model = train_ultragcn(data.train, stats, cfg.train_config())
        hist = model.loss_history
        picks = sorted({0, len(hist) // 4, len(hist) // 2, 3 * len(hist) // 4, len(hist) - 1})
        print("loss curve: " + ", ".join(f"ep{i + 1}={hist[i]:.5f}" for i in picks))
    else:
        model = train_puresvd(data.train, cfg.train.rank, derive_seed(cfg.seed, "puresvd"))
    print(f"trained {cfg.model_kind} (d={model.rank}) in {time.perf_counter() - t0:.1f}s")
    extra["model_sha256"] = save_model(model, os.path.join(out, MODEL_FILE))

    if cfg.model_kind == ULTRAGCN and "svd" in cfg.strategies:
        svd = train_puresvd(data.train, cfg.train.rank, derive_seed(cfg.seed, "puresvd"))
        extra["puresvd_sha256"] = save_model(svd, os.path.join(out, PURESVD_FILE))

    np.savez(os.path.join(out, "graph_stats.npz"), user_degrees=stats.user_degrees,
             item_degrees=stats.item_degrees, beta_u=stats.beta_u, beta_i=stats.beta_i)
    write_manifest(split, os.path.join(out, MANIFEST), **extra)
    print(f"wrote {os.path.join(out, MODEL_FILE)} (sha256 {extra['model_sha256'][:12]})")
    return 0


def _model_path(cfg, args):
    return args.model or os.path.join(cfg.output_dir, MODEL_FILE)


def cmd_foldin(cfg: RunConfig, args) -> int:
    out = cfg.output_dir
    model_path = _model_path(cfg, args)
    _, split = _load_split(cfg)
    manifest = _check_split(cfg, split, out)
    header = _check_model(model_path, manifest.get("model_sha256"))
    model, _ = load_model(model_path)
    data = WarmStartData.from_split(split)
    if len(data.warm) == 0:
        print("0 warm users: nothing to fold in")
        return 0

    sgd_cfg = cfg.sgd
    if cfg.tune_sgd and "sgd" in cfg.strategies:
        sgd_cfg, _ = tune_sgd(model, tuning_data(split), cfg.sgd, ks=cfg.ks)
        print(f"tuned sgd: learning_rate={sgd_cfg.learning_rate} mix={sgd_cfg.mix}")
    eval_cfg = EvalConfig(ks=cfg.ks, sgd=sgd_cfg, train=cfg.train_config())

    svd_model, svd_sha = None, None
    if "svd" in cfg.strategies:
        if model.kind == PURESVD:
            svd_model, svd_sha = model, header.checksum
        else:
            svd_path = os.path.join(out, PURESVD_FILE)
            svd_sha = _check_model(svd_path, manifest.get("puresvd_sha256")).checksum
            svd_model, _ = load_model(svd_path)

    plan = None
    if "linear" in cfg.strategies:
        t0 = time.perf_counter()
        plan = build_plan(model)
        print(f"fold-in plan built in {time.perf_counter() - t0:.3f}s (rank {plan.rank})")

    export = FoldInExport()
    for strategy in cfg.strategies:
        outcome = apply_strategy(model, data, strategy, eval_cfg, plan=plan, svd_model=svd_model)
        scoring_sha = header.checksum
        if strategy == "full":
            scoring_sha = save_model(outcome.model, os.path.join(out, FULL_FILE))
        elif strategy == "svd":
            scoring_sha = svd_sha
        np.savez(os.path.join(out, f"foldin_{strategy}.npz"),
                 users=outcome.users, embeddings=outcome.embeddings, betas=outcome.betas,
                 times_ns=outcome.times_ns, setup_s=outcome.setup_s, n_cold=outcome.n_cold,
                 model_sha256=header.checksum, scoring_sha256=scoring_sha,
                 sgd=np.array([sgd_cfg.steps, sgd_cfg.learning_rate, sgd_cfg.mix]))
        for u, e, t in zip(outcome.users, outcome.embeddings, outcome.times_ns):
            export.add(model_user_id(split, u), strategy, t, e)
        t = outcome.times_ns
        print(f"{strategy:>7}: {len(outcome.users)} warm users, mean {t.mean() / 1e9 if len(t) else 0:.3g} s/user")
    export.write(os.path.join(out, "foldin.csv"))
    return 0


def model_user_id(split, u) -> str:
    return str(split.train.user_ids[int(u)])


def cmd_eval(cfg: RunConfig, args) -> int:
    out = cfg.output_dir
    model_path = _model_path(cfg, args)
    _, split = _load_split(cfg)
    manifest = _check_split(cfg, split, out)
    header = _check_model(model_path, manifest.get("model_sha256"))
    model, _ = load_model(model_path)
    data = WarmStartData.from_split(split)

    results = []
    for strategy in cfg.strategies:
        path = os.path.join(out, f"foldin_{strategy}.npz")
        if not os.path.exists(path):
            raise WarmFoldError(f"missing fold-in output {path}; run `warmfold foldin` first")
        z = np.load(path)
        if str(z["model_sha256"]) != header.checksum:
            raise FingerprintError(f"{path} was produced from a different model")
        scoring = model
        if strategy == "svd" and model.kind != PURESVD:
            svd_path = os.path.join(out, PURESVD_FILE)
            _check_model(svd_path, str(z["scoring_sha256"]))
            scoring, _ = load_model(svd_path)
        elif strategy == "full":
            _check_model(os.path.join(out, FULL_FILE), str(z["scoring_sha256"]))
            scoring, _ = load_model(os.path.join(out, FULL_FILE))
        users = z["users"]
        embs = scoring.user_embeddings[users] if strategy == "full" else z["embeddings"]
        outcome = FoldInOutcome(strategy, scoring, users, embs, z["betas"], z["times_ns"],
                                float(z["setup_s"]), int(z["n_cold"]))
        results.append(rank_and_score(outcome, data, cfg.ks))

    report = EvalReport(results, tuple(cfg.ks), {"model": header.checksum})
    report.write_metrics_csv(os.path.join(out, "metrics.csv"))
    report.write_timing_csv(os.path.join(out, "timing.csv"))
    print(f"model {header.checksum[:12]}")
    print(report.format_table())
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    b = cfg.bench
    rank = args.rank or b.rank
    sizes = tuple(args.sizes) if args.sizes else b.sizes
    os.makedirs(cfg.output_dir, exist_ok=True)
    table = scaling_bench(rank, sizes, b.trials, derive_seed(cfg.seed, "bench"),
                          sgd_steps=b.sgd_steps, sgd_learning_rate=b.sgd_learning_rate,
                          sgd_max_size=b.sgd_max_size)
    path = os.path.join(cfg.output_dir, "scaling.csv")
    table.write_csv(path)
    print(f"{'strategy':<8}{'N':>10}{'mean_s':>14}{'std_s':>14}")
    for r in table.rows:
        print(f"{r.strategy:<8}{r.n_items:>10}{r.mean_s:>14.4g}{r.std_s:>14.3g}")
    for strategy in ("linear", "sgd"):
        n, _ = table.times(strategy)
        if len(n) >= 2:
            print(f"{strategy}: fitted log-log exponent {table.slope(strategy):.3f}")
    for n, ratio in table.ratio("sgd", "linear").items():
        print(f"sgd/linear time ratio at N={n}: {ratio:.1f}x")
    print(f"wrote {path}")
    if table.partial:
        print("table is partial: ran out of memory", file=sys.stderr)
        return 3
    return 0


def cmd_inspect(cfg, args) -> int:
    h = read_header(args.path)
    print(f"magic:    WFLD1")
    print(f"kind:     {h.kind}")
    print(f"users:    {h.n_users}")
    print(f"items:    {h.n_items}")
    print(f"rank:     {h.rank}")
    print(f"lambda:   {h.lam}")
    print(f"checksum: {h.checksum}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="warmfold", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("-c", "--config", help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", help="output directory (overrides run.output_dir)")
        p.add_argument("--seed", type=int, help="run seed (overrides run.seed)")

    p = sub.add_parser("train", help="split the data and train a model")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("foldin", help="fold warm users into a trained model")
    common(p)
    p.add_argument("--model", help="model file (default: <out>/model.wfld)")
    p.set_defaults(func=cmd_foldin)

    p = sub.add_parser("eval", help="rank test users and write metrics")
    common(p)
    p.add_argument("--model", help="model file (default: <out>/model.wfld)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-user fold-in time vs catalogue size")
    common(p)
    p.add_argument("--rank", "-d", type=int, help="embedding size (overrides bench.rank)")
    p.add_argument("--sizes", type=int, nargs="+", help="catalogue sizes")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print a model file header")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = None
        if args.command != "inspect":
            overrides = list(args.set)
            if args.out:
                overrides.append(f"run.output_dir={args.out}")
            if args.seed is not None:
                overrides.append(f"run.seed={args.seed}")
            try:
                cfg = load_config(args.config, overrides)
            except (ValueError, KeyError) as exc:
                print(f"warmfold: config error: {exc}", file=sys.stderr)
                return 1
        return args.func(cfg, args)
    except WarmFoldError as exc:
        print(f"warmfold: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"warmfold: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
