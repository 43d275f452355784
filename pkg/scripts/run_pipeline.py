"""Train, fold in and evaluate on MovieLens-1M, or on a synthetic log of the same shape.

    python3 scripts/run_pipeline.py --ml1m path/to/ratings.dat --out runs/ml1m
    python3 scripts/run_pipeline.py --synthetic --out runs/surrogate --epochs 10
"""

import argparse
import json
import logging
import os
import time

from warmfold.config import RunConfig
from warmfold.data import ingest
from warmfold.experiment import run_experiment
from warmfold.foldin import SgdFoldInConfig
from warmfold.model import TrainConfig
from warmfold.synthetic import latent_factor_log


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ml1m", help="ratings.dat from MovieLens-1M")
    src.add_argument("--synthetic", action="store_true", help="use the latent-factor surrogate")
    p.add_argument("--out", default="runs/pipeline")
    p.add_argument("--rank", type=int, default=64)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--strategies", default="zero,mean,linear,wls,sgd,svd")
    p.add_argument("--no-tune", action="store_true", help="skip the SGD grid search")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    t0 = time.perf_counter()
    if args.ml1m:
        log = ingest(args.ml1m, "ml1m")
    else:
        log = latent_factor_log(seed=args.seed)
    print(f"{log.n_users} users, {log.n_items} items, {len(log)} events, "
          f"density {100 * len(log) / (log.n_users * log.n_items):.2f}%")

    cfg = RunConfig(data_path=args.ml1m or "", train=TrainConfig(rank=args.rank, lam=args.lam, epochs=args.epochs),
                    strategies=tuple(args.strategies.split(",")), sgd=SgdFoldInConfig(),
                    tune_sgd=not args.no_tune, seed=args.seed, output_dir=args.out)
    res = run_experiment(log, cfg)
    total = time.perf_counter() - t0

    os.makedirs(args.out, exist_ok=True)
    res.report.write_metrics_csv(os.path.join(args.out, "metrics.csv"))
    res.report.write_timing_csv(os.path.join(args.out, "timing.csv"))
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"train_s": res.train_s, "total_s": total, "split": res.split.counts(),
                   "sgd": vars(res.sgd_config), "sgd_grid": res.sgd_grid,
                   "loss_history": res.model.loss_history}, fh, indent=1)
    print(res.report.format_table())
    print(f"training {res.train_s:.0f}s, total {total:.0f}s; tuned sgd {vars(res.sgd_config)}")


if __name__ == "__main__":
    main()
