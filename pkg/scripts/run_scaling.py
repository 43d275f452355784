"""Per-user fold-in time against catalogue size (linear vs SGD).

    python3 scripts/run_scaling.py --rank 32 --out runs/scaling.csv
"""

import argparse

from warmfold.evaluate import scaling_bench


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--rank", type=int, default=32)
    p.add_argument("--sizes", type=int, nargs="+", default=[10**3, 10**4, 10**5, 10**6])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sgd-steps", type=int, default=50)
    p.add_argument("--sgd-trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="scaling.csv")
    args = p.parse_args()

    table = scaling_bench(args.rank, args.sizes, args.trials, args.seed, sgd_steps=args.sgd_steps,
                          sgd_trials=args.sgd_trials)
    table.write_csv(args.out)
    for r in table.rows:
        print(f"{r.strategy:<7}N={r.n_items:<9d}mean {r.mean_s:.3e}s  std {r.std_s:.1e}s")
    print(f"linear log-log slope {table.slope('linear'):.3f}")
    for n, ratio in table.ratio("sgd", "linear").items():
        print(f"sgd/linear at N={n}: {ratio:.1f}x")
    if table.partial:
        print("partial table: out of memory at the largest size")


if __name__ == "__main__":
    main()
