"""Planted group-sparse regression across noise levels.

Generates the synthetic datasets, runs group selection on each one and writes
per-SNR support AUC and test R^2 to OUT/regress/curves.csv.

    python3 scripts/regression_snr_sweep.py --out runs/sweep --d 100 --n 200 --reps 10
"""
import argparse
import csv
import sys
from pathlib import Path

from infoproj.harness.cli import main as cli


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    ap.add_argument("--d", type=int, default=1000)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--snr-list", default="10000,1000,100,10,1,0.1")
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    data = args.out / "data"
    code = cli(["synth", "--out", str(data), "--d", str(args.d), "--n", str(args.n),
                "--reps", str(args.reps), "--seed", str(args.seed), "--snr-list", args.snr_list,
                "--format", "bin"])
    if code:
        return code
    code = cli(["regress", "--data", str(data), "--out", str(args.out / "regress"),
                "--m", str(args.m), "--workers", str(args.workers), "--seed", str(args.seed)])
    if code:
        return code
    with open(args.out / "regress" / "curves.csv") as fh:
        for row in csv.reader(fh):
            print("\t".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(run())
