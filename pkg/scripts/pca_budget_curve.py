"""Variance explained by a group-sparse PPCA factor as the budget grows.

Uses a data matrix from --T, or a synthetic one with a planted sparse factor.
Writes OUT/curves.csv (budget vs variance explained) and prints it.

    python3 scripts/pca_budget_curve.py --out runs/pca --group-size 4
"""
import argparse
import csv
import sys
from pathlib import Path

from infoproj.harness.cli import main as cli
from infoproj.harness.matio import write_matrix
from infoproj.harness.synth import planted_factor_data, rng_stream


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/pca"))
    ap.add_argument("--T", type=Path, help="n x d data matrix (csv or bin)")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--group-size", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=1.0)
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    T_path = args.T
    if T_path is None:
        support = list(range(8, 8 + 3 * args.group_size))
        T, _, _ = planted_factor_data(rng_stream(args.seed), args.n, args.d, support,
                                      noise=args.noise)
        T_path = args.out / "T.bin"
        write_matrix(T_path, T)
    budgets = ",".join(str(k) for k in range(0, args.d + 1, args.group_size))
    code = cli(["pca", "--T", str(T_path), "--out", str(args.out), "--budgets", budgets,
                "--groups", f"uniform:{args.group_size}", "--seed", str(args.seed)])
    if code:
        return code
    with open(args.out / "curves.csv") as fh:
        for row in csv.reader(fh):
            print("\t".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(run())
