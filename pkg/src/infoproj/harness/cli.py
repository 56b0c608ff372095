"""Batch command line: ``infoproj TASK [flags]``.

Exit codes: 0 success, 1 unexpected error, 2 config/schema error, 3 I/O error,
4 solver error, 5 invalid input data. On failure a JSON object with the error
category and message is printed to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from ..gaussian import NotPositiveDefiniteError
from ..models import DivergenceError
from ..solvers import EnumerationLimitError, ObjectiveError
from .config import TASKS, ConfigError, ExperimentConfig
from .matio import MatrixFormatError
from .tasks import TASK_FUNCS, write_csv

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3, 4, 5


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _sigma2(text: str):
    return text if text in ("auto", "meta") else float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path)
    common.add_argument("--seed", type=_u64)
    common.add_argument("--out")
    common.add_argument("--budget", type=float)
    common.add_argument("--budgets", type=_float_list)
    common.add_argument("--caps", type=_int_list)
    common.add_argument("--groups")
    common.add_argument("--m", type=int)
    common.add_argument("--lazy", type=_bool)
    common.add_argument("--compat-budget", dest="compat_budget", type=_bool)
    common.add_argument("--paper-literal-metric", dest="paper_literal_metric", type=_bool)
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=["csv", "bin"])
    common.add_argument("--sigma2", type=_sigma2)
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--per-view-noise", dest="per_view_noise", type=_bool)
    # synth / bench sizes
    common.add_argument("--snr-list", dest="snr_list", type=_float_list)
    common.add_argument("--reps", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--n-true-groups", dest="n_true_groups", type=int)
    common.add_argument("--group-size", dest="group_size", type=int)
    common.add_argument("--bench-instances", dest="bench_instances", type=int)
    common.add_argument("--bench-d", dest="bench_d", type=int)
    # inputs
    for name in ("precision", "potential", "mean", "covariance", "Z", "y", "T", "data",
                 "prior_precision", "adjacency"):
        common.add_argument(f"--{name.replace('_', '-')}", dest=f"in_{name}")
    common.add_argument("--views", dest="in_views", nargs="+")

    parser = argparse.ArgumentParser(prog="infoproj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub.add_parser(task, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    ns = vars(args)
    inputs = {k[3:]: v for k, v in ns.items() if k.startswith("in_") and v is not None}
    overrides = {k: v for k, v in ns.items() if not k.startswith("in_") and k != "config"}
    overrides["inputs"] = inputs
    return ExperimentConfig.load(args.config, overrides)


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def run(cfg: ExperimentConfig) -> Path:
    """Run one task and write result.json, curves.csv and (maybe) support.csv."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = TASK_FUNCS[cfg.task](cfg, out)
    elapsed = time.perf_counter() - t0
    echo = cfg.to_dict()
    echo.pop("out")  # where results land does not change them
    doc = {
        "task": cfg.task,
        "seed": cfg.seed,
        "config": echo,
        "result": report.result,
        "metrics": report.metrics,
        "timings": {"total_seconds": elapsed},
    }
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable, allow_nan=True)
    (out / "result.json").write_text(text + "\n")
    write_csv(out / "curves.csv", report.curves_header, report.curves)
    if report.support_rows is not None:
        header = ["view", "index"] if cfg.task == "cca" else (
            ["index", "mean"] if cfg.task == "project" else ["index"])
        write_csv(out / "support.csv", header, report.support_rows)
    return out


def _category(exc: BaseException):
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, (OSError, MatrixFormatError)):
        return "io", EXIT_IO
    if isinstance(exc, (NotPositiveDefiniteError, ObjectiveError, EnumerationLimitError,
                        DivergenceError, np.linalg.LinAlgError, FloatingPointError)):
        return "solver", EXIT_SOLVER
    if isinstance(exc, (ValueError, KeyError, IndexError, TypeError)):
        return "input", EXIT_INPUT
    return "internal", EXIT_INTERNAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        run(cfg)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code
        category, code = _category(exc)
        json.dump({"error": category, "type": type(exc).__name__, "message": str(exc)},
                  sys.stderr)
        sys.stderr.write("\n")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
