"""Command-line entry point.

Subcommands: simulate, estimate, evaluate, fpr-dist, tradeoff. Every run
writes its outputs plus exactly one manifest.json (resolved configuration,
input digests, tool version, wall-clock duration, output list) into --out.
Runs are idempotent: identical inputs and seeds produce byte-identical
outputs. MIA_AUDIT_THREADS caps kernel parallelism when the numba backend
is active.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .calibration import (
    Evaluator,
    EvalRow,
    Strategy,
    write_fpr_csv,
    write_report_csv,
    write_report_json,
)
from .fp_sim import SimConfig, simulate, write_sim_csv, write_sim_summary_json
from .grid import MiaGrid, load_grid, save_grid, subset_models
from .shadow_stats import LeaveOneOut, Oracle, Pooled, apply_fpc, estimate_stats, write_stats_json
from .tradeoff import empirical_tradeoff, gaussian_tradeoff_curve, write_curve_csv

DEFAULT_ALPHAS = (0.001, 0.01, 0.1)
ALL_STRATEGIES = tuple(s.value for s in Strategy)


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(path.rglob("*")):
            if child.is_file():
                h.update(child.name.encode())
                h.update(child.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


class _Run:
    """Collects inputs/outputs of one CLI invocation for the manifest."""

    def __init__(self, command: str, out_dir: Path, config: dict):
        self.command = command
        self.out_dir = out_dir
        self.config = {
            k: v
            for k, v in config.items()
            if k != "func" and isinstance(v, (str, int, float, bool, type(None)))
        }
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.t0 = time.monotonic()
        out_dir.mkdir(parents=True, exist_ok=True)

    def add_input(self, path) -> None:
        p = Path(path)
        self.inputs[str(p)] = _digest(p)

    def output_path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "tool_version": __version__,
            "duration_seconds": round(time.monotonic() - self.t0, 3),
            "outputs": self.outputs,
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )


def _parse_floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise SystemExit(f"error: could not parse {name} list {text!r}")
    if not vals:
        raise SystemExit(f"error: empty {name} list")
    return vals


def _parse_ints(text: str, name: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise SystemExit(f"error: could not parse {name} list {text!r}")


def _default_m_values(n_models: int) -> list[int]:
    vals = [m for m in (2 ** k for k in range(3, 63)) if m < n_models]
    vals.append(n_models)
    return vals


def _check_alphas(alphas) -> None:
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise SystemExit(f"error: alpha must be in (0, 1), got {a}")


def _load_input_grid(args, run: _Run) -> MiaGrid:
    path = Path(args.grid)
    if not path.exists():
        raise SystemExit(f"error: grid {path} does not exist")
    run.add_input(path)
    return load_grid(path, format=getattr(args, "format", None))


def _make_stats(grid: MiaGrid, mode: str, target_models: int | None, args):
    if mode == "pooled":
        stats = estimate_stats(grid, Pooled())
    elif mode == "loo":
        stats = estimate_stats(grid, LeaveOneOut())
    elif mode == "oracle":
        k = target_models if target_models is not None else grid.n_models
        if not 1 <= k <= grid.n_models:
            raise SystemExit(
                f"error: --target-models must be in [1, {grid.n_models}], got {k}"
            )
        stats = estimate_stats(grid, Oracle(tuple(range(k))))
    else:  # pragma: no cover
        raise SystemExit(f"error: unknown mode {mode!r}")
    if args.fpc:
        if args.n_train is None or args.n_full is None:
            raise SystemExit("error: --fpc requires --n-train and --n-full")
        stats = apply_fpc(stats, args.n_train, args.n_full)
    return stats


def cmd_simulate(args) -> int:
    try:
        config = SimConfig(
            n_full=args.n_full,
            n_train=args.n_train,
            dim=args.dim,
            sigma=args.sigma,
            n_models=args.models,
            seed=args.seed,
            with_replacement=args.with_replacement,
        )
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    run = _Run("simulate", Path(args.out), vars(args) | {"tool": "mia-audit"})
    grid, result = simulate(config)
    if args.format == "csv":
        save_grid(grid, run.output_path("grid"), format="csv")
    else:
        save_grid(grid, run.output_path("grid.miag"), format="binary")
    write_sim_csv(result, run.output_path("sim_result.csv"))
    write_sim_summary_json(result, run.output_path("summary.json"))
    run.finish()
    return 0


def cmd_estimate(args) -> int:
    run = _Run("estimate", Path(args.out), vars(args))
    grid = _load_input_grid(args, run)
    stats = _make_stats(grid, "pooled", None, args)
    write_stats_json(stats, run.output_path("stats.json"))
    run.finish()
    return 0


def cmd_evaluate(args) -> int:
    alphas = _parse_floats(args.alphas, "alpha")
    _check_alphas(alphas)
    try:
        strategies = [Strategy.parse(s) for s in args.strategies.split(",") if s.strip()]
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    if not strategies:
        raise SystemExit("error: empty strategy list")
    run = _Run("evaluate", Path(args.out), vars(args))
    grid = _load_input_grid(args, run)

    if args.m_values:
        m_values = _parse_ints(args.m_values, "m")
        for m in m_values:
            if not 1 <= m <= grid.n_models:
                raise SystemExit(
                    f"error: m value {m} outside [1, {grid.n_models}]"
                )
    else:
        m_values = _default_m_values(grid.n_models)

    rows: list[EvalRow] = []
    for m_prime in m_values:
        try:
            if args.mode == "oracle":
                stats = _make_stats(grid, "oracle", m_prime, args)
                ev = Evaluator(grid, stats)
            else:
                sub = subset_models(grid, m_prime, args.subset, args.seed)
                stats = _make_stats(sub, args.mode, None, args)
                ev = Evaluator(sub, stats)
        except ValueError as exc:
            for strategy in strategies:
                for alpha in alphas:
                    rows.append(
                        EvalRow(
                            strategy=strategy.value,
                            alpha=alpha,
                            m_used=m_prime,
                            tpr=math.nan,
                            realized_fpr=math.nan,
                            threshold=math.nan,
                            n_scores_in=0,
                            n_scores_out=0,
                            degenerate_columns=grid.n_samples,
                            warning=f"evaluation_failed:{exc}",
                        )
                    )
            print(f"warning: M'={m_prime}: {exc}", file=sys.stderr)
            continue
        for strategy in strategies:
            for alpha in alphas:
                rows.append(ev.evaluate(strategy, alpha))

    write_report_csv(rows, run.output_path("report.csv"))
    write_report_json(rows, run.output_path("report.json"))
    run.finish()
    return 0


def cmd_fpr_dist(args) -> int:
    alpha = args.alpha
    _check_alphas([alpha])
    try:
        strategy = Strategy.parse(args.strategy)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    run = _Run("fpr-dist", Path(args.out), vars(args))
    grid = _load_input_grid(args, run)
    stats = _make_stats(grid, args.mode, args.target_models, args)
    ev = Evaluator(grid, stats)
    ids, fpr_x = ev.fpr_distribution(strategy, alpha)
    write_fpr_csv(
        ((sid, f, strategy.value, alpha) for sid, f in zip(ids, fpr_x)),
        run.output_path("fpr_dist.csv"),
    )
    run.finish()
    return 0


def cmd_tradeoff(args) -> int:
    run = _Run("tradeoff", Path(args.out), vars(args))
    if args.gaussian_delta is not None:
        if args.gaussian_delta < 0:
            raise SystemExit("error: --gaussian-delta must be nonnegative")
        alphas = (
            _parse_floats(args.alpha_grid, "alpha")
            if args.alpha_grid
            else np.linspace(0.005, 0.995, 199)
        )
        _check_alphas(alphas)
        curve = gaussian_tradeoff_curve(args.gaussian_delta, np.sort(np.unique(alphas)))
    else:
        if args.grid is None or args.column is None:
            raise SystemExit(
                "error: tradeoff needs --gaussian-delta or --grid with --column"
            )
        grid = _load_input_grid(args, run)
        ids = grid.column_ids()
        if args.column in ids:
            col = ids.index(args.column)
        else:
            try:
                col = int(args.column)
            except ValueError:
                raise SystemExit(f"error: unknown column {args.column!r}")
            if not 0 <= col < grid.n_samples:
                raise SystemExit(f"error: column index {col} out of range")
        scores = grid.scores[:, col]
        member = grid.mask[:, col]
        if member.all() or not member.any():
            raise SystemExit(f"error: column {args.column} lacks in or out scores")
        curve = empirical_tradeoff(scores[~member], scores[member])
    write_curve_csv(curve, run.output_path("curve.csv"))
    run.finish()
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory for this run")
    p.add_argument("--seed", type=int, default=0, help="RNG seed where applicable")
    p.add_argument(
        "--format",
        choices=("csv", "binary"),
        default=None,
        help="grid file format (default: binary for .miag paths, csv for directories)",
    )


def _add_fpc(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--fpc",
        action="store_true",
        help="inflate sigma estimates by the finite population correction",
    )
    p.add_argument("--n-train", type=int, default=None, help="training-set size N")
    p.add_argument("--n-full", type=int, default=None, help="superset size N+")


def _add_mode(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--mode",
        choices=("pooled", "loo", "oracle"),
        default="loo",
        help="estimation pool: all rows, all-but-own-row, or all-but-target-row",
    )
    p.add_argument(
        "--target-models",
        type=int,
        default=None,
        help="oracle mode: number of leading rows evaluated as targets",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mia-audit",
        description="Membership-inference vulnerability evaluation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="finite-population bias simulation")
    p.add_argument("--n-full", type=int, required=True, help="superset size N+")
    p.add_argument("--n-train", type=int, required=True, help="per-model training size N")
    p.add_argument("--dim", type=int, required=True, help="point dimension d")
    p.add_argument("--models", type=int, required=True, help="number of models M")
    p.add_argument("--sigma", type=float, default=1.0, help="population std per component")
    p.add_argument(
        "--with-replacement",
        action="store_true",
        help="iid baseline: sample training sets with replacement",
    )
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="per-sample stats JSON from a grid (pooled)")
    p.add_argument("--grid", required=True, help="grid file or csv directory")
    _add_fpc(p)
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="TPR at fixed FPR across strategies")
    p.add_argument("--grid", required=True, help="grid file or csv directory")
    p.add_argument(
        "--alphas",
        default=",".join(str(a) for a in DEFAULT_ALPHAS),
        help="comma-separated target FPRs",
    )
    p.add_argument(
        "--strategies",
        default=",".join(ALL_STRATEGIES),
        help=f"comma-separated strategy names ({', '.join(ALL_STRATEGIES)})",
    )
    p.add_argument(
        "--m-values",
        default=None,
        help="comma-separated model counts (default: powers of two up to M)",
    )
    p.add_argument(
        "--subset",
        choices=("first", "random"),
        default="first",
        help="row selection when restricting to M' models",
    )
    _add_mode(p)
    _add_fpc(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fpr-dist", help="per-sample FPR distribution at a threshold")
    p.add_argument("--grid", required=True, help="grid file or csv directory")
    p.add_argument("--strategy", required=True, help="strategy name")
    p.add_argument("--alpha", type=float, required=True, help="target FPR")
    _add_mode(p)
    _add_fpc(p)
    _add_common(p)
    p.set_defaults(func=cmd_fpr_dist)

    p = sub.add_parser("tradeoff", help="empirical or Gaussian trade-off curve")
    p.add_argument("--gaussian-delta", type=float, default=None, help="mean gap / sigma")
    p.add_argument("--alpha-grid", default=None, help="comma-separated alphas")
    p.add_argument("--grid", default=None, help="grid file or csv directory")
    p.add_argument("--column", default=None, help="sample id or column index")
    _add_common(p)
    p.set_defaults(func=cmd_tradeoff)
    return parser


def _apply_thread_cap() -> None:
    cap = os.environ.get("MIA_AUDIT_THREADS")
    if cap and kernels.ACTIVE_BACKEND == "numba":
        import numba

        try:
            numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))
        except ValueError as exc:
            print(f"warning: MIA_AUDIT_THREADS ignored ({exc})", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_thread_cap()
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
