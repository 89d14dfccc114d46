"""Per-sample score standardization and TPR-at-fixed-FPR evaluation.

The standardization maps every column's non-member scores to zero mean and
unit scale (flipping sign so the member mean sits on the positive side),
which makes one global decision threshold enforce the same per-sample false
positive rate for every column. Six evaluation strategies are provided:

naive               pooled raw scores, empirical threshold
pp                  pooled standardized scores, empirical threshold
per-sample          per-column empirical thresholds, averaged TPR
pp-normal           pooled standardized scores, threshold from N(0,1)
pp-t                pooled standardized scores, threshold from a fitted
                    zero-location Student-t
per-sample-normal   per-column TPR at the N(0,1) threshold, averaged

Positives are strict exceedances (score > threshold); empirical thresholds
are the smallest observed non-member score whose strict-exceedance fraction
is at most the target alpha, so realized FPR never exceeds the target.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .grid import MiaGrid
from .numerics import empirical_quantile, fit_student_t_df, normal_cdf, normal_quantile, student_t_quantile
from .shadow_stats import LooStats, PerSampleStats

__all__ = [
    "Strategy",
    "CalibratedGrid",
    "EvalRow",
    "Evaluator",
    "standardize",
    "evaluate",
    "per_sample_fpr_distribution",
    "concat_decomposition_check",
    "DecompositionCheck",
    "analytic_tpr_unequal_variance",
    "write_report_csv",
    "write_report_json",
    "write_fpr_csv",
]


class Strategy(str, Enum):
    CONCAT_NAIVE = "naive"
    CONCAT_PP = "pp"
    AVG_PER_SAMPLE = "per-sample"
    CONCAT_PP_NORMAL = "pp-normal"
    CONCAT_PP_STUDENT_T = "pp-t"
    AVG_PER_SAMPLE_NORMAL = "per-sample-normal"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {name!r}; expected one of {valid}")


# strategies whose threshold comes from observed non-member scores
_EMPIRICAL = {Strategy.CONCAT_NAIVE, Strategy.CONCAT_PP, Strategy.AVG_PER_SAMPLE}


@dataclass(frozen=True)
class CalibratedGrid:
    """Grid after the per-column affine standardization.

    Degenerate columns are dropped; `kept` maps positions back to the source
    grid and `column_ids` names the surviving columns.
    """

    shat: np.ndarray
    mask: np.ndarray
    sign_delta: np.ndarray
    variance_ratio: np.ndarray
    kept: np.ndarray
    column_ids: tuple[str, ...]
    stats: PerSampleStats


def standardize(grid: MiaGrid, stats: PerSampleStats) -> CalibratedGrid:
    """Apply sign(delta) * (s - mu_out) / sigma_out column by column."""
    if stats.n_columns != grid.n_samples:
        raise ValueError(
            f"stats cover {stats.n_columns} columns, grid has {grid.n_samples}"
        )
    kept = ~stats.degenerate
    if not kept.any():
        raise ValueError("no non-degenerate columns to standardize")
    sigma_out = stats.sigma_out[kept]
    if not np.all(sigma_out > 0):
        raise ValueError("sigma_out must be positive on non-degenerate columns")
    # exact-zero estimated gap breaks toward +1 (measure zero for real scores)
    sign = np.where(stats.delta()[kept] >= 0.0, 1.0, -1.0)
    shat = kernels.pooled_standardize(
        np.ascontiguousarray(grid.scores[:, kept]),
        stats.mu_out[kept],
        sigma_out,
        sign,
    )
    ids = tuple(np.asarray(grid.column_ids())[kept])
    return CalibratedGrid(
        shat=shat,
        mask=np.ascontiguousarray(grid.mask[:, kept]),
        sign_delta=sign,
        variance_ratio=stats.sigma_in[kept] / sigma_out,
        kept=kept,
        column_ids=ids,
        stats=stats,
    )


@dataclass(frozen=True)
class EvalRow:
    """One evaluation cell: TPR and realized FPR at a target alpha."""

    strategy: str
    alpha: float
    m_used: int
    tpr: float
    realized_fpr: float
    threshold: float
    n_scores_in: int
    n_scores_out: int
    degenerate_columns: int
    warning: str = ""
    t_df: float | None = None
    t_scale: float | None = None


def _empirical_threshold(sorted_vals: np.ndarray, alpha: float) -> float:
    return empirical_quantile(sorted_vals, 1.0 - alpha)


class Evaluator:
    """Shared precomputation for evaluating many (strategy, alpha) cells on
    one grid with one set of estimated stats.

    Accepts pooled stats (PerSampleStats) or an exclusion view (LooStats);
    with a LooStats view each evaluated row is standardized by stats that
    exclude that row, and in oracle mode only the designated target rows are
    scored while the estimation pool keeps all rows.
    """

    def __init__(self, grid: MiaGrid, stats: PerSampleStats | LooStats):
        if stats.n_columns != grid.n_samples:
            raise ValueError(
                f"stats cover {stats.n_columns} columns, grid has {grid.n_samples}"
            )
        self.grid = grid
        self.stats = stats
        self.kept = ~stats.degenerate
        if not self.kept.any():
            raise ValueError("no non-degenerate columns to evaluate")

        if isinstance(stats, LooStats):
            if stats.grid is not grid:
                raise ValueError("LooStats view was built from a different grid")
            shat_full = kernels.loo_standardize(
                grid.scores,
                grid.mask,
                stats.n_in,
                stats.mean_in,
                stats.m2_in,
                stats.n_out,
                stats.mean_out,
                stats.m2_out,
                self.kept,
                stats.sigma_inflation,
            )
            rows = (
                np.asarray(stats.target_rows, dtype=np.int64)
                if stats.target_rows is not None
                else np.arange(grid.n_models)
            )
            self.eval_rows = rows
        else:
            cal = standardize(grid, stats)
            shat_full = np.zeros_like(grid.scores)
            shat_full[:, self.kept] = cal.shat
            self.eval_rows = np.arange(grid.n_models)

        sel = np.ix_(self.eval_rows, np.flatnonzero(self.kept))
        self.raw = np.ascontiguousarray(grid.scores[sel])
        self.shat = np.ascontiguousarray(shat_full[sel])
        self.mask = np.ascontiguousarray(grid.mask[sel])
        self.m_used = int(self.eval_rows.size)
        self.n_degenerate = int((~self.kept).sum())
        self.kept_ids = tuple(np.asarray(grid.column_ids())[self.kept])

        in_flat = self.mask.ravel()
        self.raw_in = self.raw.ravel()[in_flat]
        self.raw_out_sorted = np.sort(self.raw.ravel()[~in_flat])
        self.shat_in = self.shat.ravel()[in_flat]
        self.shat_out_sorted = np.sort(self.shat.ravel()[~in_flat])
        if self.raw_in.size == 0 or self.raw_out_sorted.size == 0:
            raise ValueError("grid has no member or no non-member scores")
        self._t_fit: tuple[float, float] | None = None
        self._all_kept = np.ones(self.raw.shape[1], dtype=bool)

    def t_fit(self) -> tuple[float, float]:
        if self._t_fit is None:
            self._t_fit = fit_student_t_df(self.shat_out_sorted)
        return self._t_fit

    def _pool_warnings(self, alpha: float, n_out: int) -> list[str]:
        flags = []
        if n_out * alpha < 2.0:
            flags.append("insufficient_out_scores")
        elif n_out * alpha < 10.0:
            flags.append("low_out_count")
        return flags

    def evaluate(self, strategy: Strategy, alpha: float) -> EvalRow:
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        strategy = Strategy(strategy)
        n_in = int(self.raw_in.size)
        n_out = int(self.raw_out_sorted.size)
        flags: list[str] = []
        t_df = t_scale = None

        if strategy is Strategy.CONCAT_NAIVE:
            flags += self._pool_warnings(alpha, n_out)
            tau = _empirical_threshold(self.raw_out_sorted, alpha)
            tpr = float(np.mean(self.raw_in > tau))
            fpr = float(np.mean(self.raw_out_sorted > tau))
        elif strategy is Strategy.CONCAT_PP:
            flags += self._pool_warnings(alpha, n_out)
            tau = _empirical_threshold(self.shat_out_sorted, alpha)
            tpr = float(np.mean(self.shat_in > tau))
            fpr = float(np.mean(self.shat_out_sorted > tau))
        elif strategy is Strategy.CONCAT_PP_NORMAL:
            tau = normal_quantile(1.0 - alpha)
            tpr = float(np.mean(self.shat_in > tau))
            fpr = float(np.mean(self.shat_out_sorted > tau))
        elif strategy is Strategy.CONCAT_PP_STUDENT_T:
            t_df, t_scale = self.t_fit()
            tau = t_scale * student_t_quantile(1.0 - alpha, t_df)
            tpr = float(np.mean(self.shat_in > tau))
            fpr = float(np.mean(self.shat_out_sorted > tau))
        elif strategy is Strategy.AVG_PER_SAMPLE:
            _, tpr_x, fpr_x, n_out_col = kernels.per_column_empirical(
                self.shat, self.mask, self._all_kept, alpha
            )
            valid = n_out_col > 0
            min_out = int(n_out_col[valid].min()) if valid.any() else 0
            if min_out < math.ceil(2.0 / alpha):
                # a per-column threshold at this alpha is not realizable
                flags.append("per_sample_threshold_undefined")
                tpr = math.nan
                fpr = math.nan
                tau = math.nan
            else:
                tpr = float(np.mean(tpr_x[valid]))
                fpr = float(
                    np.sum(fpr_x[valid] * n_out_col[valid]) / np.sum(n_out_col[valid])
                )
                tau = math.nan  # threshold varies per column
        elif strategy is Strategy.AVG_PER_SAMPLE_NORMAL:
            tau = normal_quantile(1.0 - alpha)
            above = self.shat > tau
            in_counts = self.mask.sum(axis=0)
            out_counts = self.mask.shape[0] - in_counts
            valid = (in_counts > 0) & (out_counts > 0)
            tpr_x = (above & self.mask).sum(axis=0)[valid] / in_counts[valid]
            tpr = float(np.mean(tpr_x))
            fpr = float(np.mean(self.shat_out_sorted > tau))
        else:  # pragma: no cover
            raise ValueError(f"unhandled strategy {strategy}")

        if not math.isnan(fpr) and fpr == 0.0:
            flags.append("empty_rejection_region")
        return EvalRow(
            strategy=strategy.value,
            alpha=float(alpha),
            m_used=self.m_used,
            tpr=tpr,
            realized_fpr=fpr,
            threshold=float(tau),
            n_scores_in=n_in,
            n_scores_out=n_out,
            degenerate_columns=self.n_degenerate,
            warning=";".join(flags),
            t_df=t_df,
            t_scale=t_scale,
        )

    def fpr_distribution(self, strategy: Strategy, alpha: float):
        """Per-column strict-exceedance fraction of non-member scores at the
        strategy's threshold, in the strategy's score space.

        Returns (column_ids, fpr_x).
        """
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        strategy = Strategy(strategy)
        if strategy is Strategy.AVG_PER_SAMPLE:
            _, _, fpr_x, n_out_col = kernels.per_column_empirical(
                self.shat, self.mask, self._all_kept, alpha
            )
            valid = n_out_col > 0
            return tuple(np.asarray(self.kept_ids)[valid]), fpr_x[valid]
        if strategy is Strategy.CONCAT_NAIVE:
            space = self.raw
            tau = _empirical_threshold(self.raw_out_sorted, alpha)
        elif strategy is Strategy.CONCAT_PP:
            space = self.shat
            tau = _empirical_threshold(self.shat_out_sorted, alpha)
        elif strategy in (Strategy.CONCAT_PP_NORMAL, Strategy.AVG_PER_SAMPLE_NORMAL):
            space = self.shat
            tau = normal_quantile(1.0 - alpha)
        elif strategy is Strategy.CONCAT_PP_STUDENT_T:
            df, scale = self.t_fit()
            space = self.shat
            tau = scale * student_t_quantile(1.0 - alpha, df)
        else:  # pragma: no cover
            raise ValueError(f"unhandled strategy {strategy}")
        out_counts = (~self.mask).sum(axis=0)
        valid = out_counts > 0
        hits = ((space > tau) & ~self.mask).sum(axis=0)
        fpr_x = hits[valid] / out_counts[valid]
        return tuple(np.asarray(self.kept_ids)[valid]), fpr_x


def evaluate(
    grid: MiaGrid,
    stats: PerSampleStats | LooStats,
    strategy: Strategy,
    alpha: float,
) -> EvalRow:
    """Evaluate one (strategy, alpha) cell; see Evaluator for batch use."""
    return Evaluator(grid, stats).evaluate(strategy, alpha)


def per_sample_fpr_distribution(
    grid: MiaGrid,
    stats: PerSampleStats | LooStats,
    strategy: Strategy,
    alpha: float,
):
    """Per-column FPR_x under the strategy's threshold; see
    Evaluator.fpr_distribution."""
    return Evaluator(grid, stats).fpr_distribution(strategy, alpha)


@dataclass(frozen=True)
class DecompositionCheck:
    fpr_pooled: float
    fpr_weighted: float
    tpr_pooled: float
    tpr_weighted: float


def concat_decomposition_check(grid: MiaGrid, tau: float) -> DecompositionCheck:
    """Pooled FPR/TPR at threshold tau versus the count-weighted mean of the
    per-column rates. The two sides agree up to float summation only: the
    pooled rate of a concatenated grid *is* the expectation of per-column
    rates under the empirical column weights."""
    mask = grid.mask
    scores = grid.scores
    out_total = int((~mask).sum())
    in_total = int(mask.sum())
    if out_total == 0:
        raise ValueError("grid has no non-member scores")
    above = scores > tau
    out_hits_col = (above & ~mask).sum(axis=0)
    in_hits_col = (above & mask).sum(axis=0)
    out_col = (~mask).sum(axis=0)
    in_col = mask.sum(axis=0)

    fpr_pooled = float(out_hits_col.sum() / out_total)
    fpr_weighted = math.fsum(
        (n / out_total) * (h / n) for h, n in zip(out_hits_col, out_col) if n > 0
    )
    if in_total > 0:
        tpr_pooled = float(in_hits_col.sum() / in_total)
        tpr_weighted = math.fsum(
            (n / in_total) * (h / n) for h, n in zip(in_hits_col, in_col) if n > 0
        )
    else:
        tpr_pooled = tpr_weighted = math.nan
    return DecompositionCheck(fpr_pooled, fpr_weighted, tpr_pooled, tpr_weighted)


def analytic_tpr_unequal_variance(
    delta_over_sigma_out: float, variance_ratio: float, alpha: float
) -> float:
    """TPR of the one-sided standardized test: the member distribution is
    N(delta/sigma_out, (sigma_in/sigma_out)^2) and the threshold is the
    (1-alpha) standard normal quantile."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if variance_ratio <= 0:
        raise ValueError("variance_ratio must be positive")
    t = normal_quantile(1.0 - alpha)
    return 1.0 - normal_cdf((t - delta_over_sigma_out) / variance_ratio)


_REPORT_COLUMNS = (
    "strategy",
    "alpha",
    "m_used",
    "tpr",
    "realized_fpr",
    "threshold",
    "n_in",
    "n_out",
    "degenerate_columns",
)


def write_report_csv(rows: list[EvalRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_REPORT_COLUMNS)
        for r in rows:
            w.writerow(
                [
                    r.strategy,
                    f"{r.alpha:.17g}",
                    r.m_used,
                    f"{r.tpr:.17g}",
                    f"{r.realized_fpr:.17g}",
                    f"{r.threshold:.17g}",
                    r.n_scores_in,
                    r.n_scores_out,
                    r.degenerate_columns,
                ]
            )


def write_report_json(rows: list[EvalRow], path) -> None:
    def enc(v):
        if isinstance(v, float) and math.isnan(v):
            return None
        return v

    payload = [
        {
            "strategy": r.strategy,
            "alpha": r.alpha,
            "m_used": r.m_used,
            "tpr": enc(r.tpr),
            "realized_fpr": enc(r.realized_fpr),
            "threshold": enc(r.threshold),
            "n_in": r.n_scores_in,
            "n_out": r.n_scores_out,
            "degenerate_columns": r.degenerate_columns,
            "warning": r.warning,
            "t_df": r.t_df,
            "t_scale": r.t_scale,
        }
        for r in rows
    ]
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def write_fpr_csv(entries, path) -> None:
    """entries: iterable of (sample_id, fpr_x, strategy, alpha) tuples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "fpr_x", "strategy", "alpha"])
        for sid, fpr_x, strategy, alpha in entries:
            w.writerow([sid, f"{fpr_x:.17g}", strategy, f"{alpha:.17g}"])
