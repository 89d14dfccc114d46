"""Per-sample in/out Gaussian estimates from a score grid.

Supports three estimation pools: all rows (pooled), all rows except the row
being scored (leave-one-out, the efficient evaluation that recycles every
model as a target), and all rows except a designated target row (oracle).
Leave-one-out views are materialized from one O(MN) moment pass plus O(N)
downdates per row. The finite population correction for training sets
subsampled without replacement is applied as a scalar inflation of both
sigma estimates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .grid import MiaGrid

__all__ = [
    "Pooled",
    "LeaveOneOut",
    "Oracle",
    "EstimationMode",
    "PerSampleStats",
    "LooStats",
    "estimate_stats",
    "apply_fpc",
    "fpc_factor",
    "lira_score",
    "write_stats_json",
    "read_stats_json",
]


@dataclass(frozen=True)
class Pooled:
    """Estimate from all M rows, no exclusion."""


@dataclass(frozen=True)
class LeaveOneOut:
    """For each target row m, estimate from the other M-1 rows."""


@dataclass(frozen=True)
class Oracle:
    """Estimate from all rows except the current target row, evaluating only
    the designated target rows."""

    target_rows: tuple[int, ...]


EstimationMode = Pooled | LeaveOneOut | Oracle


@dataclass(frozen=True)
class PerSampleStats:
    """Per-column Gaussian parameters with group counts.

    Columns whose estimation pool cannot support both groups are flagged
    degenerate and carry NaN sigmas; downstream aggregation skips them.
    """

    mu_in: np.ndarray
    mu_out: np.ndarray
    sigma_in: np.ndarray
    sigma_out: np.ndarray
    n_in: np.ndarray
    n_out: np.ndarray
    degenerate: np.ndarray
    fpc_applied: bool = False
    sampling_ratio: float | None = None
    sample_ids: tuple[str, ...] | None = None

    @property
    def n_columns(self) -> int:
        return self.mu_in.shape[0]

    def delta(self) -> np.ndarray:
        return self.mu_in - self.mu_out

    def column_ids(self) -> list[str]:
        if self.sample_ids is not None:
            return list(self.sample_ids)
        return [f"s{x:06d}" for x in range(self.n_columns)]


def _sigma_from_m2(m2: np.ndarray, n: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(n >= 2, np.maximum(m2, 0.0) / np.maximum(n - 1, 1), np.nan)
    return np.sqrt(var)


@dataclass(frozen=True)
class LooStats:
    """Leave-one-out stats view over a grid.

    Holds the full-pool column moments; `row(m)` yields the per-column stats
    with row m removed from its own group, computed by moment downdates.
    The same machinery serves oracle mode, where only the designated target
    rows are ever scored.
    """

    grid: MiaGrid
    n_in: np.ndarray
    mean_in: np.ndarray
    m2_in: np.ndarray
    n_out: np.ndarray
    mean_out: np.ndarray
    m2_out: np.ndarray
    degenerate: np.ndarray
    sigma_inflation: float = 1.0
    fpc_applied: bool = False
    sampling_ratio: float | None = None
    target_rows: tuple[int, ...] | None = None

    @property
    def n_columns(self) -> int:
        return self.n_in.shape[0]

    def row(self, m: int) -> PerSampleStats:
        """Stats excluding row m, equal to a from-scratch recomputation on
        the grid with that row deleted (up to rounding)."""
        scores = self.grid.scores[m]
        member = self.grid.mask[m]
        n_in_f = self.n_in.astype(np.float64)
        n_out_f = self.n_out.astype(np.float64)

        with np.errstate(divide="ignore", invalid="ignore"):
            mu_in_d = (n_in_f * self.mean_in - scores) / (n_in_f - 1.0)
            m2_in_d = self.m2_in - (scores - self.mean_in) * (scores - mu_in_d)
            mu_out_d = (n_out_f * self.mean_out - scores) / (n_out_f - 1.0)
            m2_out_d = self.m2_out - (scores - self.mean_out) * (scores - mu_out_d)

        mu_in = np.where(member, mu_in_d, self.mean_in)
        m2_in = np.where(member, m2_in_d, self.m2_in)
        n_in = self.n_in - member.astype(np.int64)
        mu_out = np.where(member, self.mean_out, mu_out_d)
        m2_out = np.where(member, self.m2_out, m2_out_d)
        n_out = self.n_out - (~member).astype(np.int64)

        degenerate = self.degenerate | (n_in < 2) | (n_out < 2)
        sigma_in = _sigma_from_m2(m2_in, n_in) * self.sigma_inflation
        sigma_out = _sigma_from_m2(m2_out, n_out) * self.sigma_inflation
        ids = tuple(self.grid.sample_ids) if self.grid.sample_ids is not None else None
        return PerSampleStats(
            mu_in=mu_in,
            mu_out=mu_out,
            sigma_in=sigma_in,
            sigma_out=sigma_out,
            n_in=n_in,
            n_out=n_out,
            degenerate=degenerate,
            fpc_applied=self.fpc_applied,
            sampling_ratio=self.sampling_ratio,
            sample_ids=ids,
        )


def estimate_stats(grid: MiaGrid, mode: EstimationMode = Pooled()):
    """Estimate per-sample in/out moments from the grid.

    Returns PerSampleStats for Pooled mode and a LooStats view for
    LeaveOneOut/Oracle (one O(MN) pass; each row view is O(N)).
    """
    n_in, mean_in, m2_in, n_out, mean_out, m2_out = kernels.column_moments(
        grid.scores, grid.mask
    )
    ids = tuple(grid.sample_ids) if grid.sample_ids is not None else None

    if isinstance(mode, Pooled):
        degenerate = (n_in < 2) | (n_out < 2)
        sigma_in = _sigma_from_m2(m2_in, n_in)
        sigma_out = _sigma_from_m2(m2_out, n_out)
        degenerate = degenerate | ~(sigma_in > 0) | ~(sigma_out > 0)
        return PerSampleStats(
            mu_in=mean_in,
            mu_out=mean_out,
            sigma_in=sigma_in,
            sigma_out=sigma_out,
            n_in=n_in,
            n_out=n_out,
            degenerate=degenerate,
            sample_ids=ids,
        )

    if isinstance(mode, Oracle):
        n_rows = grid.n_models
        targets = tuple(int(t) for t in mode.target_rows)
        if not targets:
            raise ValueError("oracle mode needs at least one target row")
        if min(targets) < 0 or max(targets) >= n_rows:
            raise ValueError(f"target rows out of range for M={n_rows}")
    elif isinstance(mode, LeaveOneOut):
        targets = None
    else:
        raise TypeError(f"unknown estimation mode {mode!r}")

    # Exclusion removes one observation from one group, so both groups must
    # keep >= 2 observations in the worst case.
    degenerate = (n_in < 3) | (n_out < 3)
    sigma_in_full = _sigma_from_m2(m2_in, n_in)
    sigma_out_full = _sigma_from_m2(m2_out, n_out)
    degenerate = degenerate | ~(sigma_in_full > 0) | ~(sigma_out_full > 0)
    return LooStats(
        grid=grid,
        n_in=n_in,
        mean_in=mean_in,
        m2_in=m2_in,
        n_out=n_out,
        mean_out=mean_out,
        m2_out=m2_out,
        degenerate=degenerate,
        target_rows=targets,
    )


def fpc_factor(n_train: int, n_full: int) -> float:
    """Finite population correction 1 - N/N+ for training sets of size
    n_train subsampled without replacement from a superset of n_full."""
    if not 0 < n_train < n_full:
        raise ValueError(f"need 0 < n_train < n_full, got {n_train}, {n_full}")
    return 1.0 - n_train / n_full


def apply_fpc(stats, n_train: int, n_full: int):
    """Inflate sigma estimates by 1/sqrt(FPC).

    Empirical sigmas estimated from models trained on overlapping subsets of
    one finite superset are biased small by sqrt(FPC); dividing by it
    recovers the independent-draw scale. Works on PerSampleStats and
    LooStats alike and is undone by multiplying sigmas with sqrt(FPC).
    """
    fpc = fpc_factor(n_train, n_full)
    ratio = n_train / n_full
    inflation = 1.0 / math.sqrt(fpc)
    if isinstance(stats, PerSampleStats):
        return replace(
            stats,
            sigma_in=stats.sigma_in * inflation,
            sigma_out=stats.sigma_out * inflation,
            fpc_applied=True,
            sampling_ratio=ratio,
        )
    if isinstance(stats, LooStats):
        return replace(
            stats,
            sigma_inflation=stats.sigma_inflation * inflation,
            fpc_applied=True,
            sampling_ratio=ratio,
        )
    raise TypeError(f"cannot apply FPC to {type(stats).__name__}")


def lira_score(s, mu_in, sigma_in, mu_out, sigma_out):
    """Log-likelihood ratio log N(s; mu_in, sigma_in^2) - log N(s; mu_out,
    sigma_out^2), evaluated in log space. Accepts scalars or arrays."""
    s = np.asarray(s, dtype=np.float64)
    sigma_in = np.asarray(sigma_in, dtype=np.float64)
    sigma_out = np.asarray(sigma_out, dtype=np.float64)
    if np.any(sigma_in <= 0) or np.any(sigma_out <= 0):
        raise ValueError("lira_score requires positive sigmas")
    z_in = (s - mu_in) / sigma_in
    z_out = (s - mu_out) / sigma_out
    out = np.log(sigma_out) - np.log(sigma_in) - 0.5 * z_in * z_in + 0.5 * z_out * z_out
    return float(out) if out.ndim == 0 else out


def write_stats_json(stats: PerSampleStats, path) -> None:
    """Serialize per-column records to the stats JSON interchange format."""
    ids = stats.column_ids()
    records = []
    for x in range(stats.n_columns):
        records.append(
            {
                "sample_id": ids[x],
                "mu_in": float(stats.mu_in[x]),
                "mu_out": float(stats.mu_out[x]),
                "sigma_in": _json_float(stats.sigma_in[x]),
                "sigma_out": _json_float(stats.sigma_out[x]),
                "n_in": int(stats.n_in[x]),
                "n_out": int(stats.n_out[x]),
                "degenerate": bool(stats.degenerate[x]),
                "fpc_applied": bool(stats.fpc_applied),
                "sampling_ratio": stats.sampling_ratio,
            }
        )
    Path(path).write_text(json.dumps(records, indent=2), encoding="utf-8")


def read_stats_json(path) -> PerSampleStats:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    if not records:
        raise ValueError(f"{path}: empty stats file")

    def arr(key, dtype=np.float64, none=np.nan):
        return np.asarray(
            [none if r[key] is None else r[key] for r in records], dtype=dtype
        )

    first = records[0]
    return PerSampleStats(
        mu_in=arr("mu_in"),
        mu_out=arr("mu_out"),
        sigma_in=arr("sigma_in"),
        sigma_out=arr("sigma_out"),
        n_in=arr("n_in", np.int64, 0),
        n_out=arr("n_out", np.int64, 0),
        degenerate=np.asarray([bool(r["degenerate"]) for r in records]),
        fpc_applied=bool(first["fpc_applied"]),
        sampling_ratio=first["sampling_ratio"],
        sample_ids=tuple(r["sample_id"] for r in records),
    )


def _json_float(v: float):
    v = float(v)
    return None if math.isnan(v) else v
