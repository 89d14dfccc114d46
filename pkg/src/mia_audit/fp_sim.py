"""Analytical simulator for the finite-population bias of shadow-model
variance estimates.

A fixed superset of points is drawn from an isotropic Gaussian; every model
is the mean of a training subset sampled without replacement from that same
superset, and the per-sample statistic is the inner product of the sample
with the model mean. Because all models share one finite superset, the
per-sample empirical sigmas come out smaller than the independent-draw
analytical sigmas by a factor of sqrt(1 - n_train/n_full); the simulation
measures exactly that ratio. A with-replacement switch provides the
iid baseline in which the effect disappears.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .grid import MiaGrid
from .shadow_stats import fpc_factor

__all__ = [
    "SimConfig",
    "SimResult",
    "RatioSummary",
    "simulate",
    "analytic_sigma",
    "ratio_summary",
    "write_sim_csv",
    "write_sim_summary_json",
]

_RNG_CONTRACT = (
    "pcg64; SeedSequence(seed).spawn(n_models+1); stream 0 draws the "
    "population matrix standard_normal((n_full, dim)) row-major; stream 1+m "
    "draws row m's subset (without replacement: partial Fisher-Yates steps "
    "integers(0, n_full-j) for j=0..n_train-1; with replacement: "
    "integers(0, n_full, n_train))"
)


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; `with_replacement` switches to the iid
    baseline that removes the finite-population effect."""

    n_full: int
    n_train: int
    dim: int
    sigma: float
    n_models: int
    seed: int
    with_replacement: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.n_models < 2:
            raise ValueError(f"n_models must be >= 2, got {self.n_models}")
        if self.n_train < 1:
            raise ValueError(f"n_train must be >= 1, got {self.n_train}")
        if self.with_replacement:
            if self.n_full < 1:
                raise ValueError(f"n_full must be >= 1, got {self.n_full}")
        elif not 0 < self.n_train < self.n_full:
            raise ValueError(
                f"need 0 < n_train < n_full, got {self.n_train}, {self.n_full}"
            )

    @property
    def fpc(self) -> float:
        return fpc_factor(self.n_train, self.n_full)


@dataclass(frozen=True)
class SimResult:
    """Per-sample empirical vs analytical sigmas and their ratios.

    Samples that end up in fewer than two models on either side carry NaN
    in the affected fields.
    """

    config: SimConfig
    norms: np.ndarray
    sigma_emp_in: np.ndarray
    sigma_emp_out: np.ndarray
    sigma_ana_in: np.ndarray
    sigma_ana_out: np.ndarray
    ratio_in: np.ndarray
    ratio_out: np.ndarray

    @property
    def fpc(self) -> float:
        return self.config.fpc


def analytic_sigma(norm_x: float, n_train: int, sigma: float, membership: str) -> float:
    """Independent-draw standard deviation of the inner-product statistic,
    conditioned on the sample's realized norm.

    Non-member: the model mean is an average of n_train iid points, so the
    statistic has sigma * ||x|| / sqrt(n_train). Member: the sample's own
    term contributes a deterministic shift, leaving n_train - 1 random
    terms: sigma * ||x|| * sqrt(n_train - 1) / n_train.
    """
    if norm_x < 0:
        raise ValueError("norm_x must be nonnegative")
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if membership == "out":
        return sigma * norm_x / math.sqrt(n_train)
    if membership == "in":
        return sigma * norm_x * math.sqrt(n_train - 1.0) / n_train
    raise ValueError(f"membership must be 'in' or 'out', got {membership!r}")


def simulate(config: SimConfig) -> tuple[MiaGrid, SimResult]:
    """Run the finite-population simulation.

    Returns the score grid over the full superset (rows are models, mask
    marks training membership) and the per-sample sigma comparison. Output
    is reproducible for a fixed seed: each model row has its own derived
    RNG stream, so row generation order cannot affect the result.
    """
    n_full, n_train = config.n_full, config.n_train
    n_models, dim = config.n_models, config.dim
    streams = np.random.SeedSequence(config.seed).spawn(n_models + 1)
    pop_rng = np.random.Generator(np.random.PCG64(streams[0]))
    points = pop_rng.standard_normal((n_full, dim)) * config.sigma

    mask = np.zeros((n_models, n_full), dtype=bool)
    if config.with_replacement:
        counts = np.zeros((n_models, n_full), dtype=np.float64)
        for m in range(n_models):
            rng = np.random.Generator(np.random.PCG64(streams[m + 1]))
            draw = rng.integers(0, n_full, size=n_train)
            counts[m] = np.bincount(draw, minlength=n_full)
        mask = counts > 0
        sums = counts @ points
    else:
        highs = n_full - np.arange(n_train)
        steps = np.empty((n_models, n_train), dtype=np.int64)
        for m in range(n_models):
            rng = np.random.Generator(np.random.PCG64(streams[m + 1]))
            steps[m] = rng.integers(0, highs)
        member_idx = kernels.fisher_yates_indices(steps, n_full)
        rows = np.repeat(np.arange(n_models), n_train)
        mask[rows, member_idx.ravel()] = True
        sums = mask.astype(np.float64) @ points

    means = sums / n_train
    scores = means @ points.T  # scores[m, i] = <x_i, model mean m>
    ids = [f"s{x:06d}" for x in range(n_full)]
    grid = MiaGrid(
        np.ascontiguousarray(scores),
        mask,
        sample_ids=ids,
        meta={
            "source": "fp-sim",
            "seed": config.seed,
            "n_full": n_full,
            "n_train": n_train,
            "dim": dim,
            "sigma": config.sigma,
            "n_models": n_models,
            "with_replacement": config.with_replacement,
            "rng": _RNG_CONTRACT,
        },
    )

    n_in, _, m2_in, n_out, _, m2_out = kernels.column_moments(grid.scores, grid.mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        emp_in = np.sqrt(np.where(n_in >= 2, np.maximum(m2_in, 0.0) / np.maximum(n_in - 1, 1), np.nan))
        emp_out = np.sqrt(np.where(n_out >= 2, np.maximum(m2_out, 0.0) / np.maximum(n_out - 1, 1), np.nan))
    norms = np.sqrt((points * points).sum(axis=1))
    ana_in = np.asarray([analytic_sigma(n, n_train, config.sigma, "in") for n in norms])
    ana_out = np.asarray([analytic_sigma(n, n_train, config.sigma, "out") for n in norms])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_in = np.where(ana_in > 0, emp_in / ana_in, np.nan)
        ratio_out = np.where(ana_out > 0, emp_out / ana_out, np.nan)
    result = SimResult(
        config=config,
        norms=norms,
        sigma_emp_in=emp_in,
        sigma_emp_out=emp_out,
        sigma_ana_in=ana_in,
        sigma_ana_out=ana_out,
        ratio_in=ratio_in,
        ratio_out=ratio_out,
    )
    return grid, result


@dataclass(frozen=True)
class RatioSummary:
    mean_ratio_in: float
    mean_ratio_out: float
    bin_edges: np.ndarray
    hist_in: np.ndarray
    hist_out: np.ndarray
    n_valid_in: int
    n_valid_out: int


def ratio_summary(result: SimResult, bins: int = 50, hist_range=(0.0, 1.5)) -> RatioSummary:
    """Mean empirical/analytical sigma ratio per membership side plus
    fixed-range histograms for plotting; NaN samples are excluded."""
    r_in = result.ratio_in[np.isfinite(result.ratio_in)]
    r_out = result.ratio_out[np.isfinite(result.ratio_out)]
    if r_in.size == 0 and r_out.size == 0:
        raise ValueError("no finite ratios to summarize")
    hist_in, edges = np.histogram(r_in, bins=bins, range=hist_range)
    hist_out, _ = np.histogram(r_out, bins=bins, range=hist_range)
    return RatioSummary(
        mean_ratio_in=float(r_in.mean()) if r_in.size else math.nan,
        mean_ratio_out=float(r_out.mean()) if r_out.size else math.nan,
        bin_edges=edges,
        hist_in=hist_in,
        hist_out=hist_out,
        n_valid_in=int(r_in.size),
        n_valid_out=int(r_out.size),
    )


def write_sim_csv(result: SimResult, path) -> None:
    cfg = result.config
    ids = [f"s{x:06d}" for x in range(cfg.n_full)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "sample_id",
                "norm_x",
                "sigma_emp_in",
                "sigma_emp_out",
                "sigma_ana_in",
                "sigma_ana_out",
                "ratio_in",
                "ratio_out",
            ]
        )
        for x in range(cfg.n_full):
            w.writerow(
                [
                    ids[x],
                    f"{result.norms[x]:.17g}",
                    f"{result.sigma_emp_in[x]:.17g}",
                    f"{result.sigma_emp_out[x]:.17g}",
                    f"{result.sigma_ana_in[x]:.17g}",
                    f"{result.sigma_ana_out[x]:.17g}",
                    f"{result.ratio_in[x]:.17g}",
                    f"{result.ratio_out[x]:.17g}",
                ]
            )


def write_sim_summary_json(result: SimResult, path, bins: int = 50) -> None:
    summary = ratio_summary(result, bins=bins)
    cfg = result.config
    payload = {
        "config": {
            "n_full": cfg.n_full,
            "n_train": cfg.n_train,
            "dim": cfg.dim,
            "sigma": cfg.sigma,
            "n_models": cfg.n_models,
            "seed": cfg.seed,
            "with_replacement": cfg.with_replacement,
        },
        "fpc": cfg.fpc if not cfg.with_replacement else None,
        "sqrt_fpc": math.sqrt(cfg.fpc) if not cfg.with_replacement else None,
        "mean_ratio_in": _nan_none(summary.mean_ratio_in),
        "mean_ratio_out": _nan_none(summary.mean_ratio_out),
        "n_valid_in": summary.n_valid_in,
        "n_valid_out": summary.n_valid_out,
        "hist_bin_edges": summary.bin_edges.tolist(),
        "hist_in": summary.hist_in.tolist(),
        "hist_out": summary.hist_out.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def _nan_none(v: float):
    return None if math.isnan(v) else float(v)
