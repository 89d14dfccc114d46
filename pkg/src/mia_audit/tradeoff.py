"""Trade-off curves: achievable (type-I, type-II) error pairs for threshold
tests on scalar scores, plus the equal-variance Gaussian closed form.

Curves are step functions through the operating points of "> tau" threshold
rules; no interpolation is performed (interpolated points would require
randomized tests). A strictly monotone transform of the scores leaves the
empirical curve exactly unchanged, which is the property
`check_postprocessing_invariance` verifies.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import normal_cdf, normal_quantile

__all__ = [
    "TradeoffCurve",
    "empirical_tradeoff",
    "gaussian_tradeoff",
    "gaussian_tradeoff_curve",
    "curve_value",
    "align_curves",
    "check_postprocessing_invariance",
    "write_curve_csv",
]


@dataclass(frozen=True)
class TradeoffCurve:
    """Operating points (alpha strictly increasing, beta nonincreasing)."""

    alphas: np.ndarray
    betas: np.ndarray
    provenance: str = "empirical"

    def __post_init__(self):
        a, b = self.alphas, self.betas
        if a.shape != b.shape or a.ndim != 1 or a.size == 0:
            raise ValueError("curve needs matching non-empty 1-D alpha/beta arrays")
        if np.any(np.diff(a) <= 0):
            raise ValueError("alphas must be strictly increasing")
        if np.any(np.diff(b) > 0):
            raise ValueError("betas must be nonincreasing")
        if a.min() < 0 or a.max() > 1 or b.min() < 0 or b.max() > 1:
            raise ValueError("curve values must lie in [0, 1]")


def empirical_tradeoff(out_scores, in_scores) -> TradeoffCurve:
    """Curve of (FPR, FNR) over all threshold positions, positives strictly
    above the threshold. Includes the endpoints alpha=0 and (1, 0)."""
    out = np.sort(np.asarray(out_scores, dtype=np.float64).ravel())
    ins = np.sort(np.asarray(in_scores, dtype=np.float64).ravel())
    if out.size == 0 or ins.size == 0:
        raise ValueError("empirical_tradeoff requires non-empty score sets")
    taus = np.unique(np.concatenate([out, ins]))
    alpha = (out.size - np.searchsorted(out, taus, side="right")) / out.size
    beta = np.searchsorted(ins, taus, side="right") / ins.size
    # tau below every score: everything rejected
    alpha = np.append(alpha, 1.0)
    beta = np.append(beta, 0.0)
    # per alpha keep the smallest achievable beta
    order = np.lexsort((beta, alpha))
    alpha, beta = alpha[order], beta[order]
    uniq, first = np.unique(alpha, return_index=True)
    return TradeoffCurve(uniq, beta[first], provenance="empirical")


def gaussian_tradeoff(mu_gap_over_sigma: float, alpha: float) -> float:
    """Equal-variance Gaussian trade-off: beta = Phi(Phi^-1(1-alpha) - delta)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if mu_gap_over_sigma < 0:
        raise ValueError("mu_gap_over_sigma must be nonnegative")
    return normal_cdf(normal_quantile(1.0 - alpha) - mu_gap_over_sigma)


def gaussian_tradeoff_curve(mu_gap_over_sigma: float, alphas) -> TradeoffCurve:
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray([gaussian_tradeoff(mu_gap_over_sigma, a) for a in alphas])
    return TradeoffCurve(
        alphas, betas, provenance=f"analytic-gaussian(delta={mu_gap_over_sigma:g})"
    )


def curve_value(curve: TradeoffCurve, alphas) -> np.ndarray:
    """Evaluate the curve as a right-continuous step function: the beta of
    the largest operating point with alpha_i <= alpha (1.0 left of the first
    point)."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    idx = np.searchsorted(curve.alphas, alphas, side="right") - 1
    out = np.where(idx >= 0, curve.betas[np.maximum(idx, 0)], 1.0)
    return out


def align_curves(a: TradeoffCurve, b: TradeoffCurve):
    """Evaluate both curves on the union of their breakpoints.

    Returns (grid, beta_a, beta_b).
    """
    grid = np.union1d(a.alphas, b.alphas)
    return grid, curve_value(a, grid), curve_value(b, grid)


def _classify_transform(values: np.ndarray, transform) -> int:
    """+1 strictly increasing, -1 strictly decreasing on the sampled values;
    raises otherwise."""
    xs = np.unique(values)
    if xs.size < 2:
        return 1
    ys = np.asarray([transform(float(x)) for x in xs], dtype=np.float64)
    if not np.all(np.isfinite(ys)):
        raise ValueError("transform produced non-finite values on the score range")
    d = np.diff(ys)
    if np.all(d > 0):
        return 1
    if np.all(d < 0):
        return -1
    raise ValueError("transform is not strictly monotone on the score range")


def check_postprocessing_invariance(out_scores, in_scores, transform) -> float:
    """Max pointwise discrepancy between the trade-off curve of the raw
    scores and that of the transformed scores.

    Strictly increasing transforms give exactly 0; strictly decreasing ones
    are handled by negating the transformed scores first. Non-monotone
    transforms are rejected.
    """
    out = np.asarray(out_scores, dtype=np.float64).ravel()
    ins = np.asarray(in_scores, dtype=np.float64).ravel()
    direction = _classify_transform(np.concatenate([out, ins]), transform)
    t_out = np.asarray([transform(float(v)) for v in out])
    t_in = np.asarray([transform(float(v)) for v in ins])
    if direction < 0:
        t_out, t_in = -t_out, -t_in
    base = empirical_tradeoff(out, ins)
    mapped = empirical_tradeoff(t_out, t_in)
    _, beta_a, beta_b = align_curves(base, mapped)
    return float(np.max(np.abs(beta_a - beta_b)))


def write_curve_csv(curve: TradeoffCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "provenance"])
        for a, b in zip(curve.alphas, curve.betas):
            w.writerow([f"{a:.17g}", f"{b:.17g}", curve.provenance])
