"""Pure-numpy reference implementations of the grid kernels.

These are the fallback path when numba is unavailable or when
MIA_AUDIT_BACKEND=numpy is set; `_jit` mirrors every function here with
identical semantics. All functions are deterministic and allocation-only
(no global state).
"""
from __future__ import annotations

import math

import numpy as np


def _upper_index(n: int, alpha: float) -> int:
    # Index of the order statistic bounding the upper alpha tail:
    # ceil((1-alpha)*n) - 1 with a guard so exact-integer products resolve
    # downward despite float noise. Must match numerics.empirical_quantile.
    k = (1.0 - alpha) * n
    idx = int(math.ceil(k - 1e-9 * max(1.0, k))) - 1
    if idx < 0:
        return 0
    if idx > n - 1:
        return n - 1
    return idx


def column_moments(scores: np.ndarray, mask: np.ndarray):
    """Two-pass per-column moments split by membership.

    Returns (n_in, mean_in, m2_in, n_out, mean_out, m2_out); mean and m2 are
    zero for empty groups.
    """
    maskf = mask.astype(np.float64)
    outf = 1.0 - maskf
    n_in = mask.sum(axis=0).astype(np.int64)
    n_out = (mask.shape[0] - n_in).astype(np.int64)
    sum_in = (scores * maskf).sum(axis=0)
    sum_out = (scores * outf).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_in = np.where(n_in > 0, sum_in / np.maximum(n_in, 1), 0.0)
        mean_out = np.where(n_out > 0, sum_out / np.maximum(n_out, 1), 0.0)
    d_in = (scores - mean_in) * maskf
    d_out = (scores - mean_out) * outf
    m2_in = (d_in * d_in).sum(axis=0)
    m2_out = (d_out * d_out).sum(axis=0)
    return n_in, mean_in, m2_in, n_out, mean_out, m2_out


def pooled_standardize(
    scores: np.ndarray,
    mu_out: np.ndarray,
    sigma_out: np.ndarray,
    sign: np.ndarray,
) -> np.ndarray:
    """Per-column affine map sign * (s - mu_out) / sigma_out."""
    return sign * (scores - mu_out) / sigma_out


def loo_standardize(
    scores: np.ndarray,
    mask: np.ndarray,
    n_in: np.ndarray,
    mean_in: np.ndarray,
    m2_in: np.ndarray,
    n_out: np.ndarray,
    mean_out: np.ndarray,
    m2_out: np.ndarray,
    keep: np.ndarray,
    sigma_inflation: float,
) -> np.ndarray:
    """Standardize each entry with stats that exclude its own row.

    For a member entry only the in-group moments change (the sign of the
    mean gap is re-derived from the downdated in-mean); for a non-member
    entry the out-group location and scale themselves are downdated.
    Columns with keep=False are left at zero.
    """
    n_in_f = n_in.astype(np.float64)
    n_out_f = n_out.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_out_full = np.sqrt(np.maximum(m2_out, 0.0) / np.maximum(n_out_f - 1.0, 1.0))
        # member entries: downdated in-mean decides the sign
        mu_in_loo = (n_in_f * mean_in - scores) / np.maximum(n_in_f - 1.0, 1.0)
        sign_in = np.where(mu_in_loo - mean_out >= 0.0, 1.0, -1.0)
        shat_in = sign_in * (scores - mean_out) / (sigma_out_full * sigma_inflation)
        # non-member entries: downdated out moments
        mu_out_loo = (n_out_f * mean_out - scores) / np.maximum(n_out_f - 1.0, 1.0)
        m2_out_loo = np.maximum(m2_out - (scores - mean_out) * (scores - mu_out_loo), 0.0)
        sigma_out_loo = np.sqrt(m2_out_loo / np.maximum(n_out_f - 2.0, 1.0))
        sign_out = np.where(mean_in - mu_out_loo >= 0.0, 1.0, -1.0)
        shat_out = sign_out * (scores - mu_out_loo) / (sigma_out_loo * sigma_inflation)
    shat = np.where(mask, shat_in, shat_out)
    shat[:, ~keep] = 0.0
    return shat


def per_column_empirical(
    shat: np.ndarray,
    mask: np.ndarray,
    keep: np.ndarray,
    alpha: float,
):
    """Per-column empirical threshold at target FPR alpha.

    Returns (tau, tpr, fpr, n_out_col) where tau[x] is the order statistic
    of column x's non-member scores, tpr/fpr are strict-exceedance
    fractions, and n_out_col[x] is the column's non-member count (-1 for
    dropped columns, whose other entries are NaN).
    """
    n_cols = shat.shape[1]
    tau = np.full(n_cols, np.nan)
    tpr = np.full(n_cols, np.nan)
    fpr = np.full(n_cols, np.nan)
    n_out_col = np.full(n_cols, -1, dtype=np.int64)
    for x in range(n_cols):
        if not keep[x]:
            continue
        col = shat[:, x]
        m = mask[:, x]
        out_vals = np.sort(col[~m])
        in_vals = col[m]
        if out_vals.size == 0 or in_vals.size == 0:
            continue
        n_out_col[x] = out_vals.size
        t = out_vals[_upper_index(out_vals.size, alpha)]
        tau[x] = t
        tpr[x] = np.mean(in_vals > t)
        fpr[x] = np.mean(out_vals > t)
    return tau, tpr, fpr, n_out_col


def fisher_yates_indices(rand_steps: np.ndarray, n_full: int) -> np.ndarray:
    """Partial Fisher-Yates selection per row.

    rand_steps[m, j] must lie in [0, n_full - j); row m's selection is the
    first n_train entries of the partially shuffled index pool.
    """
    n_rows, n_train = rand_steps.shape
    idx = np.empty((n_rows, n_train), dtype=np.int64)
    for m in range(n_rows):
        pool = np.arange(n_full, dtype=np.int64)
        steps = rand_steps[m]
        for j in range(n_train):
            r = j + int(steps[j])
            pool[j], pool[r] = pool[r], pool[j]
        idx[m] = pool[:n_train]
    return idx
