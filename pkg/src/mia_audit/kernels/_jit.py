"""Numba-compiled grid kernels; semantics mirror `_reference` exactly.

Loops parallelize over independent rows/columns only (each output cell is
written once, no cross-iteration reductions), so results are bit-identical
regardless of thread count.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _upper_index(n, alpha):
    k = (1.0 - alpha) * n
    guard = 1.0 if k < 1.0 else k
    idx = int(np.ceil(k - 1e-9 * guard)) - 1
    if idx < 0:
        return 0
    if idx > n - 1:
        return n - 1
    return idx


@njit(cache=True, parallel=True)
def column_moments(scores, mask):
    n_rows, n_cols = scores.shape
    n_in = np.zeros(n_cols, dtype=np.int64)
    n_out = np.zeros(n_cols, dtype=np.int64)
    mean_in = np.zeros(n_cols)
    mean_out = np.zeros(n_cols)
    m2_in = np.zeros(n_cols)
    m2_out = np.zeros(n_cols)
    for x in prange(n_cols):
        s_in = 0.0
        s_out = 0.0
        c_in = 0
        c_out = 0
        for m in range(n_rows):
            if mask[m, x]:
                s_in += scores[m, x]
                c_in += 1
            else:
                s_out += scores[m, x]
                c_out += 1
        mu_i = s_in / c_in if c_in > 0 else 0.0
        mu_o = s_out / c_out if c_out > 0 else 0.0
        q_in = 0.0
        q_out = 0.0
        for m in range(n_rows):
            if mask[m, x]:
                d = scores[m, x] - mu_i
                q_in += d * d
            else:
                d = scores[m, x] - mu_o
                q_out += d * d
        n_in[x] = c_in
        n_out[x] = c_out
        mean_in[x] = mu_i
        mean_out[x] = mu_o
        m2_in[x] = q_in
        m2_out[x] = q_out
    return n_in, mean_in, m2_in, n_out, mean_out, m2_out


@njit(cache=True, parallel=True)
def pooled_standardize(scores, mu_out, sigma_out, sign):
    n_rows, n_cols = scores.shape
    shat = np.empty((n_rows, n_cols))
    for m in prange(n_rows):
        for x in range(n_cols):
            shat[m, x] = sign[x] * (scores[m, x] - mu_out[x]) / sigma_out[x]
    return shat


@njit(cache=True, parallel=True)
def loo_standardize(
    scores, mask, n_in, mean_in, m2_in, n_out, mean_out, m2_out, keep, sigma_inflation
):
    n_rows, n_cols = scores.shape
    shat = np.zeros((n_rows, n_cols))
    for x in prange(n_cols):
        if not keep[x]:
            continue
        ni = float(n_in[x])
        no = float(n_out[x])
        mu_i = mean_in[x]
        mu_o = mean_out[x]
        q_o = m2_out[x]
        sig_o_full = np.sqrt(max(q_o, 0.0) / (no - 1.0))
        for m in range(n_rows):
            s = scores[m, x]
            if mask[m, x]:
                mu_i_loo = (ni * mu_i - s) / (ni - 1.0)
                sgn = 1.0 if mu_i_loo - mu_o >= 0.0 else -1.0
                shat[m, x] = sgn * (s - mu_o) / (sig_o_full * sigma_inflation)
            else:
                mu_o_loo = (no * mu_o - s) / (no - 1.0)
                q_loo = q_o - (s - mu_o) * (s - mu_o_loo)
                if q_loo < 0.0:
                    q_loo = 0.0
                sig_loo = np.sqrt(q_loo / (no - 2.0))
                sgn = 1.0 if mu_i - mu_o_loo >= 0.0 else -1.0
                shat[m, x] = sgn * (s - mu_o_loo) / (sig_loo * sigma_inflation)
    return shat


@njit(cache=True, parallel=True)
def per_column_empirical(shat, mask, keep, alpha):
    n_rows, n_cols = shat.shape
    tau = np.full(n_cols, np.nan)
    tpr = np.full(n_cols, np.nan)
    fpr = np.full(n_cols, np.nan)
    n_out_col = np.full(n_cols, -1, dtype=np.int64)
    for x in prange(n_cols):
        if not keep[x]:
            continue
        c_out = 0
        c_in = 0
        for m in range(n_rows):
            if mask[m, x]:
                c_in += 1
            else:
                c_out += 1
        if c_out == 0 or c_in == 0:
            continue
        out_vals = np.empty(c_out)
        k = 0
        for m in range(n_rows):
            if not mask[m, x]:
                out_vals[k] = shat[m, x]
                k += 1
        out_vals = np.sort(out_vals)
        t = out_vals[_upper_index(c_out, alpha)]
        hits_in = 0
        hits_out = 0
        for m in range(n_rows):
            if mask[m, x]:
                if shat[m, x] > t:
                    hits_in += 1
            elif shat[m, x] > t:
                hits_out += 1
        n_out_col[x] = c_out
        tau[x] = t
        tpr[x] = hits_in / c_in
        fpr[x] = hits_out / c_out
    return tau, tpr, fpr, n_out_col


@njit(cache=True, parallel=True)
def fisher_yates_indices(rand_steps, n_full):
    n_rows, n_train = rand_steps.shape
    idx = np.empty((n_rows, n_train), dtype=np.int64)
    for m in prange(n_rows):
        pool = np.arange(n_full)
        for j in range(n_train):
            r = j + rand_steps[m, j]
            tmp = pool[j]
            pool[j] = pool[r]
            pool[r] = tmp
        for j in range(n_train):
            idx[m, j] = pool[j]
    return idx
