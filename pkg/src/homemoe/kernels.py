"""Hot numeric kernels with an njit path and a pure-numpy path.

Public entry points dispatch on :data:`homemoe._accel.USE_NUMBA`. Both paths
are importable directly (``*_jit`` / ``*_np``) so tests can check they agree.
"""

import numpy as np

from ._accel import USE_NUMBA, try_njit


# --------------------------------------------------------------------------
# batch normalisation
# --------------------------------------------------------------------------

@try_njit(cache=True)
def bn_forward_jit(z, gamma, beta, eps):
    B, D = z.shape
    out = np.empty_like(z)
    xhat = np.empty_like(z)
    mean = np.empty(D)
    var = np.empty(D)
    inv_std = np.empty(D)
    for j in range(D):
        s = 0.0
        for i in range(B):
            s += z[i, j]
        m = s / B
        ss = 0.0
        for i in range(B):
            d = z[i, j] - m
            ss += d * d
        v = ss / B
        r = 1.0 / np.sqrt(v + eps)
        mean[j] = m
        var[j] = v
        inv_std[j] = r
        for i in range(B):
            xh = (z[i, j] - m) * r
            xhat[i, j] = xh
            out[i, j] = gamma[j] * xh + beta[j]
    return out, xhat, mean, var, inv_std


def bn_forward_np(z, gamma, beta, eps):
    mean = z.mean(axis=0)
    centered = z - mean
    var = (centered * centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return gamma * xhat + beta, xhat, mean, var, inv_std


@try_njit(cache=True)
def bn_backward_jit(dout, xhat, inv_std, gamma):
    B, D = dout.shape
    dz = np.empty_like(dout)
    dgamma = np.empty(D)
    dbeta = np.empty(D)
    for j in range(D):
        sg = 0.0
        sb = 0.0
        for i in range(B):
            sb += dout[i, j]
            sg += dout[i, j] * xhat[i, j]
        dgamma[j] = sg
        dbeta[j] = sb
        # sums of dxhat and dxhat*xhat are gamma*sb and gamma*sg
        k = gamma[j] * inv_std[j] / B
        for i in range(B):
            dz[i, j] = k * (B * dout[i, j] - sb - xhat[i, j] * sg)
    return dz, dgamma, dbeta


def bn_backward_np(dout, xhat, inv_std, gamma):
    B = dout.shape[0]
    dbeta = dout.sum(axis=0)
    dgamma = (dout * xhat).sum(axis=0)
    dz = (gamma * inv_std / B) * (B * dout - dbeta - xhat * dgamma)
    return dz, dgamma, dbeta


# --------------------------------------------------------------------------
# rank-sum AUC, optionally per group
# --------------------------------------------------------------------------

@try_njit(cache=True)
def _segment_auc(scores, labels):
    n = scores.shape[0]
    order = np.argsort(scores)
    n_pos = 0
    for i in range(n):
        if labels[i] > 0.5:
            n_pos += 1
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.nan, n_pos
    rank_sum = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            if labels[order[k]] > 0.5:
                rank_sum += avg_rank
        i = j + 1
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg), n_pos


@try_njit(cache=True)
def grouped_auc_jit(scores, labels, starts):
    """Per-segment AUC; rows are pre-sorted by group, ``starts`` has G+1 offsets."""
    G = starts.shape[0] - 1
    aucs = np.empty(G)
    n_pos = np.empty(G, dtype=np.int64)
    for g in range(G):
        a, p = _segment_auc(scores[starts[g]:starts[g + 1]], labels[starts[g]:starts[g + 1]])
        aucs[g] = a
        n_pos[g] = p
    return aucs, n_pos


def grouped_auc_np(scores, labels, starts):
    G = starts.shape[0] - 1
    n = scores.shape[0]
    sizes = np.diff(starts)
    gid = np.repeat(np.arange(G), sizes)
    # rows sorted by (group, score); lexsort keys are last-major
    order = np.lexsort((scores, gid))
    s = scores[order]
    y = labels[order] > 0.5
    g = gid[order]
    pos_in_group = np.arange(n) - starts[g]
    # runs of equal (group, score) share the mean of their 1-based ranks
    new_run = np.ones(n, dtype=bool)
    new_run[1:] = (s[1:] != s[:-1]) | (g[1:] != g[:-1])
    run_id = np.cumsum(new_run) - 1
    run_starts = np.flatnonzero(new_run)
    run_len = np.diff(np.append(run_starts, n))
    run_mean = np.add.reduceat(pos_in_group + 1.0, run_starts) / run_len
    ranks = run_mean[run_id]
    n_pos = np.bincount(g, weights=y, minlength=G).astype(np.int64)
    n_neg = sizes - n_pos
    rank_sum = np.bincount(g, weights=np.where(y, ranks, 0.0), minlength=G)
    with np.errstate(invalid="ignore", divide="ignore"):
        aucs = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    aucs[(n_pos == 0) | (n_neg == 0)] = np.nan
    return aucs, n_pos


if USE_NUMBA:
    bn_forward = bn_forward_jit
    bn_backward = bn_backward_jit
    grouped_auc = grouped_auc_jit
else:
    bn_forward = bn_forward_np
    bn_backward = bn_backward_np
    grouped_auc = grouped_auc_np


def backend():
    return "numba" if USE_NUMBA else "numpy"
