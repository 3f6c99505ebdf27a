"""AUC, user-grouped GAUC and linear ranking-score fusion."""

import numpy as np

from . import kernels


class MetricError(ValueError):
    pass


def _as_binary(labels):
    y = np.asarray(labels, dtype=np.float64).ravel()
    if not np.all((y == 0.0) | (y == 1.0)):
        raise MetricError("labels must be 0 or 1")
    return y


def auc(scores, labels):
    """Probability that a random positive outranks a random negative; ties count 0.5."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _as_binary(labels)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores for {y.size} labels")
    aucs, _ = kernels.grouped_auc(s, y, np.array([0, s.size], dtype=np.int64))
    if np.isnan(aucs[0]):
        raise MetricError("AUC undefined: need at least one positive and one negative")
    return float(aucs[0])


def per_user_auc(scores, labels, user_ids):
    """Returns (users, aucs, n_logs); users with one class get NaN."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _as_binary(labels)
    u = np.asarray(user_ids).ravel()
    if not (s.shape == y.shape == u.shape):
        raise MetricError("scores, labels and user_ids must have equal length")
    order = np.argsort(u, kind="stable")
    users, starts, counts = np.unique(u[order], return_index=True, return_counts=True)
    starts = np.append(starts, s.size).astype(np.int64)
    aucs, _ = kernels.grouped_auc(s[order], y[order], starts)
    return users, aucs, counts


def gauc(scores, labels, user_ids):
    """Log-count weighted mean of per-user AUC.

    Users whose logs are all one class are dropped and the weights are
    renormalised over the remaining users.
    """
    _, aucs, counts = per_user_auc(scores, labels, user_ids)
    keep = ~np.isnan(aucs)
    if not keep.any():
        raise MetricError("GAUC undefined: no user has both positive and negative logs")
    w = counts[keep] / counts[keep].sum()
    return float(np.dot(w, aucs[keep]))


def ranking_score(xtrs, weights):
    """``sum_task weights[task] * xtrs[task]``; works on scalars or arrays."""
    missing = [t for t in xtrs if t not in weights]
    if missing:
        raise MetricError(f"no ranking coefficient for tasks {missing}")
    total = 0.0
    for task, p in xtrs.items():
        total = total + weights[task] * np.asarray(p, dtype=np.float64)
    return float(total) if np.ndim(total) == 0 else total
