"""Evaluation metrics, the spatial smoothness prior and the k estimate."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


def metric_r2(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined: y_true has zero variance")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def metric_support_auc(true_support, scores) -> float:
    """Rank-based (Mann-Whitney) AUC; tied scores get midranks."""
    truth = np.asarray(true_support).astype(bool).ravel()
    scores = np.asarray(scores, dtype=float).ravel()
    if truth.shape != scores.shape:
        raise ValueError("true_support and scores differ in length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positives and negatives in the truth")
    ranks = rankdata(scores)
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metric_variance_explained(T, factor=None, support=None) -> float:
    """|T v|^2 / |T|_F^2 for the unit vector v along ``factor``.

    With ``support`` instead of a factor, v is the best unit vector supported
    there (top right singular vector of the column-restricted T).
    """
    T = np.asarray(T, dtype=float)
    if factor is None:
        if support is None:
            raise ValueError("pass factor or support")
        support = np.asarray(support, dtype=np.int64)
        factor = np.zeros(T.shape[1])
        if support.size:
            _, _, vt = np.linalg.svd(T[:, support], full_matrices=False)
            factor[support] = vt[0]
    v = np.asarray(factor, dtype=float).ravel()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("zero factor")
    total = float(np.sum(T * T))
    tv = T @ (v / norm)
    return float(tv @ tv) / total


def metric_cross_variance(X, Y, u, v, paper_literal: bool = False) -> float:
    """u'X'Yv / (|Xu| |Yv|).

    ``paper_literal`` uses |u'Xu| |v'Yv| as the denominator, which needs
    square X and Y.
    """
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    u, v = np.asarray(u, dtype=float).ravel(), np.asarray(v, dtype=float).ravel()
    if X.shape[0] != Y.shape[0] or X.shape[1] != u.size or Y.shape[1] != v.size:
        raise ValueError("inconsistent shapes for cross-variance")
    xu, yv = X @ u, Y @ v
    num = float(xu @ yv)
    if paper_literal:
        if X.shape[0] != X.shape[1] or Y.shape[0] != Y.shape[1]:
            raise ValueError("literal denominator needs square X and Y")
        den = abs(float(u @ X @ u)) * abs(float(v @ Y @ v))
    else:
        den = float(np.linalg.norm(xu) * np.linalg.norm(yv))
    if den == 0.0:
        raise ValueError("zero denominator in cross-variance")
    return num / den


def build_spatial_precision(edges, d: int, jitter: float) -> np.ndarray:
    """Graph Laplacian plus jitter * I, for an undirected simple graph on d nodes."""
    if not jitter > 0:
        raise ValueError("jitter must be positive")
    lap = np.zeros((d, d))
    seen = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self-loop at node {a}")
        if not (0 <= a < d and 0 <= b < d):
            raise IndexError(f"edge ({a}, {b}) outside [0, {d})")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen.add(key)
        lap[a, b] = lap[b, a] = -1.0
        lap[a, a] += 1.0
        lap[b, b] += 1.0
    lap[np.diag_indices(d)] += jitter
    return lap


def grid_edges(shape) -> list:
    """Edges between axis-neighbours of a regular grid, nodes in C order."""
    shape = tuple(int(s) for s in shape)
    ids = np.arange(int(np.prod(shape))).reshape(shape)
    edges = []
    for axis in range(len(shape)):
        lo = np.take(ids, range(shape[axis] - 1), axis=axis).ravel()
        hi = np.take(ids, range(1, shape[axis]), axis=axis).ravel()
        edges.extend(zip(lo.tolist(), hi.tolist()))
    return edges


def estimate_k_bayes_factor(gains, threshold: float = math.log(10.0)) -> int:
    """Number of leading greedy steps to keep.

    Each greedy gain is the log Bayes factor of the enlarged support against
    the current one; k is the last step whose gain exceeds ``threshold``
    (ln 10 by default). This rule is a stand-in chosen here, not a derived one.
    """
    gains = np.asarray(gains, dtype=float).ravel()
    if gains.size == 0:
        raise ValueError("empty objective trace")
    above = np.flatnonzero(gains > threshold)
    return int(above[-1] + 1) if above.size else 0
