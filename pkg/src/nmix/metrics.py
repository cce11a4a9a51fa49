"""Evaluation metrics: alignment-aware factor error, ranking scores, folds.

Factor estimates are only determined up to column permutation and positive
scaling, so the factor error first normalizes every column to unit length
and then minimizes over column matchings.  Ranking metrics use the
pair-counting definition of AUROC (ties count half) and the
sum-of-precision-at-positives estimator for the area under the
precision-recall curve.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

__all__ = [
    "EvalReport",
    "factor_mse",
    "alpha_mse",
    "rrmse",
    "auroc",
    "auprc",
    "kfold_split",
]

# Exhaustive permutation search is used up to this many columns.
_EXHAUSTIVE_MAX_COLUMNS = 8


@dataclass
class EvalReport:
    """Held-out prediction quality, aggregated and per fold."""

    rrmse: float
    auroc: float
    auprc: float
    per_fold: list = field(default_factory=list)


def _normalize_columns(name, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=0)
    if np.any(norms == 0):
        raise ValueError(f"{name} has a zero-norm column")
    return x / norms


def factor_mse(truth, estimate, *, method="auto"):
    """Permutation-aligned mean squared column error between factor matrices.

    Columns are normalized to unit Euclidean norm, then the mean squared
    column distance is minimized over column permutations: exhaustively for
    small column counts, by optimal assignment on the pairwise-distance cost
    matrix otherwise.
    """
    t = _normalize_columns("truth", truth)
    e = _normalize_columns("estimate", estimate)
    if t.shape != e.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {e.shape}")
    n_cols = t.shape[1]

    # cost[a, b] = squared distance between truth column a and estimate column b
    cost = np.empty((n_cols, n_cols))
    for a in range(n_cols):
        cost[a] = np.sum((t[:, a, None] - e) ** 2, axis=0)

    if method == "auto":
        method = "exhaustive" if n_cols <= _EXHAUSTIVE_MAX_COLUMNS else "hungarian"
    if method == "exhaustive":
        cols = np.arange(n_cols)
        best = np.inf
        for perm in itertools.permutations(range(n_cols)):
            total = cost[np.asarray(perm), cols].sum()
            if total < best:
                best = total
    elif method == "hungarian":
        rows, cols = linear_sum_assignment(cost)
        best = cost[rows, cols].sum()
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(best) / n_cols


def alpha_mse(truth, estimate):
    """Mean squared error between detection-weight vectors."""
    t = np.asarray(truth, dtype=float)
    e = np.asarray(estimate, dtype=float)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError(f"vectors must share one shape: {t.shape} vs {e.shape}")
    return float(np.mean((e - t) ** 2))


def rrmse(truth, pred, mask=None):
    """Root mean squared error divided by the mean of the true values."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {p.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != t.shape:
            raise ValueError(f"mask shape {mask.shape} != value shape {t.shape}")
        t = t[mask]
        p = p[mask]
    else:
        t = t.ravel()
        p = p.ravel()
    if t.size == 0:
        raise ValueError("no entries selected")
    mean = t.mean()
    if mean == 0:
        raise ValueError("mean of true values is zero; relative error undefined")
    return float(np.sqrt(np.mean((t - p) ** 2)) / mean)


def _check_labels_scores(labels, scores):
    labels = np.asarray(labels, dtype=bool).ravel()
    scores = np.asarray(scores, dtype=float).ravel()
    if labels.shape != scores.shape:
        raise ValueError(f"labels {labels.shape} and scores {scores.shape} differ")
    return labels, scores


def auroc(labels, scores):
    """Probability a positive outranks a negative, ties counting half."""
    labels, scores = _check_labels_scores(labels, scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auprc(labels, scores):
    """Area under the precision-recall curve (average precision).

    Sums precision at each positive in descending score order, with tied
    scores handled as one group.
    """
    labels, scores = _check_labels_scores(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("need at least one positive label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    # Indices closing each group of tied scores.
    ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    ends = np.append(ends, sorted_scores.size - 1)
    tp_at_end = tp[ends].astype(float)
    precision = tp_at_end / (ends + 1)
    tp_gain = np.diff(tp_at_end, prepend=0.0)
    return float(np.sum(tp_gain * precision) / n_pos)


def kfold_split(mask, k, seed):
    """Partition observed positions into k near-equal random folds.

    Returns a list of (n_f, 2) integer arrays of (row, col) positions,
    pairwise disjoint with union equal to the observed set and sizes
    differing by at most one.  Deterministic in ``seed``.
    """
    mask = np.asarray(mask, dtype=bool)
    positions = np.argwhere(mask)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > positions.shape[0]:
        raise ValueError(f"k ({k}) exceeds the number of observed entries "
                         f"({positions.shape[0]})")
    rng = np.random.default_rng(seed)
    shuffled = positions[rng.permutation(positions.shape[0])]
    return np.array_split(shuffled, k)
