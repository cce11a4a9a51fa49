"""Rotating-fold cross-validation over the factorization methods.

Observed entries are split into k folds; fold t is the test set, fold
t + 1 (cyclically) the validation set, and the rest the training set.
Iterative methods stop early when the validation relative error worsens,
checked every ten iterations, and keep the best-scoring snapshot.  Fold
metrics are reported per (method, rank, fold) plus one aggregate row per
(method, rank) computed on the pooled held-out predictions.

The ``NMIX_THREADS`` environment variable caps fold/rank concurrency
(0 = one worker per CPU, unset = sequential); results are merged in a
fixed key order, so output is identical regardless of worker count.
"""

from __future__ import annotations

import csv
import io as _stringio
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .baselines import mc_cf, poisson_nmf, truncated_svd
from .core import CountDataset, FitConfig
from .fitter import fit
from .io import atomic_write_text, load_counts, load_features
from .metrics import auprc, auroc, kfold_split, rrmse

__all__ = ["METHODS", "run_cv"]

METHODS = ("pois-nmix", "pois-nmf", "mc-cf", "trunc-svd")
MCCF_REG_GRID = (0.01, 0.1, 1.0)
CHECK_EVERY = 10


def _worker_count():
    env = os.environ.get("NMIX_THREADS")
    if env is None:
        return 1
    n = int(env)
    return (os.cpu_count() or 1) if n == 0 else max(1, n)


def _task_seed(seed, method, rank, fold):
    ss = np.random.SeedSequence([int(seed), METHODS.index(method), int(rank), int(fold)])
    return int(ss.generate_state(1)[0])


def _at(matrix, positions):
    return matrix[positions[:, 0], positions[:, 1]]


def _safe_metric(fn, truth, scores):
    try:
        return fn(truth, scores)
    except ValueError:
        return float("nan")


def _fold_metrics(truth, scores):
    return {
        "rrmse": _safe_metric(lambda t, s: rrmse(t, s), truth, scores),
        "auroc": _safe_metric(lambda t, s: auroc(t > 0, s), truth, scores),
        "auprc": _safe_metric(lambda t, s: auprc(t > 0, s), truth, scores),
    }


class _ValidationStopper:
    """Best-snapshot early stopping on validation relative error."""

    def __init__(self, counts, val_positions, every=CHECK_EVERY):
        self._truth = _at(counts, val_positions).astype(float)
        self._positions = val_positions
        self._every = every
        self.best_val = np.inf
        self.best_pred = None

    def check(self, iteration, yhat):
        if iteration % self._every:
            return False
        scores = _at(yhat, self._positions)
        try:
            val = rrmse(self._truth, scores)
        except ValueError:
            self.best_pred = yhat.copy()
            return False
        if val >= self.best_val:
            return True
        self.best_val = val
        self.best_pred = yhat.copy()
        return False

    def predictions(self, final_yhat):
        return final_yhat if self.best_pred is None else self.best_pred


def _fit_nmix(train, features, rank, seed, max_iter, stopper):
    config = FitConfig(rank=rank, seed=seed, impute_missing=True, max_outer=max_iter)

    def callback(t, factors, detection, objective):
        return stopper.check(t, detection.p * factors.rates())

    result = fit(train, features, config, callback=callback)
    return stopper.predictions(result.detection.p * result.lambda_hat)


def _fit_pnmf(train, rank, seed, max_iter, stopper):
    factors, _ = poisson_nmf(
        train,
        rank,
        max_iter=max_iter,
        seed=seed,
        callback=lambda t, u, v, obj: stopper.check(t, u @ v.T),
    )
    return stopper.predictions(factors.rates())


def _fit_mccf(train, rank, seed, max_iter, counts, val_positions):
    best_val = np.inf
    best_pred = None
    for reg in MCCF_REG_GRID:
        stopper = _ValidationStopper(counts, val_positions)
        u, v, _ = mc_cf(
            train,
            rank,
            reg=reg,
            max_iter=max_iter,
            seed=seed,
            callback=lambda t, u, v, obj: stopper.check(t, u @ v.T),
        )
        pred = stopper.predictions(u @ v.T)
        try:
            val = rrmse(_at(counts, val_positions).astype(float), _at(pred, val_positions))
        except ValueError:
            val = np.inf
        if best_pred is None or val < best_val:
            best_val = val
            best_pred = pred
    return best_pred


def _run_task(method, rank, fold, data, features, fold_sets, seed, max_iter):
    k = len(fold_sets)
    test_positions = fold_sets[fold]
    val_positions = fold_sets[(fold + 1) % k]
    train_mask = data.observed_mask.copy()
    for positions in (test_positions, val_positions):
        train_mask[positions[:, 0], positions[:, 1]] = False
    train = CountDataset(
        counts=np.where(train_mask, data.counts, 0), observed_mask=train_mask
    )

    task_seed = _task_seed(seed, method, rank, fold)
    stopper = _ValidationStopper(data.counts, val_positions)
    if method == "pois-nmix":
        yhat = _fit_nmix(train, features, rank, task_seed, max_iter, stopper)
    elif method == "pois-nmf":
        yhat = _fit_pnmf(train, rank, task_seed, max_iter, stopper)
    elif method == "mc-cf":
        yhat = _fit_mccf(train, rank, task_seed, max_iter, data.counts, val_positions)
    elif method == "trunc-svd":
        yhat = truncated_svd(train, rank)
    else:
        raise ValueError(f"unknown method {method!r}")

    truth = _at(data.counts, test_positions).astype(float)
    scores = _at(yhat, test_positions)
    return truth, scores


def run_cv(counts_path, features_path, ranks, folds, seed, out_path,
           methods=None, max_iter=200):
    """Run the full cross-validation study and write the results CSV.

    Returns the result rows (dicts with method, rank, fold, and the three
    metrics); ``fold`` is ``"all"`` on the pooled aggregate rows.
    """
    methods = list(methods) if methods else list(METHODS)
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    ranks = [int(r) for r in ranks]

    data = load_counts(counts_path)
    features = load_features(
        features_path, data.n_rows, data.n_cols, observed_mask=data.observed_mask
    )
    fold_sets = kfold_split(data.observed_mask, folds, seed)

    tasks = [
        (method, rank, fold)
        for method in methods
        for rank in ranks
        for fold in range(folds)
    ]

    def runner(task):
        method, rank, fold = task
        return _run_task(method, rank, fold, data, features, fold_sets, seed, max_iter)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(runner, tasks))
    else:
        outputs = [runner(task) for task in tasks]
    by_key = {task: output for task, output in zip(tasks, outputs)}

    rows = []
    for method in methods:
        for rank in ranks:
            pooled_truth = []
            pooled_scores = []
            for fold in range(folds):
                truth, scores = by_key[(method, rank, fold)]
                pooled_truth.append(truth)
                pooled_scores.append(scores)
                rows.append(
                    {"method": method, "rank": rank, "fold": fold}
                    | _fold_metrics(truth, scores)
                )
            rows.append(
                {"method": method, "rank": rank, "fold": "all"}
                | _fold_metrics(np.concatenate(pooled_truth), np.concatenate(pooled_scores))
            )

    buffer = _stringio.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["method", "rank", "fold", "rrmse", "auroc", "auprc"])
    for row in rows:
        writer.writerow(
            [
                row["method"],
                row["rank"],
                row["fold"],
                repr(float(row["rrmse"])),
                repr(float(row["auroc"])),
                repr(float(row["auprc"])),
            ]
        )
    atomic_write_text(out_path, buffer.getvalue())
    return rows
