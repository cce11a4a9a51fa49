"""Reference factorization methods for benchmarking the main estimator.

All three treat the counts matrix directly, without a detection layer:
plain KL-divergence factorization (the detection-free special case of the
main model), ridge-regularized alternating least squares on observed
entries, and a truncated SVD of the zero-filled matrix.
"""

from __future__ import annotations

import numpy as np

from .core import FactorModel
from .factor_solver import EPS_FLOOR, factor_objective, mu_update_u, mu_update_v

__all__ = ["poisson_nmf", "mc_cf", "truncated_svd"]


def poisson_nmf(data, rank, max_iter=100, epsilon=1e-12, seed=0, callback=None):
    """KL-divergence multiplicative-update factorization of the counts.

    Truly-missing entries, when present, are re-imputed from the current
    factors before every update pair.  Returns ``(factors, objective_trace)``
    where the trace holds the observed-entry objective
    sum [lam - y*log(lam)] after each iteration.

    ``callback(iteration, u, v, objective)`` may return True to stop early.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    u = np.maximum(rng.uniform(size=(data.n_rows, rank)), EPS_FLOOR)
    v = np.maximum(rng.uniform(size=(data.n_cols, rank)), EPS_FLOOR)

    mask = data.observed_mask
    fully_observed = bool(mask.all())
    y = data.counts.astype(float)
    ones = np.ones_like(y)
    mask_weights = mask.astype(float)

    trace = []
    for t in range(1, max_iter + 1):
        if fully_observed:
            y_mu = y
        else:
            y_mu = np.where(mask, y, u @ v.T)
        factors = FactorModel(u=u, v=v)
        u = mu_update_u(factors, ones, y_mu, epsilon)
        factors = FactorModel(u=u, v=v)
        v = mu_update_v(factors, ones, y_mu, epsilon)
        objective = factor_objective(u, v, mask_weights, y)
        trace.append(objective)
        if callback is not None and callback(t, u, v, objective):
            break
    return FactorModel(u=u, v=v), np.asarray(trace)


def _ridge_rows(target, mask, basis, reg):
    """Per-row exact minimizers of the masked ridge least-squares block."""
    n_rows, rank = target.shape[0], basis.shape[1]
    out = np.empty((n_rows, rank))
    eye = reg * np.eye(rank)
    for i in range(n_rows):
        idx = mask[i]
        b = basis[idx]
        rhs = b.T @ target[i, idx]
        if reg > 0:
            out[i] = np.linalg.solve(b.T @ b + eye, rhs)
        else:
            out[i] = np.linalg.lstsq(b.T @ b, rhs, rcond=None)[0]
    return out


def mc_cf(data, rank, reg=0.1, max_iter=100, seed=0, callback=None):
    """Matrix-completion collaborative filtering by alternating ridge solves.

    Minimizes the squared error over observed entries plus
    ``reg * (||U||_F^2 + ||V||_F^2)`` with unconstrained factors.  Returns
    ``(u, v, loss_trace)``; each half step is an exact block minimization,
    so the trace is non-increasing.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if reg < 0:
        raise ValueError("reg must be >= 0")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(data.n_rows, rank))
    v = rng.uniform(size=(data.n_cols, rank))

    y = data.counts.astype(float)
    mask = data.observed_mask

    def loss(u, v):
        resid = np.where(mask, y - u @ v.T, 0.0)
        return float(np.sum(resid**2) + reg * (np.sum(u**2) + np.sum(v**2)))

    trace = []
    for t in range(1, max_iter + 1):
        u = _ridge_rows(y, mask, v, reg)
        v = _ridge_rows(y.T, mask.T, u, reg)
        value = loss(u, v)
        trace.append(value)
        if callback is not None and callback(t, u, v, value):
            break
    return u, v, np.asarray(trace)


def truncated_svd(data, rank):
    """Best rank-F Frobenius approximation of the zero-filled counts."""
    if rank < 1 or rank > min(data.n_rows, data.n_cols):
        raise ValueError(
            f"rank must lie in [1, {min(data.n_rows, data.n_cols)}], got {rank}"
        )
    x = data.counts.astype(float)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]
