"""ADMM solver for the convex detection-weight subproblem.

With the factors held fixed, the detection weights alpha minimize

    sum over observed (i, j) of  -y_ij * log(p_ij) + p_ij * lambda_ij
    subject to  p_ij = z_ij . alpha  and  0 <= p_ij <= 1.

Splitting on an auxiliary probability vector p makes every update cheap:
the p-update is an elementwise closed form (root of a scalar quadratic),
the alpha-update is a precomputed-pseudo-inverse least squares, and the
dual update is a vector addition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AdmmState",
    "AdmmDiagnostics",
    "p_update",
    "alpha_ls",
    "dual_update",
    "design_pseudo_inverse",
    "subproblem_objective",
    "solve_alpha_admm",
]

# Lower clip applied to returned detection probabilities where y > 0, so the
# downstream factor updates never take log(0).
DELTA_P = 1e-9

# Residual balancing: every BALANCE_EVERY iterations, double or halve the
# penalty when one residual exceeds the other by BALANCE_RATIO, rescaling the
# scaled dual to match.  Keeps the penalty matched to the data scale (the
# subproblem curvature grows with the counts), which a fixed penalty cannot.
BALANCE_EVERY = 5
BALANCE_RATIO = 10.0
BALANCE_FACTOR = 2.0


@dataclass
class AdmmState:
    """Solver state over the observed entries (column-major vectorization)."""

    p: np.ndarray
    omega: np.ndarray
    p_bar: np.ndarray
    rho: float
    z: np.ndarray
    z_pinv: np.ndarray


@dataclass(frozen=True)
class AdmmDiagnostics:
    n_iter: int
    primal_residual: float
    dual_residual: float
    converged: bool
    rank: int
    rank_deficient: bool
    rho: float
    objective_trace: np.ndarray
    # Scaled dual at the returned iterate, for warm-starting the next solve.
    omega: np.ndarray = None


def p_update(y, lam, p_bar, rho):
    """Closed-form minimizer of the per-entry proximal subproblem.

    Each output entry is the exact minimizer over [0, 1] of
    ``-y*log(p) + p*lam + (rho/2)*(p - p_bar)**2``: the positive root of the
    stationarity quadratic, clipped to the box.
    """
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    if not (y.shape == lam.shape == p_bar.shape):
        raise ValueError(
            f"shape mismatch: y {y.shape}, lam {lam.shape}, p_bar {p_bar.shape}"
        )
    a = rho * p_bar - lam
    root = (a + np.sqrt(a * a + 4.0 * rho * y)) / (2.0 * rho)
    return np.clip(root, 0.0, 1.0)


def alpha_ls(state):
    """Least-squares weights for the current splitting point: Z^+ (p + omega)."""
    return state.z_pinv @ (state.p + state.omega)


def dual_update(state, alpha):
    """Dual ascent step: omega + (p - Z alpha)."""
    return state.p - state.z @ alpha + state.omega


def design_pseudo_inverse(z_obs, rtol=1e-12):
    """Pseudo-inverse of the observed-entry design matrix via SVD.

    Returns ``(z_pinv, rank, cond)`` where singular values below
    ``rtol * s_max`` are treated as zero and ``cond`` is the ratio of the
    largest to the smallest retained singular value.
    """
    u, s, vt = np.linalg.svd(z_obs, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("design matrix is identically zero")
    keep = s > rtol * s[0]
    rank = int(keep.sum())
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    z_pinv = (vt.T * inv_s) @ u.T
    cond = float(s[0] / s[keep][-1])
    return z_pinv, rank, cond


def subproblem_objective(y, lam, p):
    """Value of the detection subproblem at a feasible probability vector."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(y > 0, -y * np.log(p), 0.0)
    return float(np.sum(logs + lam * p))


def _observed_vectors(data, lam, features):
    mask_flat = data.observed_mask.flatten(order="F")
    y = data.counts.flatten(order="F")[mask_flat].astype(float)
    lam_vec = np.asarray(lam, dtype=float).flatten(order="F")[mask_flat]
    z_obs = features.z[mask_flat]
    return mask_flat, y, lam_vec, z_obs


def solve_alpha_admm(data, lam, features, config, warm_alpha, warm_p=None,
                     warm_omega=None, warm_rho=None, z_pinv=None):
    """Solve the detection subproblem to optimality by ADMM.

    Parameters
    ----------
    data : CountDataset
    lam : (I, J) array
        Current rate matrix (fixed during this solve).
    features : FeatureSet
    config : FitConfig
        Supplies rho, admm_tol, and admm_max_iter.
    warm_alpha : (R,) array
        Starting weights; also used to initialize p when no warm_p is given.
    warm_p : (I, J) array, optional
        Previous detection-probability matrix.  Observed entries seed the
        splitting variable; unobserved entries are carried through unchanged.
    warm_omega : (n_obs,) array, optional
        Scaled dual from a previous solve.  Carrying it between outer
        iterations keeps a warm-started solve at its fixed point instead of
        re-converging from a zero dual every time.
    warm_rho : float, optional
        Penalty from a previous solve (residual balancing adapts it); the
        default is ``config.rho``.
    z_pinv : (R, n_obs) array, optional
        Precomputed pseudo-inverse of the observed-entry design matrix.

    Returns
    -------
    (alpha, p_matrix, diagnostics)
        ``p_matrix`` is the auxiliary probability matrix scattered back to
        I x J, floored at ``DELTA_P`` where an observed count is positive.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != data.counts.shape:
        raise ValueError(f"rate shape {lam.shape} != counts shape {data.counts.shape}")
    if not (np.isfinite(lam).all() and np.all(lam >= 0)):
        raise ValueError("rates must be finite and nonnegative")
    warm_alpha = np.asarray(warm_alpha, dtype=float)
    if warm_alpha.shape != (features.n_features,):
        raise ValueError(
            f"warm_alpha must have length {features.n_features}, "
            f"got shape {warm_alpha.shape}"
        )

    mask_flat, y, lam_vec, z_obs = _observed_vectors(data, lam, features)
    n_obs = y.size

    if z_pinv is None:
        z_pinv, rank, _ = design_pseudo_inverse(z_obs)
    else:
        rank = min(z_obs.shape)
        if z_pinv.shape != (features.n_features, n_obs):
            raise ValueError(
                f"z_pinv shape {z_pinv.shape} != ({features.n_features}, {n_obs})"
            )

    if warm_p is None:
        p_full = np.clip(features.detection_matrix(warm_alpha), 0.0, 1.0)
    else:
        p_full = np.clip(np.asarray(warm_p, dtype=float).copy(), 0.0, 1.0)
        if p_full.shape != data.counts.shape:
            raise ValueError(f"warm_p shape {p_full.shape} != {data.counts.shape}")
    p0 = p_full.flatten(order="F")[mask_flat]
    if warm_omega is None:
        omega0 = np.zeros(n_obs)
    else:
        omega0 = np.asarray(warm_omega, dtype=float)
        if omega0.shape != (n_obs,):
            raise ValueError(f"warm_omega shape {omega0.shape} != ({n_obs},)")

    state = AdmmState(
        p=p0,
        omega=omega0,
        p_bar=np.empty(n_obs),
        rho=float(config.rho if warm_rho is None else warm_rho),
        z=z_obs,
        z_pinv=z_pinv,
    )

    alpha = warm_alpha
    tol = config.admm_tol * np.sqrt(n_obs)
    primal = np.inf
    dual = np.inf
    converged = False
    trace = []
    n_iter = 0
    for n_iter in range(1, config.admm_max_iter + 1):
        p_prev = state.p
        state.p_bar = state.z @ alpha - state.omega
        state.p = p_update(y, lam_vec, state.p_bar, state.rho)
        alpha = alpha_ls(state)
        z_alpha = state.z @ alpha
        state.omega = state.p - z_alpha + state.omega
        primal = float(np.linalg.norm(state.p - z_alpha))
        dual = float(state.rho * np.linalg.norm(state.z.T @ (state.p - p_prev)))
        trace.append(subproblem_objective(y, lam_vec, state.p))
        if max(primal, dual) <= tol:
            converged = True
            break
        if n_iter % BALANCE_EVERY == 0:
            if primal > BALANCE_RATIO * dual:
                state.rho *= BALANCE_FACTOR
                state.omega = state.omega / BALANCE_FACTOR
            elif dual > BALANCE_RATIO * primal:
                state.rho /= BALANCE_FACTOR
                state.omega = state.omega * BALANCE_FACTOR

    p_obs = state.p.copy()
    positive = y > 0
    p_obs[positive] = np.maximum(p_obs[positive], DELTA_P)
    flat = p_full.flatten(order="F")
    flat[mask_flat] = p_obs
    p_matrix = flat.reshape(data.counts.shape, order="F")

    diagnostics = AdmmDiagnostics(
        n_iter=n_iter,
        primal_residual=primal,
        dual_residual=dual,
        converged=converged,
        rank=rank,
        rank_deficient=rank < features.n_features,
        rho=float(state.rho),
        objective_trace=np.asarray(trace),
        omega=state.omega,
    )
    return alpha, p_matrix, diagnostics
