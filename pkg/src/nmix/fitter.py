"""Outer block-coordinate loop: detection weights, then each factor block.

Each outer iteration optionally re-imputes truly-missing counts from the
current factors, solves the detection subproblem by ADMM, and takes one
multiplicative step on each factor block.

The detection probabilities consumed everywhere outside the ADMM (the
factor updates, the objective trace, the returned model) are the feasible
parameterization clip(Z alpha), floored where an observed count is
positive.  The ADMM's auxiliary splitting variable and scaled dual are kept
only as warm-start state between outer iterations: the auxiliary can sit
slightly outside the design's column space mid-run, where its objective
values are not comparable across iterations.  A safeguard accepts a new
alpha only if it improves the detection subproblem at the current rates, so
every block is a descent step and the objective trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alpha_solver import (
    DELTA_P,
    design_pseudo_inverse,
    solve_alpha_admm,
    subproblem_objective,
)
from .core import DetectionModel, FactorModel, total_objective
from .factor_solver import EPS_FLOOR, mu_update_u, mu_update_v

__all__ = ["FitResult", "NumericalError", "fit", "impute_missing", "gradient_check"]

# Feasible-start ceiling for the rescaled initial detection probabilities.
INIT_MAX_P = 0.9
# Per outer iteration, how many capped ADMM continuations may run before the
# previous detection weights are kept.
ALPHA_MAX_ATTEMPTS = 5


class NumericalError(RuntimeError):
    """The objective left the representable range (non-finite value)."""


@dataclass
class FitResult:
    """Fitted model plus the convergence record of the run."""

    factors: FactorModel
    detection: DetectionModel
    objective_trace: np.ndarray
    converged: bool
    n_outer: int
    config_echo: object
    lambda_hat: np.ndarray
    n_hat: np.ndarray
    diagnostics: dict


def impute_missing(data, factors):
    """Dense count matrix with unobserved entries filled from the factors.

    Unobserved entries become the current rate estimates u_i . v_j
    (continuous, not rounded); observed entries pass through unchanged.
    """
    return np.where(data.observed_mask, data.counts.astype(float), factors.rates())


def _detection_probs(features, alpha, floor_mask):
    """Feasible detection matrix clip(Z alpha), floored where counts demand it."""
    p = np.clip(features.detection_matrix(alpha), 0.0, 1.0)
    p[floor_mask] = np.maximum(p[floor_mask], DELTA_P)
    return p


def _initial_state(data, features, config, floor_mask):
    rng = np.random.default_rng(config.seed)
    u = np.maximum(rng.uniform(size=(data.n_rows, config.rank)), EPS_FLOOR)
    v = np.maximum(rng.uniform(size=(data.n_cols, config.rank)), EPS_FLOOR)
    if config.fixed_alpha is not None:
        alpha = np.asarray(config.fixed_alpha, dtype=float).copy()
    else:
        alpha = rng.uniform(size=features.n_features)
        scale = float(features.detection_matrix(alpha)[data.observed_mask].max())
        if scale > 0:
            alpha *= INIT_MAX_P / scale
    return u, v, alpha, _detection_probs(features, alpha, floor_mask)


def fit(data, features, config, callback=None):
    """Run the full estimator and return a populated :class:`FitResult`.

    ``callback(iteration, factors, detection, objective)`` is invoked after
    every outer iteration when given; returning True stops the run early
    (used for validation-based stopping in cross-validation).
    """
    if features.n_rows != data.n_rows or features.n_cols != data.n_cols:
        raise ValueError(
            f"features cover a {features.n_rows}x{features.n_cols} network, "
            f"counts are {data.n_rows}x{data.n_cols}"
        )

    mask = data.observed_mask
    floor_mask = mask & (data.counts > 0)
    u, v, alpha, p = _initial_state(data, features, config, floor_mask)
    fully_observed = bool(mask.all())
    y_obs = data.counts[mask].astype(float)

    diagnostics = {
        "alpha_init": alpha.copy(),
        "alpha_rejections": 0,
        "stopped_early": False,
    }
    z_pinv = None
    if config.fixed_alpha is None:
        mask_flat = mask.flatten(order="F")
        z_pinv, rank, cond = design_pseudo_inverse(features.z[mask_flat])
        diagnostics["design_rank"] = rank
        diagnostics["design_cond"] = cond

    trace = []
    converged = False
    n_outer = 0
    p_aux = None
    omega = None
    for t in range(1, config.max_outer + 1):
        n_outer = t
        lam = u @ v.T

        if config.impute_missing and not fully_observed:
            y_mu = impute_missing(data, FactorModel(u=u, v=v))
            p_mu_fill = 1.0
        else:
            y_mu = data.counts.astype(float)
            p_mu_fill = 0.0

        if config.fixed_alpha is None:
            alpha_new, p_aux, admm_diag = solve_alpha_admm(
                data, lam, features, config, warm_alpha=alpha, warm_p=p_aux,
                warm_omega=omega, warm_rho=rho, z_pinv=z_pinv
            )
            omega = admm_diag.omega
            rho = admm_diag.rho
            p_new = _detection_probs(features, alpha_new, floor_mask)
            lam_obs = lam[mask]
            improved = subproblem_objective(
                y_obs, lam_obs, p_new[mask]
            ) <= subproblem_objective(y_obs, lam_obs, p[mask])
            # A converged solve that does not improve means the incumbent is
            # already optimal for the current rates: keep it.  A capped solve
            # is mid-transient; adopting it keeps the joint dynamics moving.
            if improved or not admm_diag.converged:
                alpha, p = alpha_new, p_new
            else:
                diagnostics["alpha_rejections"] += 1
            diagnostics["admm"] = admm_diag

        p_mu = p if fully_observed else np.where(mask, p, p_mu_fill)
        factors = FactorModel(u=u, v=v)
        u = mu_update_u(factors, p_mu, y_mu, config.epsilon)
        factors = FactorModel(u=u, v=v)
        v = mu_update_v(factors, p_mu, y_mu, config.epsilon)

        factors = FactorModel(u=u, v=v)
        detection = DetectionModel(alpha=alpha, p=p)
        objective = total_objective(data, factors, detection)
        if not np.isfinite(objective):
            raise NumericalError(
                f"objective became non-finite at outer iteration {t}"
            )
        trace.append(objective)

        if callback is not None and callback(t, factors, detection, objective):
            diagnostics["stopped_early"] = True
            break
        if t >= 2:
            rel = abs(trace[-2] - trace[-1]) / max(1.0, abs(trace[-2]))
            if rel < config.outer_tol:
                converged = True
                break

    factors = FactorModel(u=u, v=v)
    lambda_hat = factors.rates()
    return FitResult(
        factors=factors,
        detection=DetectionModel(alpha=alpha, p=p),
        objective_trace=np.asarray(trace),
        converged=converged,
        n_outer=n_outer,
        config_echo=config,
        lambda_hat=lambda_hat,
        n_hat=lambda_hat.copy(),
        diagnostics=diagnostics,
    )


def _smooth_objective(data, features, u, v, alpha):
    lam = u @ v.T
    p = features.detection_matrix(alpha)
    mask = data.observed_mask
    y = data.counts[mask].astype(float)
    lam_o = lam[mask]
    p_o = p[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(y > 0, -y * (np.log(p_o) + np.log(lam_o)), 0.0)
    return float(np.sum(lam_o * p_o) + np.sum(logs))


def gradient_check(data, features, factors, detection, h):
    """Max relative error of analytic gradients against central differences.

    Differentiates the smooth observed-entry objective (detection entered
    as z . alpha, no clipping) with respect to every coordinate of U, V,
    and alpha.  The evaluation point must be strictly interior: factor
    entries above 10*h and observed detection values inside
    (10*h, 1 - 10*h).
    """
    u = factors.u.copy()
    v = factors.v.copy()
    alpha = detection.alpha.copy()
    mask = data.observed_mask
    p_raw = features.detection_matrix(alpha)
    if np.any(u <= 10 * h) or np.any(v <= 10 * h):
        raise ValueError("factor entries must exceed 10*h for a central difference")
    p_obs = p_raw[mask]
    if np.any(p_obs <= 10 * h) or np.any(p_obs >= 1 - 10 * h):
        raise ValueError("observed detection values must lie in (10*h, 1 - 10*h)")

    lam = u @ v.T
    y = data.counts.astype(float)
    g_common = np.where(mask, p_raw - y / lam, 0.0)
    grad_u = g_common @ v
    grad_v = g_common.T @ u
    w = np.where(mask, lam - y / p_raw, 0.0)
    grad_alpha = features.z.T @ w.flatten(order="F")

    def numeric(setter, analytic):
        worst = 0.0
        flat_analytic = analytic.ravel()
        for idx in range(flat_analytic.size):
            plus = setter(idx, h)
            minus = setter(idx, -h)
            fd = (plus - minus) / (2 * h)
            err = abs(flat_analytic[idx] - fd) / max(1.0, abs(flat_analytic[idx]))
            worst = max(worst, err)
        return worst

    def perturb_u(idx, delta):
        u_p = u.copy()
        u_p.flat[idx] += delta
        return _smooth_objective(data, features, u_p, v, alpha)

    def perturb_v(idx, delta):
        v_p = v.copy()
        v_p.flat[idx] += delta
        return _smooth_objective(data, features, u, v_p, alpha)

    def perturb_alpha(idx, delta):
        a_p = alpha.copy()
        a_p[idx] += delta
        return _smooth_objective(data, features, u, v, a_p)

    return max(
        numeric(perturb_u, grad_u),
        numeric(perturb_v, grad_v),
        numeric(perturb_alpha, grad_alpha),
    )
