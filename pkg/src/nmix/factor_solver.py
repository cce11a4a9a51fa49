"""Detection-weighted KL multiplicative updates for the latent factors.

With detection probabilities fixed, each factor block minimizes

    f(U, V) = sum_ij [ p_ij * (u_i . v_j) - y_ij * log(u_i . v_j) ],

a detection-weighted variant of KL-divergence factorization.  One update is
one majorize-minimize step on a Jensen surrogate, so it never increases f
and preserves positivity by construction.  Denominators carry a small
epsilon and updated factors are floored at ``EPS_FLOOR`` so later logs and
divisions stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS_FLOOR",
    "MuWorkspace",
    "mu_workspace",
    "mu_update_u",
    "mu_update_v",
    "factor_objective",
    "surrogate_gap",
]

# Post-update elementwise floor on factor entries.
EPS_FLOOR = 1e-16


@dataclass(frozen=True)
class MuWorkspace:
    """Numerators and denominators of one multiplicative update pair.

    ``phi``/``psi`` are the update numerators for U and V; ``u_tilde`` and
    ``v_tilde`` are the detection-weighted denominators (row i of u_tilde is
    sum_j p_ij v_j, row j of v_tilde is sum_i p_ij u_i).
    """

    u_tilde: np.ndarray
    v_tilde: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    epsilon: float


def _validate_mu_inputs(u, v, p, y, epsilon):
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if u.shape[0] != p.shape[0] or v.shape[0] != p.shape[1]:
        raise ValueError(
            f"shape mismatch: u {u.shape}, v {v.shape}, p {p.shape}"
        )
    if p.shape != y.shape:
        raise ValueError(f"p shape {p.shape} != y shape {y.shape}")
    if np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("factor entries must be strictly positive")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("detection probabilities must lie in [0, 1]")
    if np.any(y < 0):
        raise ValueError("counts must be nonnegative")


def _update_pieces(u, v, p, y, epsilon):
    phi = (y / (u @ v.T + epsilon)) @ v
    u_tilde = p @ v
    return phi, u_tilde


def mu_workspace(factors, p, y, epsilon):
    """Assemble both update halves for inspection or shared use."""
    u, v = factors.u, factors.v
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_mu_inputs(u, v, p, y, epsilon)
    phi, u_tilde = _update_pieces(u, v, p, y, epsilon)
    psi, v_tilde = _update_pieces(v, u, p.T, y.T, epsilon)
    return MuWorkspace(
        u_tilde=u_tilde, v_tilde=v_tilde, phi=phi, psi=psi, epsilon=epsilon
    )


def mu_update_u(factors, p, y, epsilon):
    """One multiplicative step on the row factors.

    U <- (U * Phi) / (U_tilde + epsilon), then floored at ``EPS_FLOOR``,
    where Phi = (Y / (U V^T + epsilon)) V and U_tilde = P V.
    """
    u, v = factors.u, factors.v
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_mu_inputs(u, v, p, y, epsilon)
    phi, u_tilde = _update_pieces(u, v, p, y, epsilon)
    return np.maximum(u * phi / (u_tilde + epsilon), EPS_FLOOR)


def mu_update_v(factors, p, y, epsilon):
    """One multiplicative step on the column factors (role symmetry)."""
    u, v = factors.u, factors.v
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_mu_inputs(u, v, p, y, epsilon)
    psi, v_tilde = _update_pieces(v, u, p.T, y.T, epsilon)
    return np.maximum(v * psi / (v_tilde + epsilon), EPS_FLOOR)


def factor_objective(u, v, p, y):
    """The factor-block objective sum_ij [p*lam - y*log(lam)], lam = u v^T.

    Entries with y > 0 and lam = 0 push the value to +inf.  Masked problems
    are encoded by zeroing both p and y outside the mask.
    """
    lam = u @ v.T
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(y > 0, -y * np.log(lam), 0.0)
    return float(np.sum(p * lam) + np.sum(logs))


def surrogate_gap(u_candidate, u_bar, v, p_row, y_row):
    """Surrogate minus objective for one row subproblem; nonnegative.

    The surrogate expands the log through Jensen weights
    beta_jr = u_bar_r * v_jr / (u_bar . v_j); it upper-bounds the row
    objective everywhere and touches it at ``u_candidate == u_bar``.
    """
    u_candidate = np.asarray(u_candidate, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    v = np.asarray(v, dtype=float)
    p_row = np.asarray(p_row, dtype=float)
    y_row = np.asarray(y_row, dtype=float)
    if np.any(u_candidate <= 0) or np.any(u_bar <= 0):
        raise ValueError("row factors must be strictly positive")
    if np.any(v < 0):
        raise ValueError("column factors must be nonnegative")

    u_tilde = p_row @ v
    lam_bar = v @ u_bar
    lam_cand = v @ u_candidate
    beta = (v * u_bar) / lam_bar[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(
            beta > 0, beta * np.log((u_candidate * v) / np.where(beta > 0, beta, 1.0)), 0.0
        )
        f_logs = np.where(y_row > 0, y_row * np.log(lam_cand), 0.0)
    g = float(u_candidate @ u_tilde - np.sum(y_row * inner.sum(axis=1)))
    f = float(np.sum(p_row * lam_cand) - np.sum(f_logs))
    return g - f
