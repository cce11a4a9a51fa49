"""Core model types, likelihoods, and generative sampling.

The data model is a two-layer count process on an I x J bipartite network:
latent interaction counts N_ij ~ Poisson(lambda_ij) with a low-rank
nonnegative rate matrix lambda_ij = u_i . v_j, thinned by imperfect
detection into observed counts y_ij ~ Binomial(N_ij, p_ij).  Detection
probabilities are linear in per-pair features, p_ij = alpha . z_ij.

Marginalizing the latent layer gives y_ij ~ Poisson(p_ij * lambda_ij), so
the per-entry log-likelihood collapses to an ordinary Poisson term.  All
solvers in this package work with that collapsed form, restricted to the
set of observed entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

__all__ = [
    "CountDataset",
    "LatentCounts",
    "FactorModel",
    "FeatureSet",
    "DetectionModel",
    "FitConfig",
    "collapsed_loglik",
    "truncated_mixture_sum",
    "total_objective",
    "count_log_factorial",
    "sample_network",
]


def _as_2d(name, x, dtype=float):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr


@dataclass
class CountDataset:
    """Observed interaction counts with an observed/truly-missing mask.

    ``observed_mask[i, j]`` is True where an observation was made (the entry
    belongs to the observed set); False entries are truly missing and carry
    no likelihood term.  Counts at unobserved positions are canonicalized to
    zero so that no consumer can depend on them.
    """

    counts: np.ndarray
    observed_mask: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        mask = np.asarray(self.observed_mask, dtype=bool)
        if counts.ndim != 2:
            raise ValueError(f"counts must be 2-D, got shape {counts.shape}")
        if mask.shape != counts.shape:
            raise ValueError(
                f"observed_mask shape {mask.shape} != counts shape {counts.shape}"
            )
        if not mask.any():
            raise ValueError("at least one observed entry is required")
        observed = counts[mask]
        if not np.isfinite(np.asarray(observed, dtype=float)).all():
            raise ValueError("observed counts must be finite")
        as_float = np.asarray(observed, dtype=float)
        if np.any(as_float < 0) or np.any(as_float != np.round(as_float)):
            raise ValueError("observed counts must be nonnegative integers")
        canonical = np.where(mask, counts, 0).astype(np.int64)
        self.counts = canonical
        self.observed_mask = mask

    @property
    def n_rows(self):
        return self.counts.shape[0]

    @property
    def n_cols(self):
        return self.counts.shape[1]

    @property
    def n_observed(self):
        return int(self.observed_mask.sum())


@dataclass
class LatentCounts:
    """True (unthinned) interaction counts from the generative process."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or np.any(counts < 0):
            raise ValueError("latent counts must be a nonnegative 2-D integer array")
        self.counts = counts


@dataclass
class FactorModel:
    """Nonnegative latent factors defining rates lambda_ij = u_i . v_j."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _as_2d("u", self.u)
        v = _as_2d("v", self.v)
        if u.shape[1] != v.shape[1]:
            raise ValueError(
                f"u and v must share the factor dimension: {u.shape} vs {v.shape}"
            )
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("factors must be finite")
        if np.any(u < 0) or np.any(v < 0):
            raise ValueError("factors must be nonnegative")
        self.u = u
        self.v = v

    @property
    def rank(self):
        return self.u.shape[1]

    def rates(self):
        """Rate matrix u @ v.T, shape (I, J)."""
        return self.u @ self.v.T


@dataclass
class FeatureSet:
    """Per-pair detection features stacked into an (I*J) x R design matrix.

    Row j * n_rows + i holds the feature vector of pair (i, j), i.e. the
    rows follow the column-major vectorization of an I x J matrix.
    """

    z: np.ndarray
    n_rows: int
    n_cols: int

    def __post_init__(self):
        z = _as_2d("z", self.z)
        if not np.isfinite(z).all():
            raise ValueError("feature entries must be finite")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("n_rows and n_cols must be positive")
        if z.shape[0] != self.n_rows * self.n_cols:
            raise ValueError(
                f"z has {z.shape[0]} rows, expected n_rows * n_cols = "
                f"{self.n_rows * self.n_cols}"
            )
        if z.shape[1] < 1:
            raise ValueError("at least one feature column is required")
        self.z = z

    @property
    def n_features(self):
        return self.z.shape[1]

    def pair_row(self, i, j):
        """Design-matrix row index of pair (i, j)."""
        return j * self.n_rows + i

    def detection_matrix(self, alpha):
        """I x J matrix of z_ij . alpha values (not clipped to [0, 1])."""
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.n_features,):
            raise ValueError(
                f"alpha must have length {self.n_features}, got shape {alpha.shape}"
            )
        return (self.z @ alpha).reshape((self.n_rows, self.n_cols), order="F")


@dataclass
class DetectionModel:
    """Detection-regression weights and the induced probability matrix."""

    alpha: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        p = _as_2d("p", self.p)
        if alpha.ndim != 1:
            raise ValueError("alpha must be a vector")
        if not np.isfinite(alpha).all() or not np.isfinite(p).all():
            raise ValueError("detection model entries must be finite")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("detection probabilities must lie in [0, 1]")
        self.alpha = alpha
        self.p = p

    @classmethod
    def from_features(cls, alpha, features):
        """Build the model with p = clip(z . alpha, 0, 1) per pair."""
        raw = features.detection_matrix(alpha)
        return cls(alpha=np.asarray(alpha, dtype=float), p=np.clip(raw, 0.0, 1.0))


@dataclass
class FitConfig:
    """Solver configuration shared by the outer loop and its subsolvers.

    ``fixed_alpha``, when set, freezes the detection weights at the given
    vector and skips the detection subproblem entirely (used to collapse the
    model onto plain Poisson factorization for testing and comparison).
    """

    rank: int
    rho: float = 1.0
    max_outer: int = 500
    outer_tol: float = 1e-6
    admm_max_iter: int = 200
    admm_tol: float = 1e-6
    epsilon: float = 1e-12
    seed: int = 0
    impute_missing: bool = False
    fixed_alpha: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        for name in ("outer_tol", "admm_tol", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_outer < 1 or self.admm_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.fixed_alpha is not None:
            self.fixed_alpha = np.asarray(self.fixed_alpha, dtype=float)

    def copy_with(self, **kwargs):
        return replace(self, **kwargs)


def _check_count(y):
    yf = float(y)
    if not math.isfinite(yf) or yf < 0 or yf != round(yf):
        raise ValueError(f"count must be a finite nonnegative integer, got {y!r}")
    return int(round(yf))


def _check_rate(lam):
    lam = float(lam)
    if not math.isfinite(lam) or lam < 0:
        raise ValueError(f"rate must be finite and nonnegative, got {lam!r}")
    return lam


def _check_prob(p):
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability must lie in [0, 1], got {p!r}")
    return p


def collapsed_loglik(y, lam, p):
    """Log-likelihood of one observed count under the thinned Poisson model.

    Returns ``y*log(p) + y*log(lam) - lam*p - log(y!)`` with ``log(y!)``
    evaluated through the log-gamma function.  The boundary case y > 0 with
    p * lam == 0 has zero likelihood and returns -inf.
    """
    y = _check_count(y)
    lam = _check_rate(lam)
    p = _check_prob(p)
    if y > 0 and (p == 0.0 or lam == 0.0):
        return float("-inf")
    value = -lam * p - math.lgamma(y + 1)
    if y > 0:
        value += y * (math.log(p) + math.log(lam))
    return float(value)


def truncated_mixture_sum(y, lam, p, n_max):
    """Truncated latent-sum probability of observing ``y``.

    Sums Poisson(n; lam) * Binomial(y | n, p) for n = y .. n_max,
    accumulated in log space with a streaming log-sum-exp so that the
    individual terms can underflow without losing the total.
    """
    y = _check_count(y)
    lam = _check_rate(lam)
    p = _check_prob(p)
    n_max = _check_count(n_max)
    if n_max < y:
        raise ValueError(f"n_max ({n_max}) must be >= y ({y})")

    if lam == 0.0:
        # Degenerate Poisson: all latent mass sits at n = 0.
        return 1.0 if y == 0 else 0.0
    if p == 0.0 and y > 0:
        return 0.0

    n = np.arange(y, n_max + 1, dtype=float)
    m = n - y
    log_terms = n * math.log(lam) - lam - math.lgamma(y + 1) - gammaln(m + 1)
    if y > 0:
        log_terms = log_terms + y * math.log(p)
    if p < 1.0:
        log_terms = log_terms + m * math.log1p(-p)
    else:
        log_terms = np.where(m == 0, log_terms, -np.inf)
    return float(np.exp(np.logaddexp.reduce(log_terms)))


def total_objective(data, factors, detection):
    """Negative collapsed log-likelihood over observed entries, minus its constant.

    Returns sum over observed (i, j) of
    ``lam_ij * p_ij - y_ij * log(p_ij) - y_ij * log(lam_ij)``.
    The data-dependent constant ``sum log(y_ij!)`` is excluded (see
    :func:`count_log_factorial`); a diverging term yields the +inf sentinel.
    """
    lam = factors.rates()
    p = detection.p
    if lam.shape != data.counts.shape or p.shape != data.counts.shape:
        raise ValueError(
            f"shape mismatch: counts {data.counts.shape}, rates {lam.shape}, "
            f"detection {p.shape}"
        )
    mask = data.observed_mask
    y = data.counts[mask].astype(float)
    lam_o = lam[mask]
    p_o = p[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(y > 0, -y * np.log(p_o) - y * np.log(lam_o), 0.0)
    return float(np.sum(lam_o * p_o) + np.sum(logs))


def count_log_factorial(data):
    """The constant sum over observed entries of log(y_ij!).

    Added back to the negated :func:`total_objective` when a full
    log-likelihood value is needed.
    """
    y = data.counts[data.observed_mask].astype(float)
    return float(np.sum(gammaln(y + 1)))


def sample_network(factors, detection, seed):
    """Draw one network from the generative model, deterministically in ``seed``.

    Latent counts are Poisson at the factor rates; observed counts are
    binomial thinnings at the detection probabilities.  The returned dataset
    has an all-true observed mask.
    """
    lam = factors.rates()
    p = detection.p
    if p.shape != lam.shape:
        raise ValueError(f"detection shape {p.shape} != rate shape {lam.shape}")
    if not np.isfinite(lam).all():
        raise ValueError("rates must be finite")
    rng = np.random.default_rng(seed)
    n = rng.poisson(lam)
    y = rng.binomial(n, p)
    latent = LatentCounts(counts=n)
    data = CountDataset(counts=y, observed_mask=np.ones_like(y, dtype=bool))
    return latent, data
