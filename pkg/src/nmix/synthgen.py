"""Ground-truth instance generation for simulation studies.

Instances follow the generative model with uniformly drawn factors and
features.  The factor matrices get scaled coordinate rows planted in them
so the factorization is identifiable up to column permutation and scaling,
which is what the alignment-based evaluation metrics assume.  Detection
weights are rescaled so the largest detection probability hits a chosen
target below one, keeping the likelihood away from the degenerate boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DetectionModel, FactorModel, FeatureSet

__all__ = ["SynthConfig", "generate_instance"]


@dataclass
class SynthConfig:
    """Instance dimensions and distributional knobs.

    ``constant_p``, when set, switches to a constant-detection instance:
    the feature path collapses to a single all-ones column with
    alpha = [constant_p], so every pair shares one detection probability.
    """

    n_rows: int
    n_cols: int
    rank: int
    n_features: int
    gamma: float
    target_max_p: float = 0.9
    seed: int = 0
    constant_p: float | None = None

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("network dimensions must be positive")
        if self.rank < 1 or self.rank > min(self.n_rows, self.n_cols):
            raise ValueError(
                f"rank must lie in [1, min(I, J)] = [1, {min(self.n_rows, self.n_cols)}]"
            )
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not (0.0 < self.target_max_p <= 1.0):
            raise ValueError("target_max_p must lie in (0, 1]")
        if self.constant_p is not None and not (0.0 <= self.constant_p <= 1.0):
            raise ValueError("constant_p must lie in [0, 1]")


def generate_instance(config):
    """Draw one ground-truth instance, deterministically in ``config.seed``.

    Returns ``(factors, alpha, features, detection)``.  Draw order: U, V,
    the planted-row positions for U then V, features, then alpha.
    """
    rng = np.random.default_rng(config.seed)
    n_rows, n_cols, rank = config.n_rows, config.n_cols, config.rank

    u = rng.uniform(0.0, config.gamma, size=(n_rows, rank))
    v = rng.uniform(0.0, config.gamma, size=(n_cols, rank))
    # Plant gamma-scaled coordinate rows so columns are identifiable.
    u[rng.choice(n_rows, size=rank, replace=False)] = config.gamma * np.eye(rank)
    v[rng.choice(n_cols, size=rank, replace=False)] = config.gamma * np.eye(rank)
    factors = FactorModel(u=u, v=v)

    n_pairs = n_rows * n_cols
    if config.constant_p is not None:
        features = FeatureSet(z=np.ones((n_pairs, 1)), n_rows=n_rows, n_cols=n_cols)
        alpha = np.array([float(config.constant_p)])
    else:
        z = rng.uniform(size=(n_pairs, config.n_features))
        alpha = rng.uniform(size=config.n_features)
        scale = float(np.max(z @ alpha))
        if scale <= 0:
            raise ValueError("degenerate features: all detection values are zero")
        alpha = alpha * (config.target_max_p / scale)
        features = FeatureSet(z=z, n_rows=n_rows, n_cols=n_cols)

    detection = DetectionModel.from_features(alpha, features)
    return factors, alpha, features, detection
