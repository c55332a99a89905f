"""Bayes-factor intrinsic reward baseline.

The per-step Bayes factor compares the shaper's action likelihood under its
true role to the likelihood under the observer's belief mixture:
rho = pi_{z*}(a) / sum_z pi_z(a) b^z. The intrinsic reward -lambda * ln(rho)
penalizes role-revealing actions and rewards concealment; it is added to the
shaper's extrinsic reward before advantage estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beliefs import check_simplex
from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class BbmConfig:
    lambda_bbm: float = 0.5
    z_star: int | None = None  # None: use the shaper's episode role at runtime

    def __post_init__(self):
        if self.lambda_bbm < 0.0:
            raise ConfigError("lambda_bbm must be >= 0")


def bayes_factor(ell: np.ndarray, belief: np.ndarray, z_star: int) -> float:
    """rho > 0; finite because ell is floored well above -inf."""
    ell = np.asarray(ell, dtype=np.float64)
    belief = np.asarray(belief, dtype=np.float64)
    check_simplex(belief)
    if not 0 <= z_star < ell.size:
        raise ConfigError(f"true-role index {z_star} out of range")
    likelihoods = np.exp(ell)
    denom = float(likelihoods @ belief)
    if denom <= 0.0:
        raise NumericError("degenerate zero denominator in Bayes factor")
    return float(likelihoods[z_star] / denom)


def intrinsic_reward(rho: float, lambda_bbm: float) -> float:
    if rho <= 0.0:
        raise NumericError("Bayes factor must be positive")
    return lambda_bbm * (-np.log(rho))


def mean_intrinsic_reward(ells: np.ndarray, beliefs: np.ndarray, z_star: int, lambda_bbm: float) -> float:
    """Average the per-observer intrinsic rewards (rows of ells/beliefs)."""
    ells = np.atleast_2d(ells)
    beliefs = np.atleast_2d(beliefs)
    values = [
        intrinsic_reward(bayes_factor(ells[j], beliefs[j], z_star), lambda_bbm) for j in range(ells.shape[0])
    ]
    return float(np.mean(values))
