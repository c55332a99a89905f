"""Belief critic: value of (observation, flattened observer-belief matrix).

A separate MLP from the PPO value heads, so freezing it during shaping-gradient
computation is a no-op by construction (its region simply receives no gradient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .nets import Adam, MlpSpec, init_mlp, mlp_backward, mlp_forward_cached, register_mlp
from .params import ParamVector

PREFIX = "critic"


@dataclass(frozen=True)
class CriticSpec:
    obs_dim: int
    n_observers: int
    n_hypotheses: int
    hidden_dim: int
    hidden_layers: int = 2

    @property
    def belief_dim(self) -> int:
        return self.n_observers * self.n_hypotheses

    @property
    def input_dim(self) -> int:
        return self.obs_dim + self.belief_dim

    def mlp(self) -> MlpSpec:
        return MlpSpec(self.input_dim, self.hidden_dim, 1, self.hidden_layers)


def register_critic(params: ParamVector, spec: CriticSpec) -> None:
    register_mlp(params, PREFIX, spec.mlp())


def init_critic(params: ParamVector, spec: CriticSpec, rng: np.random.Generator) -> None:
    init_mlp(params, PREFIX, spec.mlp(), rng)


def critic_input(spec: CriticSpec, obs: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    """concat(obs, vec(B)) with B flattened observer-major; batched over rows."""
    obs = np.asarray(obs, dtype=np.float64)
    beliefs = np.asarray(beliefs, dtype=np.float64)
    if obs.ndim == 1:
        if obs.shape[0] != spec.obs_dim or beliefs.shape != (spec.n_observers, spec.n_hypotheses):
            raise ConfigError("critic input dims do not match spec")
        return np.concatenate([obs, beliefs.reshape(-1)])
    if obs.shape[1] != spec.obs_dim or beliefs.shape[1:] != (spec.n_observers, spec.n_hypotheses):
        raise ConfigError("critic input dims do not match spec")
    return np.concatenate([obs, beliefs.reshape(beliefs.shape[0], -1)], axis=1)


def critic_value(params: ParamVector, spec: CriticSpec, obs: np.ndarray, beliefs: np.ndarray) -> float:
    x = critic_input(spec, obs, beliefs)
    y, _ = mlp_forward_cached(params, PREFIX, spec.mlp(), x)
    return float(y[0])


def critic_value_batch(params: ParamVector, spec: CriticSpec, obs: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    x = critic_input(spec, obs, beliefs)
    y, _ = mlp_forward_cached(params, PREFIX, spec.mlp(), x)
    return y[:, 0]


def critic_grad_wrt_belief(params: ParamVector, spec: CriticSpec, obs: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    """dV/dB reshaped to the (n_observers, |Z|) matrix layout."""
    x = critic_input(spec, obs, beliefs)
    scratch = params.zeros_like()
    _, grad_x = mlp_backward(params, PREFIX, spec.mlp(), x, np.ones(1), scratch)
    return grad_x[spec.obs_dim :].reshape(spec.n_observers, spec.n_hypotheses)


def critic_param_grad(
    params: ParamVector,
    spec: CriticSpec,
    obs: np.ndarray,
    beliefs: np.ndarray,
    upstream: np.ndarray,
    grad_out: ParamVector,
) -> None:
    """Accumulate sum_b upstream_b * dV_b/dphi into grad_out (batched)."""
    x = critic_input(spec, obs, beliefs)
    mlp_backward(params, PREFIX, spec.mlp(), x, np.asarray(upstream, dtype=np.float64)[:, None], grad_out)


def train_critic(
    params: ParamVector,
    spec: CriticSpec,
    obs: np.ndarray,
    beliefs: np.ndarray,
    targets: np.ndarray,
    lr: float,
    epochs: int,
    minibatches: int = 1,
    rng: np.random.Generator | None = None,
    optimizer: Adam | None = None,
) -> list[float]:
    """MSE regression of V(o, B) on return targets; returns per-epoch loss.

    Only the critic region of the parameter vector is touched.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise DataError("empty critic dataset")
    if not np.all(np.isfinite(targets)):
        raise DataError("non-finite critic regression target")
    n = targets.size
    if optimizer is None:
        optimizer = Adam(params.size, lr)
    if rng is None:
        rng = np.random.default_rng(0)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for chunk in np.array_split(order, max(1, minibatches)):
            if chunk.size == 0:
                continue
            pred = critic_value_batch(params, spec, obs[chunk], beliefs[chunk])
            err = pred - targets[chunk]
            epoch_loss += float(np.sum(err**2))
            grad = params.zeros_like()
            critic_param_grad(params, spec, obs[chunk], beliefs[chunk], 2.0 * err / chunk.size, grad)
            optimizer.step(params, grad.data)
        losses.append(epoch_loss / n)
    return losses
