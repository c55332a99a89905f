"""Dense MLP forward/backward with hand-derived gradients, plus Adam.

Hidden layers use tanh; the output layer is linear. Inputs may be single
vectors (d,) or batches (B, d); batched backward sums gradients over rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .params import ParamVector


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dim: int
    output_dim: int
    hidden_layers: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ConfigError(f"all dims must be >= 1, got {self}")
        if self.hidden_layers < 0:
            raise ConfigError("hidden_layers must be >= 0")
        if self.activation != "tanh":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer; the last layer is the linear output."""
        dims = [self.input_dim] + [self.hidden_dim] * self.hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


def register_mlp(params: ParamVector, prefix: str, spec: MlpSpec) -> None:
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        params.register(f"{prefix}.w{i}", (fan_out, fan_in))
        params.register(f"{prefix}.b{i}", (fan_out,))


def init_mlp(params: ParamVector, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero."""
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        bound = 1.0 / np.sqrt(fan_in)
        params.get(f"{prefix}.w{i}")[:] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params.get(f"{prefix}.b{i}")[:] = 0.0


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ConfigError(f"{what} must be 1-D or 2-D, got shape {x.shape}")
    if x.shape[1] != dim:
        raise ConfigError(f"{what} has dim {x.shape[1]}, expected {dim}")
    return x, single


def mlp_forward(params: ParamVector, prefix: str, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    y, _ = mlp_forward_cached(params, prefix, spec, x)
    return y


def mlp_forward_cached(params: ParamVector, prefix: str, spec: MlpSpec, x: np.ndarray):
    """Returns (output, activations); activations[i] is the input to layer i."""
    xb, single = _as_batch(x, spec.input_dim, "mlp input")
    acts = [xb]
    h = xb
    n_layers = spec.hidden_layers + 1
    for i in range(n_layers):
        w = params.get(f"{prefix}.w{i}")
        b = params.get(f"{prefix}.b{i}")
        z = h @ w.T + b
        if i < spec.hidden_layers:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    return (h[0] if single else h), acts


def mlp_backward(
    params: ParamVector,
    prefix: str,
    spec: MlpSpec,
    x: np.ndarray,
    upstream: np.ndarray,
    grad_out: ParamVector | None = None,
) -> tuple[ParamVector, np.ndarray]:
    """Gradients of sum_b upstream_b . output_b w.r.t. params and x.

    Accumulates into grad_out when given (must share the registry), else into
    a fresh zero vector. Returns (grad_params, grad_x).
    """
    xb, single = _as_batch(x, spec.input_dim, "mlp input")
    ub, usingle = _as_batch(upstream, spec.output_dim, "upstream grad")
    if single != usingle or xb.shape[0] != ub.shape[0]:
        raise ConfigError("x and upstream_grad batch shapes disagree")
    if grad_out is None:
        grad_out = params.zeros_like()
    _, acts = mlp_forward_cached(params, prefix, spec, xb)
    delta = ub
    for i in range(spec.hidden_layers, -1, -1):
        a_in = acts[i]
        grad_out.get(f"{prefix}.w{i}")[:] += delta.T @ a_in
        grad_out.get(f"{prefix}.b{i}")[:] += delta.sum(axis=0)
        delta = delta @ params.get(f"{prefix}.w{i}")
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    grad_x = delta[0] if single else delta
    return grad_out, grad_x


class Adam:
    """Adam on the flat parameter buffer; moments sized at construction."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, params: ParamVector, grad: np.ndarray) -> None:
        if grad.shape != params.data.shape:
            raise ConfigError("gradient shape does not match parameter vector")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> float:
    """In-place global L2 clip; returns the pre-clip norm. max_norm <= 0 disables."""
    norm = float(np.linalg.norm(grad))
    if max_norm > 0.0 and norm > max_norm:
        grad *= max_norm / norm
    return norm
