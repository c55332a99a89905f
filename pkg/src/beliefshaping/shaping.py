"""The k-step belief-shaping correction injected into PPO.

Per rollout window [t, t+k): rebuild the observer-belief chain from the
buffered priors as a function of the current policy parameters (likelihoods
recomputed from the stored proxy observations and shaper actions), score the
endpoint with the frozen belief critic, and differentiate the negated value
back through the chain. The window loss is L(t) = -V(o_{t+k}, B_{t+k});
gradients flow only through the likelihood terms, never through the critic
parameters or the endpoint observation.

Two numerically equivalent routes produce the correction:
- direct: accumulate the exact window gradients;
- coefficient: expose the per-(step, observer, role) likelihood sensitivities
  c = dL/d ell first, optionally gate/normalize/clip them, then apply them as
  detached weights on grad log-likelihoods.
With gating, normalization, and clipping disabled the two coincide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefs import BeliefChainTape, belief_entropy, chain_backward, unroll_chain
from .critic import CriticSpec, critic_grad_wrt_belief, critic_value
from .errors import ConfigError
from .params import ParamVector
from .policy import PolicySpec, accumulate_loglik_grads, restrict_to_role0, role_loglik_matrix
from .proxy import CANONICAL
from .rollout import RolloutBuffer

GATE_ENTROPY = "entropy"
GATE_MAX_PROB = "max_prob"


@dataclass(frozen=True)
class ShapingConfig:
    k: int = 1
    lam: float = 1.0
    mode: str = "direct"  # or "coefficient"
    entropy_gate: float = 0.05  # nats; 0 disables gating
    gate_stat: str = GATE_ENTROPY
    rms_target: float = 1.0  # 0 disables RMS normalization
    coeff_clip: float = 5.0  # 0 disables elementwise clipping
    grad_norm_clip: float = 0.0  # 0 disables the final-norm cap
    restrict_role0: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("shaping horizon k must be >= 1")
        if self.lam < 0.0:
            raise ConfigError("shaping weight must be >= 0")
        if self.mode not in ("direct", "coefficient"):
            raise ConfigError(f"unknown shaping mode {self.mode!r}")
        if self.gate_stat not in (GATE_ENTROPY, GATE_MAX_PROB):
            raise ConfigError(f"unknown gate statistic {self.gate_stat!r}")
        if min(self.entropy_gate, self.rms_target, self.coeff_clip, self.grad_norm_clip) < 0.0:
            raise ConfigError("shaping thresholds must be >= 0")


@dataclass
class CoefficientTensor:
    """Raw likelihood sensitivities and their stabilized copy for one window."""

    c: np.ndarray  # (k, m, Z): d[-V(o_end, B_end)] / d ell
    cbar: np.ndarray  # gated / normalized / clipped copy
    endpoint: np.ndarray  # (m, Z) endpoint beliefs used for gating
    gated_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    clipped_fraction: float = 0.0


@dataclass
class ShapingDiagnostics:
    n_windows: int = 0
    n_possible: int = 0
    mean_abs_coeff: float = 0.0
    rms_coeff: float = 0.0
    gate_fraction: float = 0.0
    clip_fraction: float = 0.0
    grad_norm_pre: float = 0.0
    grad_norm_post: float = 0.0
    mean_window_loss: float = 0.0
    mean_critic_value: float = 0.0

    def to_dict(self) -> dict:
        return {k: (int(v) if isinstance(v, (int, np.integer)) else float(v)) for k, v in self.__dict__.items()}


def build_window_tape(
    params: ParamVector,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    env: int,
    t: int,
    k: int,
) -> BeliefChainTape:
    """Re-unroll the belief chain for window [t, t+k) as a function of theta."""
    if not buf.window_valid(env, t, k):
        raise ConfigError(f"window (env={env}, t={t}, k={k}) is out of range or crosses a reset")
    m = buf.n_observers
    proxies = buf.proxy_obs[env, t : t + k].reshape(k * m, -1)
    shaper_actions = np.take_along_axis(
        buf.actions[env, t : t + k], buf.shaper[env, t : t + k, None], axis=1
    )[:, 0]
    actions = np.repeat(shaper_actions, m)
    ells = role_loglik_matrix(params, policy_spec, proxies, actions).reshape(k, m, buf.n_hypotheses)
    return unroll_chain(buf.beliefs[env, t], ells, buf.temperature, buf.alpha_floor)


def window_endpoint_obs(buf: RolloutBuffer, env: int, t: int, k: int) -> np.ndarray:
    return buf.obs[env, t + k, buf.shaper[env, t]]


def window_shaping_loss(
    params: ParamVector,
    critic_spec: CriticSpec,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    env: int,
    t: int,
    k: int,
) -> float:
    """-V_phi at the window endpoint (observation treated as a constant)."""
    tape = build_window_tape(params, policy_spec, buf, env, t, k)
    return -critic_value(params, critic_spec, window_endpoint_obs(buf, env, t, k), tape.endpoint)


def compute_coefficients(
    params: ParamVector,
    critic_spec: CriticSpec,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    env: int,
    t: int,
    k: int,
) -> CoefficientTensor:
    """Exact c_s^{j,z} = d[-V(o_{t+k}, B_{t+k})] / d ell_s^{j,z} for one window."""
    tape = build_window_tape(params, policy_spec, buf, env, t, k)
    obs_end = window_endpoint_obs(buf, env, t, k)
    g = -critic_grad_wrt_belief(params, critic_spec, obs_end, tape.endpoint)
    coeffs, _ = chain_backward(tape, g)
    return CoefficientTensor(c=coeffs, cbar=coeffs.copy(), endpoint=tape.endpoint.copy())


def gate_normalize_clip(coeffs: CoefficientTensor, tape: BeliefChainTape | None, cfg: ShapingConfig) -> CoefficientTensor:
    """Stabilize one window's coefficients.

    Observer rows whose endpoint belief is already too certain are zeroed
    (their softmax-Bayes Jacobians carry the least information); the remaining
    entries are scaled to the RMS target, then clipped elementwise. All-zero
    tensors pass through untouched.
    """
    endpoint = tape.endpoint if tape is not None else coeffs.endpoint
    cbar = coeffs.cbar.copy()
    m = cbar.shape[1]
    gated = np.zeros(m, dtype=bool)
    if cfg.entropy_gate > 0.0:
        if cfg.gate_stat == GATE_ENTROPY:
            gated = belief_entropy(endpoint) < cfg.entropy_gate
        else:
            gated = np.max(endpoint, axis=-1) > cfg.entropy_gate
        cbar[:, gated, :] = 0.0
    clipped_fraction = 0.0
    live = cbar[:, ~gated, :]
    if live.size and np.any(live != 0.0):
        if cfg.rms_target > 0.0:
            rms = float(np.sqrt(np.mean(live**2)))
            if rms > 0.0:
                cbar[:, ~gated, :] *= cfg.rms_target / rms
        if cfg.coeff_clip > 0.0:
            over = np.abs(cbar) > cfg.coeff_clip
            clipped_fraction = float(np.mean(over))
            np.clip(cbar, -cfg.coeff_clip, cfg.coeff_clip, out=cbar)
    return CoefficientTensor(
        c=coeffs.c, cbar=cbar, endpoint=coeffs.endpoint, gated_rows=gated, clipped_fraction=clipped_fraction
    )


def surrogate_loss(
    cbar: np.ndarray,
    params: ParamVector,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    env: int,
    t: int,
) -> float:
    """Mean detached-coefficient surrogate (1/(k m Z)) sum cbar * ell(theta)."""
    k, m, n_z = cbar.shape
    tape = build_window_tape(params, policy_spec, buf, env, t, k)
    return float(np.sum(cbar * tape.ells) / (k * m * n_z))


def _accumulate_window_grad(
    params: ParamVector,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    env: int,
    t: int,
    weights: np.ndarray,
    grad: ParamVector,
) -> None:
    """grad += sum_{s,j,z} weights[s,j,z] * grad_theta ell_s^{j,z}."""
    k, m, _ = weights.shape
    canonical = buf.proxy_mode == CANONICAL
    for s in range(k):
        action = int(buf.actions[env, t + s, buf.shaper[env, t + s]])
        if canonical:
            accumulate_loglik_grads(
                params, policy_spec, buf.proxy_obs[env, t + s, 0], action, weights[s].sum(axis=0), grad
            )
        else:
            for j in range(m):
                accumulate_loglik_grads(
                    params, policy_spec, buf.proxy_obs[env, t + s, j], action, weights[s, j], grad
                )


def critic_window_dataset(buf: RolloutBuffer, k: int, returns: np.ndarray):
    """Regression triples over valid windows: all three parts share index t+k.

    Returns (endpoint observations, endpoint belief matrices, shaper returns
    at t+k, the (env, t) window list).
    """
    windows = buf.window_starts(k)
    if not windows:
        empty = np.zeros(0)
        return empty, empty, empty, windows
    obs_end = np.stack([buf.obs[e, t + k, buf.shaper[e, t]] for e, t in windows])
    b_end = np.stack([buf.beliefs[e, t + k] for e, t in windows])
    targets = np.array([returns[e, t + k, buf.shaper[e, t]] for e, t in windows])
    return obs_end, b_end, targets, windows


def compute_shaping_gradient(
    params: ParamVector,
    critic_spec: CriticSpec,
    policy_spec: PolicySpec,
    buf: RolloutBuffer,
    cfg: ShapingConfig,
) -> tuple[ParamVector, ShapingDiagnostics]:
    """The rollout-level correction: lambda * mean over valid windows of the
    window-loss gradient at the rollout parameters.

    The critic region of the result is identically zero and the endpoint
    observations contribute nothing: the only parameter path is through the
    recomputed log-likelihoods. Windows are iterated in a fixed (env, t) order
    so the reduction is deterministic.
    """
    grad = params.zeros_like()
    diag = ShapingDiagnostics(n_possible=buf.n_envs * max(buf.horizon - cfg.k, 0))
    windows = buf.window_starts(cfg.k)
    diag.n_windows = len(windows)
    if cfg.lam == 0.0 or not windows:
        return grad, diag

    abs_sum = 0.0
    sq_sum = 0.0
    n_coeffs = 0
    gated_rows = 0
    total_rows = 0
    clip_sum = 0.0
    loss_sum = 0.0
    for env, t in windows:
        coeffs = compute_coefficients(params, critic_spec, policy_spec, buf, env, t, cfg.k)
        abs_sum += float(np.abs(coeffs.c).sum())
        sq_sum += float((coeffs.c**2).sum())
        n_coeffs += coeffs.c.size
        obs_end = window_endpoint_obs(buf, env, t, cfg.k)
        value = critic_value(params, critic_spec, obs_end, coeffs.endpoint)
        loss_sum += -value
        if cfg.mode == "coefficient":
            if cfg.restrict_role0:
                coeffs.cbar[:, :, 1:] = 0.0
            coeffs = gate_normalize_clip(coeffs, None, cfg)
            gated_rows += int(coeffs.gated_rows.sum())
            total_rows += coeffs.gated_rows.size
            clip_sum += coeffs.clipped_fraction
            # sum cbar * grad ell == (k m Z) * grad surrogate_loss; the mean
            # prefactor is undone so that disabled stabilization reproduces
            # the direct window gradient exactly
            weights = coeffs.cbar
        else:
            weights = coeffs.c
        _accumulate_window_grad(params, policy_spec, buf, env, t, weights, grad)

    grad.data *= cfg.lam / len(windows)
    if cfg.mode == "direct" and cfg.restrict_role0:
        grad = restrict_to_role0(grad, policy_spec)
    diag.mean_abs_coeff = abs_sum / max(n_coeffs, 1)
    diag.rms_coeff = float(np.sqrt(sq_sum / max(n_coeffs, 1)))
    diag.gate_fraction = gated_rows / total_rows if total_rows else 0.0
    diag.clip_fraction = clip_sum / len(windows) if cfg.mode == "coefficient" else 0.0
    diag.mean_window_loss = loss_sum / len(windows)
    diag.mean_critic_value = -diag.mean_window_loss
    diag.grad_norm_pre = grad.l2_norm()
    if cfg.grad_norm_clip > 0.0 and diag.grad_norm_pre > cfg.grad_norm_clip:
        grad.data *= cfg.grad_norm_clip / diag.grad_norm_pre
    diag.grad_norm_post = grad.l2_norm()
    return grad, diag


def inject_correction(ppo_grad: ParamVector, g_shaping: ParamVector, inner_steps: int) -> ParamVector:
    """One inner-step update direction: ppo_grad + g_shaping / M.

    The same g_shaping is divided across all M inner steps of the iteration,
    so the injected total over the iteration equals g_shaping exactly.
    """
    if inner_steps < 1:
        raise ConfigError("inner step count M must be >= 1")
    out = ppo_grad.copy()
    out.data += g_shaping.data / inner_steps
    return out
