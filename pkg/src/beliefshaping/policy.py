"""Role-conditioned stochastic policy: shared tanh trunk + per-role linear heads.

The trunk maps an observation to a feature vector; each role id owns a linear
action head and a linear value head over those features. Separate heads make
the shaper-role restriction an exact region mask on the parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beliefs import LOG_LIK_FLOOR, log_softmax, softmax
from .errors import ConfigError
from .params import ParamVector

PREFIX = "policy"


@dataclass(frozen=True)
class PolicySpec:
    obs_dim: int
    n_actions: int
    n_role_heads: int
    n_hypotheses: int
    hidden_dim: int
    trunk_layers: int = 2

    def __post_init__(self):
        if min(self.obs_dim, self.n_actions, self.n_role_heads, self.n_hypotheses, self.hidden_dim) < 1:
            raise ConfigError(f"all policy dims must be >= 1, got {self}")
        if self.n_hypotheses > self.n_role_heads:
            raise ConfigError("belief hypotheses cannot exceed role heads")
        if self.trunk_layers < 1:
            raise ConfigError("trunk needs at least one layer")


def register_policy(params: ParamVector, spec: PolicySpec) -> None:
    for i in range(spec.trunk_layers):
        fan_in = spec.obs_dim if i == 0 else spec.hidden_dim
        params.register(f"{PREFIX}.trunk.w{i}", (spec.hidden_dim, fan_in))
        params.register(f"{PREFIX}.trunk.b{i}", (spec.hidden_dim,))
    params.register(f"{PREFIX}.heads.w", (spec.n_role_heads, spec.n_actions, spec.hidden_dim))
    params.register(f"{PREFIX}.heads.b", (spec.n_role_heads, spec.n_actions))
    params.register(f"{PREFIX}.values.w", (spec.n_role_heads, spec.hidden_dim))
    params.register(f"{PREFIX}.values.b", (spec.n_role_heads,))


def init_policy(params: ParamVector, spec: PolicySpec, rng: np.random.Generator) -> None:
    for i in range(spec.trunk_layers):
        fan_in = spec.obs_dim if i == 0 else spec.hidden_dim
        bound = 1.0 / np.sqrt(fan_in)
        params.get(f"{PREFIX}.trunk.w{i}")[:] = rng.uniform(-bound, bound, (spec.hidden_dim, fan_in))
        params.get(f"{PREFIX}.trunk.b{i}")[:] = 0.0
    bound = 1.0 / np.sqrt(spec.hidden_dim)
    params.get(f"{PREFIX}.heads.w")[:] = rng.uniform(-bound, bound, (spec.n_role_heads, spec.n_actions, spec.hidden_dim))
    params.get(f"{PREFIX}.heads.b")[:] = 0.0
    params.get(f"{PREFIX}.values.w")[:] = rng.uniform(-bound, bound, (spec.n_role_heads, spec.hidden_dim))
    params.get(f"{PREFIX}.values.b")[:] = 0.0


def trunk_forward(params: ParamVector, spec: PolicySpec, obs: np.ndarray):
    """Returns (features (B,h), activations list); obs may be (d,) or (B,d)."""
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    x = obs[None, :] if single else obs
    if x.ndim != 2 or x.shape[1] != spec.obs_dim:
        raise ConfigError(f"observation dim {x.shape} does not match spec {spec.obs_dim}")
    acts = [x]
    h = x
    for i in range(spec.trunk_layers):
        h = np.tanh(h @ params.get(f"{PREFIX}.trunk.w{i}").T + params.get(f"{PREFIX}.trunk.b{i}"))
        acts.append(h)
    return h, acts, single


def trunk_backward(params: ParamVector, spec: PolicySpec, acts: list[np.ndarray], dfeats: np.ndarray, grad: ParamVector) -> None:
    delta = dfeats * (1.0 - acts[-1] ** 2)
    for i in range(spec.trunk_layers - 1, -1, -1):
        grad.get(f"{PREFIX}.trunk.w{i}")[:] += delta.T @ acts[i]
        grad.get(f"{PREFIX}.trunk.b{i}")[:] += delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.get(f"{PREFIX}.trunk.w{i}")) * (1.0 - acts[i] ** 2)


def head_logits(params: ParamVector, spec: PolicySpec, feats: np.ndarray, roles: np.ndarray) -> np.ndarray:
    """Per-sample logits under each sample's own role id."""
    w = params.get(f"{PREFIX}.heads.w")[roles]  # (B, A, h)
    b = params.get(f"{PREFIX}.heads.b")[roles]
    return np.einsum("bah,bh->ba", w, feats) + b


def value_estimates(params: ParamVector, spec: PolicySpec, obs: np.ndarray, roles: np.ndarray) -> np.ndarray:
    feats, _, single = trunk_forward(params, spec, obs)
    roles = np.atleast_1d(np.asarray(roles, dtype=np.int64))
    w = params.get(f"{PREFIX}.values.w")[roles]
    b = params.get(f"{PREFIX}.values.b")[roles]
    v = np.einsum("bh,bh->b", w, feats) + b
    return float(v[0]) if single else v


def action_distribution(params: ParamVector, spec: PolicySpec, obs: np.ndarray, role: int) -> np.ndarray:
    """Probability vector over the action space for one (observation, role)."""
    if not 0 <= role < spec.n_role_heads:
        raise ConfigError(f"role {role} out of range")
    feats, _, _ = trunk_forward(params, spec, obs)
    logits = feats @ params.get(f"{PREFIX}.heads.w")[role].T + params.get(f"{PREFIX}.heads.b")[role]
    return softmax(logits[0])


@dataclass
class ActionSample:
    action: int
    log_prob: float
    role: int


def sample_actions(
    params: ParamVector,
    spec: PolicySpec,
    obs: np.ndarray,
    roles: np.ndarray,
    rng: np.random.Generator,
    greedy: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched sampling; returns (actions, log_probs, values)."""
    feats, _, _ = trunk_forward(params, spec, obs)
    roles = np.asarray(roles, dtype=np.int64)
    logits = head_logits(params, spec, feats, roles)
    logp = log_softmax(logits, axis=-1)
    if greedy:
        actions = np.argmax(logp, axis=-1)
    else:
        probs = np.exp(logp)
        cdf = np.cumsum(probs, axis=-1)
        u = rng.random(size=(obs.shape[0], 1))
        actions = np.minimum((u > cdf[:, :-1]).sum(axis=-1), spec.n_actions - 1)
    vw = params.get(f"{PREFIX}.values.w")[roles]
    vb = params.get(f"{PREFIX}.values.b")[roles]
    values = np.einsum("bh,bh->b", vw, feats) + vb
    return actions, np.take_along_axis(logp, actions[:, None], axis=-1)[:, 0], values


def sample_action(params: ParamVector, spec: PolicySpec, obs: np.ndarray, role: int, rng: np.random.Generator) -> ActionSample:
    actions, logps, _ = sample_actions(params, spec, np.asarray(obs)[None, :], np.array([role]), rng)
    return ActionSample(int(actions[0]), float(logps[0]), role)


def role_loglik_vector(params: ParamVector, spec: PolicySpec, obs: np.ndarray, action: int) -> np.ndarray:
    """ell^z = clamp(log pi(action | obs, z), floor) over the hypothesis roles."""
    return role_loglik_matrix(params, spec, np.asarray(obs)[None, :], np.array([action]))[0]


def role_loglik_matrix(params: ParamVector, spec: PolicySpec, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Batched ell: rows are observations, columns the |Z| hypothesis roles."""
    feats, _, _ = trunk_forward(params, spec, obs)
    actions = np.asarray(actions, dtype=np.int64)
    if np.any(actions < 0) or np.any(actions >= spec.n_actions):
        raise ConfigError("action index out of range")
    w = params.get(f"{PREFIX}.heads.w")[: spec.n_hypotheses]
    b = params.get(f"{PREFIX}.heads.b")[: spec.n_hypotheses]
    logits = np.einsum("zah,bh->bza", w, feats) + b[None]
    logp = log_softmax(logits, axis=-1)
    ell = logp[np.arange(obs.shape[0])[:, None], np.arange(spec.n_hypotheses)[None, :], actions[:, None]]
    return np.maximum(ell, LOG_LIK_FLOOR)


def grad_role_loglik(params: ParamVector, spec: PolicySpec, obs: np.ndarray, action: int, role: int) -> ParamVector:
    """Analytic grad of log pi(action | obs, role) w.r.t. the parameter vector.

    Zero outside the trunk and head-`role` regions; zero everywhere when the
    log-probability sits at the clamp floor.
    """
    grad = params.zeros_like()
    weights = np.zeros(spec.n_hypotheses)
    if role >= spec.n_hypotheses:
        raise ConfigError("gradient only defined for hypothesis roles")
    weights[role] = 1.0
    accumulate_loglik_grads(params, spec, np.asarray(obs), int(action), weights, grad)
    return grad


def accumulate_loglik_grads(
    params: ParamVector,
    spec: PolicySpec,
    obs: np.ndarray,
    action: int,
    weights: np.ndarray,
    grad: ParamVector,
    scale: float = 1.0,
) -> None:
    """Accumulate scale * sum_z weights[z] * grad log pi(action | obs, z).

    One trunk backward serves all hypothesis roles; clamped entries contribute
    nothing.
    """
    feats, acts, _ = trunk_forward(params, spec, obs)
    w = params.get(f"{PREFIX}.heads.w")
    b = params.get(f"{PREFIX}.heads.b")
    gw = grad.get(f"{PREFIX}.heads.w")
    gb = grad.get(f"{PREFIX}.heads.b")
    f = feats[0]
    dfeats = np.zeros_like(f)
    onehot = np.zeros(spec.n_actions)
    onehot[action] = 1.0
    for z in range(spec.n_hypotheses):
        wz = scale * weights[z]
        if wz == 0.0:
            continue
        logits = w[z] @ f + b[z]
        logp = log_softmax(logits)
        if logp[action] < LOG_LIK_FLOOR:
            continue
        dlogits = wz * (onehot - np.exp(logp))
        gw[z] += np.outer(dlogits, f)
        gb[z] += dlogits
        dfeats += w[z].T @ dlogits
    trunk_backward(params, spec, acts, dfeats[None, :], grad)


def restrict_to_role0(grad: ParamVector, spec: PolicySpec) -> ParamVector:
    """Copy with every role-head region except role 0 zeroed; trunk preserved."""
    out = grad.copy()
    for name in (f"{PREFIX}.heads.w", f"{PREFIX}.heads.b", f"{PREFIX}.values.w", f"{PREFIX}.values.b"):
        out.get(name)[1:] = 0.0
    return out
