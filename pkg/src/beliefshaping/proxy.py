"""Observation proxies for observer-belief likelihoods.

Canonical mode substitutes the shaper's own observation for every observer
(one shared evidence stream, separate priors). Estimated mode runs a learned
backward predictor: a single-layer gated recurrent cell over the shaper's
observation sequence, conditioned on observer-slot and observer-role
embeddings, with a linear head producing the predicted observer-conditioned
observation. The predictor is trained on rollout targets (the observers'
local observations, available to the training harness only) and never
receives policy or shaping gradients.

Cell equations (reset-before-candidate convention):
    z = sigmoid(Wz x + Uz h + bz)        update gate
    r = sigmoid(Wr x + Ur h + br)        reset gate
    n = tanh(Wn x + Un (r * h) + bn)     candidate
    h' = (1 - z) * n + z * h
with x = concat(shaper_obs, slot_embedding, role_embedding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .nets import Adam
from .params import ParamVector

PREFIX = "pred"
CANONICAL = "canonical"
ESTIMATED = "estimated"
PROXY_MODES = (CANONICAL, ESTIMATED)

_GATES = ("z", "r", "n")


@dataclass(frozen=True)
class PredictorSpec:
    obs_dim: int
    n_observers: int
    n_role_ids: int
    hidden_dim: int = 64
    emb_dim: int = 8

    @property
    def input_dim(self) -> int:
        return self.obs_dim + 2 * self.emb_dim


def register_predictor(params: ParamVector, spec: PredictorSpec) -> None:
    params.register(f"{PREFIX}.emb.slot", (spec.n_observers, spec.emb_dim))
    params.register(f"{PREFIX}.emb.role", (spec.n_role_ids, spec.emb_dim))
    for g in _GATES:
        params.register(f"{PREFIX}.gru.w{g}", (spec.hidden_dim, spec.input_dim))
        params.register(f"{PREFIX}.gru.u{g}", (spec.hidden_dim, spec.hidden_dim))
        params.register(f"{PREFIX}.gru.b{g}", (spec.hidden_dim,))
    params.register(f"{PREFIX}.out.w", (spec.obs_dim, spec.hidden_dim))
    params.register(f"{PREFIX}.out.b", (spec.obs_dim,))


def init_predictor(params: ParamVector, spec: PredictorSpec, rng: np.random.Generator) -> None:
    for name in (f"{PREFIX}.emb.slot", f"{PREFIX}.emb.role"):
        bound = 1.0 / np.sqrt(spec.emb_dim)
        params.get(name)[:] = rng.uniform(-bound, bound, params.shape_of(name))
    for g in _GATES:
        params.get(f"{PREFIX}.gru.w{g}")[:] = rng.uniform(
            -1.0 / np.sqrt(spec.input_dim), 1.0 / np.sqrt(spec.input_dim), (spec.hidden_dim, spec.input_dim)
        )
        params.get(f"{PREFIX}.gru.u{g}")[:] = rng.uniform(
            -1.0 / np.sqrt(spec.hidden_dim), 1.0 / np.sqrt(spec.hidden_dim), (spec.hidden_dim, spec.hidden_dim)
        )
        params.get(f"{PREFIX}.gru.b{g}")[:] = 0.0
    params.get(f"{PREFIX}.out.w")[:] = rng.uniform(
        -1.0 / np.sqrt(spec.hidden_dim), 1.0 / np.sqrt(spec.hidden_dim), (spec.obs_dim, spec.hidden_dim)
    )
    params.get(f"{PREFIX}.out.b")[:] = 0.0


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def predictor_inputs(params: ParamVector, spec: PredictorSpec, obs: np.ndarray, slots: np.ndarray, roles: np.ndarray) -> np.ndarray:
    """x rows: concat(obs, slot_emb, role_emb); batched over leading axis."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if obs.shape[1] != spec.obs_dim:
        raise ConfigError("predictor obs dim mismatch")
    slot_e = params.get(f"{PREFIX}.emb.slot")[np.atleast_1d(slots)]
    role_e = params.get(f"{PREFIX}.emb.role")[np.atleast_1d(roles)]
    return np.concatenate([obs, slot_e, role_e], axis=1)


def gru_step(params: ParamVector, spec: PredictorSpec, x: np.ndarray, h: np.ndarray):
    """One batched cell step; returns (h_next, cache)."""
    wz, uz, bz = (params.get(f"{PREFIX}.gru.{n}z") for n in ("w", "u", "b"))
    wr, ur, br = (params.get(f"{PREFIX}.gru.{n}r") for n in ("w", "u", "b"))
    wn, un, bn = (params.get(f"{PREFIX}.gru.{n}n") for n in ("w", "u", "b"))
    z = _sigmoid(x @ wz.T + h @ uz.T + bz)
    r = _sigmoid(x @ wr.T + h @ ur.T + br)
    n = np.tanh(x @ wn.T + (r * h) @ un.T + bn)
    h_next = (1.0 - z) * n + z * h
    return h_next, (x, h, z, r, n)


def gru_step_backward(params: ParamVector, spec: PredictorSpec, cache, dh: np.ndarray, grad: ParamVector) -> tuple[np.ndarray, np.ndarray]:
    """Backward through one cell step: returns (dh_prev, dx)."""
    x, h_prev, z, r, n = cache
    uz = params.get(f"{PREFIX}.gru.uz")
    ur = params.get(f"{PREFIX}.gru.ur")
    un = params.get(f"{PREFIX}.gru.un")

    dn = dh * (1.0 - z)
    dz = dh * (h_prev - n)
    dh_prev = dh * z
    dx = np.zeros_like(x)

    da_n = dn * (1.0 - n * n)
    grad.get(f"{PREFIX}.gru.wn")[:] += da_n.T @ x
    grad.get(f"{PREFIX}.gru.un")[:] += da_n.T @ (r * h_prev)
    grad.get(f"{PREFIX}.gru.bn")[:] += da_n.sum(axis=0)
    dx += da_n @ params.get(f"{PREFIX}.gru.wn")
    drh = da_n @ un
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    da_z = dz * z * (1.0 - z)
    grad.get(f"{PREFIX}.gru.wz")[:] += da_z.T @ x
    grad.get(f"{PREFIX}.gru.uz")[:] += da_z.T @ h_prev
    grad.get(f"{PREFIX}.gru.bz")[:] += da_z.sum(axis=0)
    dx += da_z @ params.get(f"{PREFIX}.gru.wz")
    dh_prev = dh_prev + da_z @ uz

    da_r = dr * r * (1.0 - r)
    grad.get(f"{PREFIX}.gru.wr")[:] += da_r.T @ x
    grad.get(f"{PREFIX}.gru.ur")[:] += da_r.T @ h_prev
    grad.get(f"{PREFIX}.gru.br")[:] += da_r.sum(axis=0)
    dx += da_r @ params.get(f"{PREFIX}.gru.wr")
    dh_prev = dh_prev + da_r @ ur

    return dh_prev, dx


def predict_sequence(params: ParamVector, spec: PredictorSpec, obs_seq: np.ndarray, slot: int, role: int):
    """Predictions for one observer over a shaper-observation sequence."""
    obs_seq = np.atleast_2d(np.asarray(obs_seq, dtype=np.float64))
    h = np.zeros((1, spec.hidden_dim))
    preds = np.empty_like(obs_seq)
    caches = []
    wo = params.get(f"{PREFIX}.out.w")
    bo = params.get(f"{PREFIX}.out.b")
    for t in range(obs_seq.shape[0]):
        x = predictor_inputs(params, spec, obs_seq[t], np.array([slot]), np.array([role]))
        h, cache = gru_step(params, spec, x, h)
        caches.append((cache, h))
        preds[t] = (h @ wo.T + bo)[0]
    return preds, caches


def sequence_backward(
    params: ParamVector,
    spec: PredictorSpec,
    caches,
    dpreds: np.ndarray,
    slot: int,
    role: int,
    grad: ParamVector,
) -> None:
    """Backpropagation through time over one recorded sequence."""
    wo = params.get(f"{PREFIX}.out.w")
    dh = np.zeros((1, spec.hidden_dim))
    dslot = np.zeros(spec.emb_dim)
    drole = np.zeros(spec.emb_dim)
    for t in range(len(caches) - 1, -1, -1):
        cache, h = caches[t]
        dy = np.atleast_2d(dpreds[t])
        grad.get(f"{PREFIX}.out.w")[:] += dy.T @ h
        grad.get(f"{PREFIX}.out.b")[:] += dy[0]
        dh = dh + dy @ wo
        dh, dx = gru_step_backward(params, spec, cache, dh, grad)
        dslot += dx[0, spec.obs_dim : spec.obs_dim + spec.emb_dim]
        drole += dx[0, spec.obs_dim + spec.emb_dim :]
    grad.get(f"{PREFIX}.emb.slot")[slot] += dslot
    grad.get(f"{PREFIX}.emb.role")[role] += drole


def proxy_observation(
    mode: str,
    obs_history: np.ndarray,
    slot: int,
    role: int | None = None,
    params: ParamVector | None = None,
    spec: PredictorSpec | None = None,
) -> np.ndarray:
    """Observation stand-in for observer `slot` at the current step.

    Canonical: the shaper's current observation, unchanged. Estimated: the
    predictor output at the last step of the history.
    """
    obs_history = np.atleast_2d(np.asarray(obs_history, dtype=np.float64))
    if mode == CANONICAL:
        return obs_history[-1].copy()
    if mode != ESTIMATED:
        raise ConfigError(f"unknown proxy mode {mode!r}")
    if params is None or spec is None or role is None:
        raise ConfigError("estimated mode requires a trained predictor")
    preds, _ = predict_sequence(params, spec, obs_history, slot, role)
    return preds[-1]


class PredictorState:
    """Stateful per-(env, observer) hidden states for incremental rollouts."""

    def __init__(self, spec: PredictorSpec, n_rows: int):
        self.spec = spec
        self.h = np.zeros((n_rows, spec.hidden_dim))

    def reset_rows(self, rows: np.ndarray) -> None:
        self.h[rows] = 0.0

    def step(self, params: ParamVector, obs: np.ndarray, slots: np.ndarray, roles: np.ndarray) -> np.ndarray:
        x = predictor_inputs(params, self.spec, obs, slots, roles)
        self.h, _ = gru_step(params, self.spec, x, self.h)
        return self.h @ params.get(f"{PREFIX}.out.w").T + params.get(f"{PREFIX}.out.b")


def train_predictor(
    params: ParamVector,
    spec: PredictorSpec,
    sequences: list[tuple[np.ndarray, int, int, np.ndarray]],
    lr: float,
    epochs: int,
    rng: np.random.Generator | None = None,
    optimizer: Adam | None = None,
) -> dict:
    """MSE training on (shaper-obs sequence, slot, role, observer-obs targets).

    Backpropagation is truncated at sequence boundaries (sequences are episode
    segments within one rollout). Returns per-epoch losses and a per-dimension
    squared-error report for the final parameters.
    """
    if not sequences:
        raise DataError("empty predictor dataset")
    for obs_seq, _, _, target_seq in sequences:
        if np.asarray(obs_seq).shape != np.asarray(target_seq).shape:
            raise DataError("predictor input/target sequences must align")
    if optimizer is None:
        optimizer = Adam(params.size, lr)
    if rng is None:
        rng = np.random.default_rng(0)
    n_elems = sum(np.asarray(t).size for _, _, _, t in sequences)
    epoch_losses = []
    for _ in range(epochs):
        grad = params.zeros_like()
        total = 0.0
        for obs_seq, slot, role, target_seq in sequences:
            preds, caches = predict_sequence(params, spec, obs_seq, slot, role)
            err = preds - target_seq
            total += float(np.sum(err**2))
            sequence_backward(params, spec, caches, 2.0 * err / n_elems, slot, role, grad)
        optimizer.step(params, grad.data)
        epoch_losses.append(total / n_elems)
    per_dim = np.zeros(spec.obs_dim)
    count = 0
    for obs_seq, slot, role, target_seq in sequences:
        preds, _ = predict_sequence(params, spec, obs_seq, slot, role)
        per_dim += np.sum((preds - target_seq) ** 2, axis=0)
        count += np.asarray(obs_seq).shape[0]
    return {"epoch_losses": epoch_losses, "per_dim_mse": per_dim / max(count, 1)}
