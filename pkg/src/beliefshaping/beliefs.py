"""Differentiable softmax-Bayes belief dynamics and their Jacobians.

Conventions used throughout:

- A belief row b is a probability vector over the |Z| role hypotheses.
- One update step with log-likelihood vector ell, temperature tau and floor
  alpha is  b' = (1 - alpha) * softmax(ell / tau + log b) + alpha / |Z|.
- The Jacobian of softmax at output b is S(b) = diag(b) - b b^T.
- The belief-to-belief Jacobian of one step is
  J = (1 - alpha) * D(raw') (I - 1 raw'^T) D(b)^{-1},
  where raw' is the pre-floor softmax output. For alpha = 0 a product of
  consecutive J's collapses to D(end) (I - 1 end^T) D(start)^{-1}; the floored
  chain does not collapse, so exact gradients go through `chain_backward`,
  the per-step reverse accumulation (identical to the closed form at alpha=0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError

# Applied to log pi before forming ell; keeps likelihood evidence finite even
# for near-zero action probabilities (exp(-30) is far below any floor/|Z|).
LOG_LIK_FLOOR = -30.0


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def belief_entropy(b: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats; 0 log 0 treated as 0."""
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(b > 0.0, b * np.log(b), 0.0)
    return -np.sum(terms, axis=axis)


def uniform_belief(n_hypotheses: int) -> np.ndarray:
    return np.full(n_hypotheses, 1.0 / n_hypotheses)


def check_simplex(b: np.ndarray, tol: float = 1e-9) -> None:
    b = np.asarray(b)
    if np.any(b < -tol) or np.any(np.abs(np.sum(b, axis=-1) - 1.0) > tol):
        raise ConfigError("belief rows must lie on the probability simplex")


def softmax_bayes_step(
    prior: np.ndarray,
    ell: np.ndarray,
    temperature: float = 1.0,
    alpha_floor: float = 0.0,
) -> np.ndarray:
    """One differentiable Bayes update, batched over leading axes.

    Returns (1 - alpha) * softmax(ell / tau + log prior) + alpha / |Z|, so the
    output is on the simplex with min entry >= alpha / |Z|.
    """
    raw = softmax_bayes_step_raw(prior, ell, temperature)
    return apply_belief_floor(raw, alpha_floor)


def softmax_bayes_step_raw(prior: np.ndarray, ell: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """The pre-floor softmax-Bayes posterior."""
    prior = np.asarray(prior, dtype=np.float64)
    ell = np.asarray(ell, dtype=np.float64)
    if prior.shape[-1] != ell.shape[-1]:
        raise ConfigError("prior and log-likelihood vector lengths disagree")
    if temperature < 1.0:
        raise ConfigError("temperature must be >= 1")
    if not np.all(np.isfinite(ell)):
        raise NumericError("non-finite log-likelihood entry")
    with np.errstate(divide="ignore"):
        logits = ell / temperature + np.log(prior)
    return softmax(logits, axis=-1)


def apply_belief_floor(b: np.ndarray, alpha_floor: float) -> np.ndarray:
    if not 0.0 <= alpha_floor < 1.0:
        raise ConfigError("alpha_floor must be in [0, 1)")
    if alpha_floor == 0.0:
        return b
    n = b.shape[-1]
    return (1.0 - alpha_floor) * b + alpha_floor / n


@dataclass
class BeliefChainTape:
    """Record of a k-step unroll for one observer matrix.

    beliefs[0] is the start matrix; beliefs[s+1] is the floored output of step
    s; raw[s] is the pre-floor softmax output of step s. Replaying the tape
    (unroll_chain on start/ells with the same settings) reproduces beliefs
    bit-exactly.
    """

    start: np.ndarray  # (m, Z)
    ells: np.ndarray  # (k, m, Z)
    beliefs: np.ndarray  # (k+1, m, Z)
    raw: np.ndarray  # (k, m, Z)
    temperature: float
    alpha_floor: float

    @property
    def horizon(self) -> int:
        return self.ells.shape[0]

    @property
    def n_observers(self) -> int:
        return self.start.shape[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.beliefs[-1]


def unroll_chain(
    start: np.ndarray,
    ells: np.ndarray,
    temperature: float = 1.0,
    alpha_floor: float = 0.0,
) -> BeliefChainTape:
    """Apply k row-wise softmax-Bayes updates and record the full tape."""
    start = np.atleast_2d(np.asarray(start, dtype=np.float64))
    ells = np.asarray(ells, dtype=np.float64)
    if ells.ndim == 2:
        ells = ells[:, None, :]
    if ells.ndim != 3 or ells.shape[1:] != start.shape:
        raise ConfigError(f"ells shape {ells.shape} incompatible with start {start.shape}")
    k = ells.shape[0]
    if k < 1:
        raise ConfigError("chain horizon k must be >= 1")
    beliefs = np.empty((k + 1,) + start.shape)
    raw = np.empty((k,) + start.shape)
    beliefs[0] = start
    for s in range(k):
        raw[s] = softmax_bayes_step_raw(beliefs[s], ells[s], temperature)
        beliefs[s + 1] = apply_belief_floor(raw[s], alpha_floor)
    return BeliefChainTape(start, ells, beliefs, raw, temperature, alpha_floor)


def softmax_jacobian(b_next: np.ndarray) -> np.ndarray:
    """d softmax / d logits at output b: diag(b) - b b^T. Columns sum to 0."""
    b = np.asarray(b_next, dtype=np.float64)
    check_simplex(b)
    return np.diag(b) - np.outer(b, b)


def step_jacobian(raw_next: np.ndarray, b_prev: np.ndarray, alpha_floor: float = 0.0) -> np.ndarray:
    """Belief-to-belief Jacobian of one (possibly floored) update step."""
    raw_next = np.asarray(raw_next, dtype=np.float64)
    b_prev = np.asarray(b_prev, dtype=np.float64)
    if np.any(b_prev <= 0.0):
        raise NumericError("zero belief entry makes the step Jacobian singular")
    n = raw_next.size
    core = np.diag(raw_next) @ (np.eye(n) - np.outer(np.ones(n), raw_next))
    return (1.0 - alpha_floor) * core / b_prev[None, :]


def chain_jacobian_naive(tape: BeliefChainTape, s: int, observer: int = 0) -> np.ndarray:
    """Explicit left-to-right product of step Jacobians from step s+1 to the end.

    s = horizon-1 gives the empty product (identity). Requires strictly
    positive beliefs along the tape.
    """
    k = tape.horizon
    if not 0 <= s <= k - 1:
        raise ConfigError(f"step index {s} outside window of horizon {k}")
    n = tape.start.shape[-1]
    prod = np.eye(n)
    for r in range(k - 1, s, -1):
        prod = prod @ step_jacobian(tape.raw[r, observer], tape.beliefs[r, observer], tape.alpha_floor)
    return prod


def chain_jacobian_closed(b_end: np.ndarray, b_start: np.ndarray) -> np.ndarray:
    """Collapsed chain Jacobian D(end) (I - 1 end^T) D(start)^{-1}.

    Valid for the unfloored chain; intermediate beliefs are not needed.
    """
    b_end = np.asarray(b_end, dtype=np.float64)
    b_start = np.asarray(b_start, dtype=np.float64)
    if np.any(b_start <= 0.0):
        raise NumericError("zero entry in the chain-start belief (singular)")
    n = b_end.size
    core = np.diag(b_end) @ (np.eye(n) - np.outer(np.ones(n), b_end))
    return core / b_start[None, :]


def operator_norm_1to1(m: np.ndarray) -> float:
    """Induced 1-norm: maximum column absolute sum."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(m), axis=0)))


def chain_backward(tape: BeliefChainTape, endpoint_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode sweep through the recorded chain.

    Given dL/d(endpoint beliefs), returns (dL/d ells, dL/d start beliefs) as
    arrays shaped like tape.ells and tape.start. Exact for any temperature and
    floor; at alpha=0 the per-step coefficients equal g^T Pi_s S_s with the
    collapsed Pi_s.
    """
    v = np.atleast_2d(np.asarray(endpoint_grad, dtype=np.float64)).copy()
    if v.shape != tape.start.shape:
        raise ConfigError("endpoint gradient shape must match the belief matrix")
    keep = 1.0 - tape.alpha_floor
    coeffs = np.empty_like(tape.ells)
    for s in range(tape.horizon - 1, -1, -1):
        raw = tape.raw[s]
        sv = raw * v - raw * np.sum(raw * v, axis=-1, keepdims=True)
        coeffs[s] = (keep / tape.temperature) * sv
        if np.any(tape.beliefs[s] <= 0.0):
            raise NumericError("zero belief entry in the chain interior")
        v = keep * sv / tape.beliefs[s]
    return coeffs, v
