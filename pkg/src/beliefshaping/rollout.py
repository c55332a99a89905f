"""On-policy rollout collection with per-observer belief tracking.

The buffer stores, per environment and step: every agent's observation,
action, reward, log-probability, value estimate and role; the terminal flag;
the shaper's identity; and the m observer belief rows *prior* to that step's
update (the chain construction consumes the likelihoods at steps t..t+k-1
starting from exactly these priors). Proxy observations are recorded so the
likelihoods can be recomputed as a pure function of the policy parameters.

Episode boundaries inside a rollout reset beliefs to uniform and re-sample
roles; windows never cross them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bbm import BbmConfig, mean_intrinsic_reward
from .beliefs import softmax_bayes_step, uniform_belief
from .envs import make_env
from .errors import ConfigError
from .params import ParamVector
from .policy import PolicySpec, role_loglik_matrix, sample_actions, value_estimates
from .proxy import CANONICAL, ESTIMATED, PredictorSpec, PredictorState


@dataclass
class EpisodeRecord:
    env: int
    returns: np.ndarray  # (n_agents,) summed extrinsic rewards
    length: int
    outcome: str | None
    shaper_return: float
    shaper_team_won: bool | None


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (E, T, N, D)
    actions: np.ndarray  # (E, T, N)
    rewards: np.ndarray  # (E, T, N) training rewards (incl. intrinsic if any)
    extrinsic: np.ndarray  # (E, T, N) pure environment rewards
    logps: np.ndarray  # (E, T, N)
    values: np.ndarray  # (E, T, N)
    roles: np.ndarray  # (E, T, N)
    dones: np.ndarray  # (E, T) bool
    beliefs: np.ndarray  # (E, T, m, Z) priors at each step
    proxy_obs: np.ndarray  # (E, T, m, D)
    shaper: np.ndarray  # (E, T)
    observers: np.ndarray  # (E, T, m)
    final_obs: np.ndarray  # (E, N, D)
    final_roles: np.ndarray  # (E, N)
    final_values: np.ndarray  # (E, N)
    alpha_floor: float
    temperature: float
    proxy_mode: str
    episodes: list[EpisodeRecord] = field(default_factory=list)
    intrinsic_per_step: np.ndarray | None = None  # (E, T) when BBM is active

    @property
    def n_envs(self) -> int:
        return self.obs.shape[0]

    @property
    def horizon(self) -> int:
        return self.obs.shape[1]

    @property
    def n_observers(self) -> int:
        return self.beliefs.shape[2]

    @property
    def n_hypotheses(self) -> int:
        return self.beliefs.shape[3]

    def window_valid(self, env: int, t: int, k: int) -> bool:
        """True when [t, t+k-1] stays within the rollout and one episode."""
        if t < 0 or k < 1 or t + k > self.horizon - 1:
            return False
        return not bool(self.dones[env, t : t + k].any())

    def window_starts(self, k: int) -> list[tuple[int, int]]:
        """All valid (env, t) windows; t runs over 0..T-k-1."""
        return [
            (e, t)
            for e in range(self.n_envs)
            for t in range(self.horizon - k)
            if self.window_valid(e, t, k)
        ]


class Runner:
    """Owns the parallel environment instances and the carried belief state."""

    def __init__(
        self,
        env_name: str,
        n_envs: int,
        policy_spec: PolicySpec,
        alpha_floor: float = 0.05,
        temperature: float = 1.0,
        proxy_mode: str = CANONICAL,
        predictor_spec: PredictorSpec | None = None,
        seed_stream: np.random.Generator | None = None,
    ):
        if proxy_mode == ESTIMATED and predictor_spec is None:
            raise ConfigError("estimated proxy mode requires a predictor spec")
        self.envs = [make_env(env_name) for _ in range(n_envs)]
        self.env_spec = self.envs[0].spec
        self.policy_spec = policy_spec
        self.alpha_floor = alpha_floor
        self.temperature = temperature
        self.proxy_mode = proxy_mode
        self.predictor_spec = predictor_spec
        self.seed_stream = seed_stream if seed_stream is not None else np.random.default_rng(0)
        m = self.env_spec.n_observers
        self.obs = np.zeros((n_envs, self.env_spec.n_agents, self.env_spec.obs_dim))
        self.beliefs = np.zeros((n_envs, m, self.env_spec.n_hypotheses))
        self.pred_state = PredictorState(predictor_spec, n_envs * m) if predictor_spec else None
        self._ep_returns = np.zeros((n_envs, self.env_spec.n_agents))
        self._ep_len = np.zeros(n_envs, dtype=np.int64)
        self.total_steps = 0
        for e in range(n_envs):
            self._reset_env(e)

    def _reset_env(self, e: int) -> None:
        seed = int(self.seed_stream.integers(0, 2**62))
        self.obs[e] = self.envs[e].reset(seed)
        self.beliefs[e] = uniform_belief(self.env_spec.n_hypotheses)
        if self.pred_state is not None:
            m = self.env_spec.n_observers
            self.pred_state.reset_rows(np.arange(e * m, (e + 1) * m))
        self._ep_returns[e] = 0.0
        self._ep_len[e] = 0

    def collect(
        self,
        params: ParamVector,
        horizon: int,
        rng_actions: np.random.Generator,
        bbm: BbmConfig | None = None,
    ) -> RolloutBuffer:
        E = len(self.envs)
        N = self.env_spec.n_agents
        D = self.env_spec.obs_dim
        m = self.env_spec.n_observers
        Z = self.env_spec.n_hypotheses
        T = horizon

        buf = RolloutBuffer(
            obs=np.zeros((E, T, N, D)),
            actions=np.zeros((E, T, N), dtype=np.int64),
            rewards=np.zeros((E, T, N)),
            extrinsic=np.zeros((E, T, N)),
            logps=np.zeros((E, T, N)),
            values=np.zeros((E, T, N)),
            roles=np.zeros((E, T, N), dtype=np.int64),
            dones=np.zeros((E, T), dtype=bool),
            beliefs=np.zeros((E, T, m, Z)),
            proxy_obs=np.zeros((E, T, m, D)),
            shaper=np.zeros((E, T), dtype=np.int64),
            observers=np.zeros((E, T, m), dtype=np.int64),
            final_obs=np.zeros((E, N, D)),
            final_roles=np.zeros((E, N), dtype=np.int64),
            final_values=np.zeros((E, N)),
            alpha_floor=self.alpha_floor,
            temperature=self.temperature,
            proxy_mode=self.proxy_mode,
        )
        if bbm is not None and bbm.lambda_bbm > 0.0:
            buf.intrinsic_per_step = np.zeros((E, T))

        for t in range(T):
            roles = np.stack([env.roles for env in self.envs])
            shaper_idx = np.array([env.shaper_index for env in self.envs])
            observer_idx = np.stack([env.observer_indices for env in self.envs])
            buf.obs[:, t] = self.obs
            buf.roles[:, t] = roles
            buf.shaper[:, t] = shaper_idx
            buf.observers[:, t] = observer_idx
            buf.beliefs[:, t] = self.beliefs

            flat_obs = self.obs.reshape(E * N, D)
            flat_roles = roles.reshape(E * N)
            actions, logps, values = sample_actions(params, self.policy_spec, flat_obs, flat_roles, rng_actions)
            actions = actions.reshape(E, N)
            buf.actions[:, t] = actions
            buf.logps[:, t] = logps.reshape(E, N)
            buf.values[:, t] = values.reshape(E, N)

            shaper_obs = self.obs[np.arange(E), shaper_idx]
            shaper_actions = actions[np.arange(E), shaper_idx]
            if self.proxy_mode == CANONICAL:
                proxies = np.repeat(shaper_obs[:, None, :], m, axis=1)
                ells = role_loglik_matrix(params, self.policy_spec, shaper_obs, shaper_actions)
                ells = np.repeat(ells[:, None, :], m, axis=1)
            else:
                observer_roles = np.take_along_axis(roles, observer_idx, axis=1)
                slots = np.tile(np.arange(m), E)
                pred = self.pred_state.step(
                    params,
                    np.repeat(shaper_obs, m, axis=0),
                    slots,
                    observer_roles.reshape(E * m),
                )
                proxies = pred.reshape(E, m, D)
                ells = role_loglik_matrix(
                    params,
                    self.policy_spec,
                    proxies.reshape(E * m, D),
                    np.repeat(shaper_actions, m),
                ).reshape(E, m, Z)
            buf.proxy_obs[:, t] = proxies

            if buf.intrinsic_per_step is not None:
                for e in range(E):
                    z_star = bbm.z_star if bbm.z_star is not None else int(roles[e, shaper_idx[e]])
                    buf.intrinsic_per_step[e, t] = mean_intrinsic_reward(
                        ells[e], self.beliefs[e], z_star, bbm.lambda_bbm
                    )

            self.beliefs = softmax_bayes_step(self.beliefs, ells, self.temperature, self.alpha_floor)

            for e, env in enumerate(self.envs):
                tr = env.step(actions[e])
                buf.extrinsic[e, t] = tr.rewards
                buf.rewards[e, t] = tr.rewards
                if buf.intrinsic_per_step is not None:
                    buf.rewards[e, t, shaper_idx[e]] += buf.intrinsic_per_step[e, t]
                self._ep_returns[e] += tr.rewards
                self._ep_len[e] += 1
                buf.dones[e, t] = tr.done
                if tr.done:
                    buf.episodes.append(self._episode_record(e, env))
                    self._reset_env(e)
                else:
                    self.obs[e] = tr.obs
            self.total_steps += E

        buf.final_obs[:] = self.obs
        buf.final_roles[:] = np.stack([env.roles for env in self.envs])
        buf.final_values[:] = value_estimates(
            params, self.policy_spec, self.obs.reshape(E * N, D), buf.final_roles.reshape(E * N)
        ).reshape(E, N)
        return buf

    def _episode_record(self, e: int, env) -> EpisodeRecord:
        shaper = env.shaper_index
        outcome = env.outcome()
        won = None
        if outcome == "spy_win":
            won = True
        elif outcome == "resistance_win":
            won = False
        return EpisodeRecord(
            env=e,
            returns=self._ep_returns[e].copy(),
            length=int(self._ep_len[e]),
            outcome=outcome,
            shaper_return=float(self._ep_returns[e][shaper]),
            shaper_team_won=won,
        )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    final_values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    gae_lambda: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Standard GAE with terminal masking; returns (advantages, value targets)."""
    E, T = rewards.shape[:2]
    adv = np.zeros_like(rewards)
    next_values = final_values.astype(np.float64)
    carry = np.zeros_like(final_values)
    for t in range(T - 1, -1, -1):
        mask = (~dones[:, t]).astype(np.float64)[:, None]
        delta = rewards[:, t] + gamma * next_values * mask - values[:, t]
        carry = delta + gamma * gae_lambda * mask * carry
        adv[:, t] = carry
        next_values = values[:, t]
    return adv, adv + values


def reward_to_go(
    rewards: np.ndarray,
    dones: np.ndarray,
    final_values: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Discounted reward-to-go with terminal bootstrap from the value head."""
    E, T = rewards.shape[:2]
    out = np.zeros_like(rewards)
    carry = final_values.astype(np.float64)
    for t in range(T - 1, -1, -1):
        mask = (~dones[:, t]).astype(np.float64)[:, None]
        carry = rewards[:, t] + gamma * mask * carry
        out[:, t] = carry
    return out


def export_beliefs_jsonl(buf: RolloutBuffer, path) -> None:
    """One record per (step, env, observer): the tracked posterior row."""
    with open(path, "w") as fh:
        for e in range(buf.n_envs):
            for t in range(buf.horizon):
                for j in range(buf.n_observers):
                    fh.write(
                        json.dumps(
                            {
                                "env": e,
                                "step": t,
                                "observer": j,
                                "agent": int(buf.observers[e, t, j]),
                                "belief": [float(x) for x in buf.beliefs[e, t, j]],
                            }
                        )
                        + "\n"
                    )


def synthetic_buffer(
    rng: np.random.Generator,
    policy_spec: PolicySpec,
    n_envs: int = 2,
    horizon: int = 6,
    n_observers: int = 2,
    alpha_floor: float = 0.0,
    temperature: float = 1.0,
    done_prob: float = 0.0,
) -> RolloutBuffer:
    """Random buffer for gradient oracles and construction audits.

    Proxy observations, actions and start beliefs are random; beliefs at later
    steps are arbitrary simplex rows (window operations re-unroll from the
    stored start anyway).
    """
    E, T = n_envs, horizon
    N = max(2, policy_spec.n_role_heads)
    D = policy_spec.obs_dim
    m, Z = n_observers, policy_spec.n_hypotheses
    raw = rng.uniform(0.2, 1.0, size=(E, T, m, Z))
    beliefs = raw / raw.sum(axis=-1, keepdims=True)
    dones = rng.random((E, T)) < done_prob
    return RolloutBuffer(
        obs=rng.normal(size=(E, T, N, D)),
        actions=rng.integers(0, policy_spec.n_actions, size=(E, T, N)),
        rewards=rng.normal(size=(E, T, N)),
        extrinsic=np.zeros((E, T, N)),
        logps=np.zeros((E, T, N)),
        values=np.zeros((E, T, N)),
        roles=rng.integers(0, policy_spec.n_role_heads, size=(E, T, N)),
        dones=dones,
        beliefs=beliefs,
        proxy_obs=rng.normal(size=(E, T, m, D)),
        shaper=np.zeros((E, T), dtype=np.int64),
        observers=np.tile(np.arange(1, m + 1), (E, T, 1)),
        final_obs=rng.normal(size=(E, N, D)),
        final_roles=np.zeros((E, N), dtype=np.int64),
        final_values=np.zeros((E, N)),
        alpha_floor=alpha_floor,
        temperature=temperature,
        proxy_mode=CANONICAL,
    )
