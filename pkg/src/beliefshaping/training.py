"""PPO over parallel hidden-role environments, with optional reward or
gradient transforms: the Bayes-factor intrinsic reward folds into rewards
before advantage estimation, the belief-shaping correction folds into the
policy gradient after it. All agents share one role-conditioned parameter
vector (co-training); only the shaping correction is role-restricted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bbm import BbmConfig
from .beliefs import log_softmax
from .critic import CriticSpec, init_critic, register_critic, train_critic
from .envs import make_env
from .errors import ConfigError, NumericError
from .nets import Adam, clip_grad_norm
from .params import ParamVector, save_checkpoint
from .policy import (
    PolicySpec,
    head_logits,
    init_policy,
    register_policy,
    sample_actions,
    trunk_backward,
    trunk_forward,
)
from .proxy import ESTIMATED, PredictorSpec, init_predictor, register_predictor, train_predictor
from .rollout import RolloutBuffer, Runner, compute_gae, reward_to_go
from .shaping import ShapingConfig, compute_shaping_gradient, inject_correction


@dataclass(frozen=True)
class PpoConfig:
    n_envs: int = 16
    rollout_len: int = 32
    epochs: int = 2
    minibatches: int = 2
    lr: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 2_000_000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("discount gamma must be in (0, 1]")
        if min(self.n_envs, self.rollout_len, self.epochs, self.minibatches) < 1:
            raise ConfigError("PPO shape parameters must be >= 1")

    @property
    def inner_steps(self) -> int:
        return self.epochs * self.minibatches


def ppo_minibatch_grad(
    params: ParamVector,
    spec: PolicySpec,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    value_targets: np.ndarray,
    roles: np.ndarray,
    cfg: PpoConfig,
) -> tuple[ParamVector, dict]:
    """Gradient of the clipped-surrogate + value + entropy loss on one minibatch."""
    B = obs.shape[0]
    feats, acts, _ = trunk_forward(params, spec, obs)
    logits = head_logits(params, spec, feats, roles)
    logp_all = log_softmax(logits, axis=-1)
    probs = np.exp(logp_all)
    idx = np.arange(B)
    logp = logp_all[idx, actions]

    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    unclipped_active = surr1 <= surr2
    dlogp = np.where(unclipped_active, -advantages * ratio, 0.0) / B

    vw = params.get("policy.values.w")[roles]
    vb = params.get("policy.values.b")[roles]
    values = np.einsum("bh,bh->b", vw, feats) + vb
    verr = values - value_targets
    value_loss = 0.5 * float(np.mean(verr**2))
    dvalues = cfg.value_coef * verr / B

    entropy = -np.sum(probs * logp_all, axis=-1)
    mean_entropy = float(np.mean(entropy))
    # loss includes -entropy_coef * H
    dlogits = dlogp[:, None] * (np.eye(spec.n_actions)[actions] - probs)
    dlogits += (cfg.entropy_coef / B) * probs * (logp_all + entropy[:, None])

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * mean_entropy
    if not np.isfinite(loss):
        raise NumericError(
            f"non-finite PPO loss (policy={policy_loss}, value={value_loss}, entropy={mean_entropy})"
        )

    grad = params.zeros_like()
    gw = grad.get("policy.heads.w")
    gb = grad.get("policy.heads.b")
    gvw = grad.get("policy.values.w")
    gvb = grad.get("policy.values.b")
    hw = params.get("policy.heads.w")
    dfeats = np.einsum("ba,bah->bh", dlogits, hw[roles]) + dvalues[:, None] * vw
    for z in range(spec.n_role_heads):
        rows = roles == z
        if not np.any(rows):
            continue
        gw[z] += dlogits[rows].T @ feats[rows]
        gb[z] += dlogits[rows].sum(axis=0)
        gvw[z] += dvalues[rows] @ feats[rows]
        gvb[z] += dvalues[rows].sum()
    trunk_backward(params, spec, acts, dfeats, grad)

    stats = {
        "loss": float(loss),
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": mean_entropy,
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_fraction": float(np.mean(~unclipped_active)),
    }
    return grad, stats


def ppo_update(
    params: ParamVector,
    spec: PolicySpec,
    optimizer: Adam,
    buf: RolloutBuffer,
    advantages: np.ndarray,
    value_targets: np.ndarray,
    cfg: PpoConfig,
    rng: np.random.Generator,
    g_shaping: ParamVector | None = None,
) -> dict:
    """Epochs x minibatches of clipped-surrogate updates at fixed correction.

    The correction is computed once at the rollout parameters and injected as
    g/M at every inner step, after the PPO gradient's norm clip, so the total
    injected over the iteration is exactly g.
    """
    E, T, N = buf.actions.shape
    obs = buf.obs.reshape(E * T * N, -1)
    actions = buf.actions.reshape(-1)
    logp_old = buf.logps.reshape(-1)
    roles = buf.roles.reshape(-1)
    adv = advantages.reshape(-1)
    vt = value_targets.reshape(-1)
    n = adv.size
    if n % cfg.minibatches != 0:
        raise ConfigError(f"minibatch count {cfg.minibatches} must divide sample count {n}")
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    stats: dict = {}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for chunk in order.reshape(cfg.minibatches, -1):
            grad, stats = ppo_minibatch_grad(
                params, spec, obs[chunk], actions[chunk], logp_old[chunk], adv[chunk], vt[chunk], roles[chunk], cfg
            )
            clip_grad_norm(grad.data, cfg.max_grad_norm)
            if g_shaping is not None:
                grad = inject_correction(grad, g_shaping, cfg.inner_steps)
            optimizer.step(params, grad.data)
    return stats


@dataclass
class EvalResult:
    n_episodes: int
    mean_return: float
    return_se: float
    win_rate: float | None
    win_se: float | None

    def table_row(self, label: str) -> str:
        if self.win_rate is None:
            return f"{label} & {self.mean_return:.3f} $\\pm$ {self.return_se:.3f}"
        return f"{label} & {self.win_rate:.3f} $\\pm$ {self.win_se:.3f}"


def evaluate(
    params_shaper: ParamVector,
    params_opponents: ParamVector,
    env_name: str,
    n_episodes: int,
    seed: int,
    policy_spec: PolicySpec,
    greedy: bool = False,
) -> EvalResult:
    """Play the shaper checkpoint against frozen opponents; sampled actions by
    default (matching the training distribution), greedy on request."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    env = make_env(env_name)
    returns = np.zeros(n_episodes)
    wins: list[float] = []
    for ep in range(n_episodes):
        obs = env.reset(int(rng.integers(0, 2**62)))
        shaper = env.shaper_index
        done = False
        total = 0.0
        while not done:
            actions = np.zeros(env.spec.n_agents, dtype=np.int64)
            for i in range(env.spec.n_agents):
                p = params_shaper if i == shaper else params_opponents
                a, _, _ = sample_actions(p, policy_spec, obs[i][None, :], env.roles[i : i + 1], rng, greedy=greedy)
                actions[i] = a[0]
            tr = env.step(actions)
            total += float(tr.rewards[shaper])
            obs = tr.obs
            done = tr.done
        returns[ep] = total
        outcome = env.outcome()
        if outcome in ("spy_win", "resistance_win"):
            wins.append(1.0 if outcome == "spy_win" else 0.0)
    return_se = float(returns.std(ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    if wins:
        warr = np.array(wins)
        win_rate = float(warr.mean())
        win_se = float(warr.std(ddof=1) / np.sqrt(warr.size)) if warr.size > 1 else 0.0
    else:
        win_rate, win_se = None, None
    return EvalResult(n_episodes, float(returns.mean()), return_se, win_rate, win_se)


@dataclass
class TrainedModel:
    params: ParamVector
    policy_spec: PolicySpec
    critic_spec: CriticSpec | None
    predictor_spec: PredictorSpec | None


def predictor_sequences(buf: RolloutBuffer) -> list[tuple[np.ndarray, int, int, np.ndarray]]:
    """Episode-segment (shaper obs, slot, observer role, observer obs) tuples."""
    seqs = []
    for e in range(buf.n_envs):
        boundaries = [0] + [t + 1 for t in range(buf.horizon) if buf.dones[e, t]]
        if boundaries[-1] != buf.horizon:
            boundaries.append(buf.horizon)
        for a, b in zip(boundaries[:-1], boundaries[1:]):
            if b <= a:
                continue
            steps = np.arange(a, b)
            shaper_obs = buf.obs[e, steps, buf.shaper[e, a]]
            for j in range(buf.n_observers):
                agent = int(buf.observers[e, a, j])
                role = int(buf.roles[e, a, agent])
                target = buf.obs[e, steps, agent]
                seqs.append((shaper_obs, j, role, target))
    return seqs


def train_cell(
    env_name: str,
    method: str,
    proxy_mode: str,
    seed: int,
    ppo: PpoConfig,
    shaping: ShapingConfig,
    bbm: BbmConfig,
    hidden_dim: int,
    alpha_floor: float = 0.05,
    temperature: float = 1.0,
    on_iteration=None,
    checkpoint_path=None,
) -> tuple[TrainedModel, dict]:
    """One full training run (Algorithm: collect, track beliefs, regress the
    critic, compute the frozen-critic correction, inject into PPO).

    `on_iteration(record)` receives one metrics dict per iteration. Returns
    the trained model and a summary dict.
    """
    if method not in ("ppo", "bbm", "dbos"):
        raise ConfigError(f"unknown method {method!r}")
    streams = np.random.SeedSequence(seed).spawn(6)
    rng_env, rng_policy, rng_actions, rng_ppo, rng_critic, rng_pred = (np.random.default_rng(s) for s in streams)

    probe = make_env(env_name)
    env_spec = probe.spec
    policy_spec = PolicySpec(
        obs_dim=env_spec.obs_dim,
        n_actions=env_spec.n_actions,
        n_role_heads=env_spec.n_role_ids,
        n_hypotheses=env_spec.n_hypotheses,
        hidden_dim=hidden_dim,
    )
    shaping_active = method == "dbos" and shaping.lam > 0.0
    bbm_active = method == "bbm" and bbm.lambda_bbm > 0.0
    estimated = proxy_mode == ESTIMATED

    params = ParamVector()
    register_policy(params, policy_spec)
    critic_spec = None
    if shaping_active:
        critic_spec = CriticSpec(env_spec.obs_dim, env_spec.n_observers, env_spec.n_hypotheses, hidden_dim)
        register_critic(params, critic_spec)
    predictor_spec = None
    if estimated:
        predictor_spec = PredictorSpec(env_spec.obs_dim, env_spec.n_observers, env_spec.n_role_ids)
        register_predictor(params, predictor_spec)
    init_policy(params, policy_spec, rng_policy)
    if critic_spec is not None:
        init_critic(params, critic_spec, rng_critic)
    if predictor_spec is not None:
        init_predictor(params, predictor_spec, rng_pred)

    runner = Runner(
        env_name,
        ppo.n_envs,
        policy_spec,
        alpha_floor=alpha_floor,
        temperature=temperature,
        proxy_mode=proxy_mode,
        predictor_spec=predictor_spec,
        seed_stream=rng_env,
    )
    ppo_adam = Adam(params.size, ppo.lr)
    critic_adam = Adam(params.size, ppo.lr) if shaping_active else None
    pred_adam = Adam(params.size, ppo.lr) if estimated else None

    iterations = ppo.total_steps // (ppo.n_envs * ppo.rollout_len)
    start = time.time()
    summary = {"iterations": iterations, "steps": iterations * ppo.n_envs * ppo.rollout_len}
    for it in range(iterations):
        buf = runner.collect(params, ppo.rollout_len, rng_actions, bbm if bbm_active else None)
        advantages, value_targets = compute_gae(
            buf.rewards, buf.values, buf.final_values, buf.dones, ppo.gamma, ppo.gae_lambda
        )

        g_shaping = None
        shaping_diag = None
        if shaping_active:
            ext_returns = reward_to_go(buf.extrinsic, buf.dones, buf.final_values, ppo.gamma)
            obs_end, b_end, targets, windows = critic_window_dataset(buf, shaping.k, ext_returns)
            if windows:
                train_critic(
                    params,
                    critic_spec,
                    obs_end,
                    b_end,
                    targets,
                    ppo.lr,
                    epochs=ppo.epochs,
                    minibatches=ppo.minibatches,
                    rng=rng_critic,
                    optimizer=critic_adam,
                )
            g_shaping, shaping_diag = compute_shaping_gradient(params, critic_spec, policy_spec, buf, shaping)
        if estimated:
            pred_report = train_predictor(
                params, predictor_spec, predictor_sequences(buf), ppo.lr, epochs=1, rng=rng_pred, optimizer=pred_adam
            )
        else:
            pred_report = None

        stats = ppo_update(
            params, policy_spec, ppo_adam, buf, advantages, value_targets, ppo, rng_ppo, g_shaping
        )

        if on_iteration is not None:
            record = {
                "iteration": it,
                "steps": (it + 1) * ppo.n_envs * ppo.rollout_len,
                **_rollout_metrics(buf),
                **stats,
            }
            if shaping_diag is not None:
                record["shaping"] = shaping_diag.to_dict()
            if buf.intrinsic_per_step is not None:
                record["bbm_intrinsic_mean"] = float(buf.intrinsic_per_step.mean())
                record["bbm_intrinsic_max"] = float(np.abs(buf.intrinsic_per_step).max())
            if pred_report is not None:
                record["predictor_mse"] = float(pred_report["epoch_losses"][-1])
            on_iteration(record)

    summary["wall_clock_s"] = time.time() - start
    summary["total_env_steps"] = runner.total_steps
    model = TrainedModel(params, policy_spec, critic_spec, predictor_spec)
    if checkpoint_path is not None:
        save_checkpoint(
            checkpoint_path,
            params,
            meta={
                "env": env_name,
                "method": method,
                "proxy": proxy_mode,
                "hidden_dim": hidden_dim,
                "k": shaping.k,
                "obs_dim": env_spec.obs_dim,
                "n_actions": env_spec.n_actions,
                "n_role_ids": env_spec.n_role_ids,
                "n_hypotheses": env_spec.n_hypotheses,
            },
            seed=seed,
        )
    return model, summary


def _rollout_metrics(buf: RolloutBuffer) -> dict:
    record: dict = {"episodes_finished": len(buf.episodes)}
    if buf.episodes:
        record["mean_episode_return_shaper"] = float(np.mean([ep.shaper_return for ep in buf.episodes]))
        record["mean_episode_length"] = float(np.mean([ep.length for ep in buf.episodes]))
        record["mean_return_all_agents"] = float(np.mean([ep.returns.mean() for ep in buf.episodes]))
        outcomes = [ep.shaper_team_won for ep in buf.episodes if ep.shaper_team_won is not None]
        if outcomes:
            record["win_rate"] = float(np.mean(outcomes))
    record["belief_min_entry"] = float(buf.beliefs.min())
    record["belief_row_sum_err"] = float(np.abs(buf.beliefs.sum(axis=-1) - 1.0).max())
    record["mean_extrinsic_reward"] = float(buf.extrinsic.mean())
    return record
