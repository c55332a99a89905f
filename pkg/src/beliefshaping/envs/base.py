"""The stepping contract shared by the hidden-role environments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    n_agents: int
    n_actions: int
    obs_dim: int
    n_hypotheses: int  # size of the belief support over the shaper's role
    n_role_ids: int  # policy-conditioning identities (>= n_hypotheses)
    n_observers: int


@dataclass
class Transition:
    obs: np.ndarray  # (n_agents, obs_dim)
    rewards: np.ndarray  # (n_agents,)
    done: bool
    info: dict = field(default_factory=dict)


class HiddenRoleEnv:
    """Base class: subclasses set .spec, .roles, and implement reset/step.

    After reset, `roles[i]` is agent i's role id, `shaper_index` the agent
    whose role the observers infer, and `observer_indices` everyone else.
    Stepping a terminal episode raises RuntimeError.
    """

    spec: EnvSpec

    def __init__(self):
        self.roles = np.zeros(0, dtype=np.int64)
        self.done = True

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, actions: np.ndarray) -> Transition:
        raise NotImplementedError

    @property
    def shaper_index(self) -> int:
        raise NotImplementedError

    @property
    def observer_indices(self) -> list[int]:
        return [i for i in range(self.spec.n_agents) if i != self.shaper_index]

    def outcome(self) -> str | None:
        """Outcome string of a finished episode, None while running."""
        return None

    def _require_running(self):
        if self.done:
            raise RuntimeError("step() called on a terminal episode; reset first")


def play_episode(env: HiddenRoleEnv, act_fn, seed: int, record_path=None) -> dict:
    """Run one episode with actions from act_fn(obs, roles) -> (n_agents,) ints.

    Optionally dumps a JSONL trajectory (step, phase, actions, rewards,
    outcome) for replay debugging. Returns totals and the outcome string.
    """
    obs = env.reset(seed)
    total = np.zeros(env.spec.n_agents)
    records = []
    step = 0
    done = False
    while not done:
        actions = np.asarray(act_fn(obs, env.roles), dtype=np.int64)
        tr = env.step(actions)
        total += tr.rewards
        records.append(
            {
                "step": step,
                "phase": tr.info.get("phase", ""),
                "actions": [int(a) for a in actions],
                "rewards": [float(r) for r in tr.rewards],
                "outcome": env.outcome() or "",
            }
        )
        obs = tr.obs
        done = tr.done
        step += 1
    if record_path is not None:
        with open(record_path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return {"length": step, "returns": total, "outcome": env.outcome()}
