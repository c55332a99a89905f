"""Toroidal coin game: one red shaper with a latent role vs three blue observers.

5x5 wrap-around grid, horizon 30. Everyone moves simultaneously; landing on
the coin collects it (+1). A red pickup of a blue coin costs the blue team a
shared -2, plus an extra -1 to red itself when red's latent role is
altruistic; a blue pickup of a red coin costs red -2. Collected coins respawn
on a uniform agent-free cell with a uniformly random color.

Role ids: 0 = altruistic red, 1 = selfish red (the two belief hypotheses),
2 = blue observer (policy conditioning only).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .base import EnvSpec, HiddenRoleEnv, Transition

GRID = 5
HORIZON = 30
N_AGENTS = 4  # red + three blues
N_BLUES = 3
OBS_DIM = 10
MOVES = np.array([[0, -1], [0, 1], [-1, 0], [1, 0]])  # up, down, left, right
COIN_RED, COIN_BLUE = 0, 1
ROLE_ALTRUISTIC, ROLE_SELFISH, ROLE_BLUE = 0, 1, 2


class CoinGameEnv(HiddenRoleEnv):
    def __init__(self):
        super().__init__()
        self.spec = EnvSpec(
            name="coingame",
            n_agents=N_AGENTS,
            n_actions=4,
            obs_dim=OBS_DIM,
            n_hypotheses=2,
            n_role_ids=3,
            n_observers=N_BLUES,
        )

    @property
    def shaper_index(self) -> int:
        return 0

    def reset(self, seed: int) -> np.ndarray:
        self._rng = np.random.default_rng(seed)
        self.positions = self._rng.integers(0, GRID, size=(N_AGENTS, 2))
        self._spawn_coin()
        red_role = int(self._rng.integers(0, 2))
        self.roles = np.array([red_role, ROLE_BLUE, ROLE_BLUE, ROLE_BLUE], dtype=np.int64)
        self.t = 0
        self.done = False
        return self._observations()

    def set_state(self, positions, coin_pos, coin_color, red_role, t=0, seed=0):
        """Scripted-state entry point for deterministic reward tests."""
        self._rng = np.random.default_rng(seed)
        self.positions = np.asarray(positions, dtype=np.int64).copy()
        if self.positions.shape != (N_AGENTS, 2):
            raise ConfigError("positions must be (4, 2)")
        self.coin_pos = np.asarray(coin_pos, dtype=np.int64).copy()
        self.coin_color = int(coin_color)
        self.roles = np.array([int(red_role), ROLE_BLUE, ROLE_BLUE, ROLE_BLUE], dtype=np.int64)
        self.t = int(t)
        self.done = False
        return self._observations()

    def outcome(self) -> str | None:
        return "horizon" if self.done else None

    def step(self, actions: np.ndarray) -> Transition:
        self._require_running()
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (N_AGENTS,) or np.any(actions < 0) or np.any(actions >= 4):
            raise ConfigError("expected 4 movement actions in range 0..3")
        self.positions = (self.positions + MOVES[actions]) % GRID
        rewards = np.zeros(N_AGENTS)
        collectors = np.flatnonzero(np.all(self.positions == self.coin_pos, axis=1))
        info: dict = {"phase": "move", "collected": [int(i) for i in collectors]}
        for i in collectors:
            rewards[i] += 1.0
            if i == 0 and self.coin_color == COIN_BLUE:
                rewards[1:] -= 2.0 / N_BLUES
                if self.roles[0] == ROLE_ALTRUISTIC:
                    rewards[0] -= 1.0
            elif i > 0 and self.coin_color == COIN_RED:
                rewards[0] -= 2.0
        if collectors.size > 0:
            self._spawn_coin()
        self.t += 1
        self.done = self.t >= HORIZON
        return Transition(self._observations(), rewards, self.done, info)

    def _spawn_coin(self) -> None:
        occupied = {tuple(p) for p in self.positions}
        free = [(x, y) for x in range(GRID) for y in range(GRID) if (x, y) not in occupied]
        self.coin_pos = np.array(free[self._rng.integers(0, len(free))], dtype=np.int64)
        self.coin_color = int(self._rng.integers(0, 2))

    def _observations(self) -> np.ndarray:
        scale = GRID - 1.0
        obs = np.zeros((N_AGENTS, OBS_DIM))
        obs[:, 0] = self.t / HORIZON
        obs[:, 1:3] = self.positions / scale
        obs[:, 3:5] = self.positions[0] / scale
        obs[:, 5:7] = self.positions[1] / scale
        obs[:, 7:9] = self.coin_pos / scale
        # coin color together with the blue-observer count
        obs[:, 9] = self.coin_color + 0.1 * N_BLUES
        return obs
