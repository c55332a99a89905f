"""Five-player hidden-role deduction game (two spies vs three resistance).

Game flow per round: the leader proposes a mission team, everyone votes, and
an approved team plays the quest. A strict majority (3+) approves; the fifth
consecutive rejection hands the spies the game. On a quest, spies may play
fail; resistance actions always count as success, and a single fail sabotages
the mission. Each mission pays +1 to every player on the winning side and -1
to the losing side; three mission wins end the game with a +/-10 bonus.

Role ids: 0 = primary shaper spy, 1 = second spy, 2..4 = resistance. Observers
track a posterior over which of the five roles the shaper holds, so the
belief support equals the role-id set.

Fixed rule constants the reference rules leave open here: mission team sizes
[2,3,2,3,3]; votes approve when action < 5; spies sabotage when action >= 5;
the leader advances by one seat after every vote resolution; proposals index
the lexicographic enumeration of C(5, size) teams (both sizes give exactly 10
combinations, filling the 10-action space).
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..errors import ConfigError
from .base import EnvSpec, HiddenRoleEnv, Transition

N_PLAYERS = 5
N_ACTIONS = 10
N_ROUNDS = 5
TEAM_SIZES = (2, 3, 2, 3, 3)
MISSION_BONUS = 10.0
APPROVE_THRESHOLD = 5  # action < 5 approves; >= 5 rejects (or plays fail on quest)
SPY_ROLES = (0, 1)

PHASE_PROPOSE, PHASE_VOTE, PHASE_QUEST = 0, 1, 2
PHASE_NAMES = ("propose", "vote", "quest")

# Lexicographic team enumerations; C(5,2) = C(5,3) = 10.
TEAM_COMBOS = {
    size: [np.array(c, dtype=np.int64) for c in combinations(range(N_PLAYERS), size)] for size in (2, 3)
}

# 128-dim observation layout (offset, width). Everything outside PRIVATE_SLOTS
# is public information shared by all seats (up to the seat-relative bits
# IS_LEADER / ON_PROPOSED, which are derived from public state).
OBS_DIM = 128
L_ROUND = 0  # 1: round index / 4
L_PHASE = 1  # 3: phase one-hot
L_LEADER = 4  # 5: leader seat one-hot
L_IS_LEADER = 9  # 1
L_PROPOSED = 10  # 5: current proposed-team mask
L_ON_PROPOSED = 15  # 1
L_REJECTIONS = 16  # 1: consecutive rejections / 5
L_SPY_SCORE = 17  # 1: spy mission wins / 3
L_RES_SCORE = 18  # 1: resistance mission wins / 3
L_MISSION_SIZE = 19  # 1: current team size / 3
L_OWN_SPY = 20  # 1: private
L_ON_MISSION = 21  # 1: private (on the team during the quest phase)
L_PARTNER_SPY = 22  # 5: private partner-spy mask, non-blind spies only
L_OUTCOMES = 27  # 15: per-round outcome one-hot (pending/success/fail)
L_TEAMS = 42  # 25: per-round played-team masks
L_SABOTAGE = 67  # 5: per-round fail counts / 2
L_LAST_VOTES = 72  # 5: last resolved vote per seat (-1/0/+1)
L_PROPOSALS = 77  # 25: per-round latest proposed-team masks
L_APPROVE_FRAC = 102  # 1: approve fraction of the last resolved vote
# 103..127 zero padding

PRIVATE_SLOTS = list(range(L_OWN_SPY, L_PARTNER_SPY + N_PLAYERS))
PUBLIC_SLOTS = [i for i in range(OBS_DIM) if i not in PRIVATE_SLOTS]


class AvalonEnv(HiddenRoleEnv):
    def __init__(self, blind: bool = False):
        super().__init__()
        self.blind = blind
        self.spec = EnvSpec(
            name="avalon5_blind" if blind else "avalon5",
            n_agents=N_PLAYERS,
            n_actions=N_ACTIONS,
            obs_dim=OBS_DIM,
            n_hypotheses=N_PLAYERS,
            n_role_ids=N_PLAYERS,
            n_observers=N_PLAYERS - 1,
        )

    @property
    def shaper_index(self) -> int:
        return int(np.flatnonzero(self.roles == 0)[0])

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(N_PLAYERS)
        roles = np.empty(N_PLAYERS, dtype=np.int64)
        roles[perm] = np.arange(N_PLAYERS)
        return self.reset_with_roles(roles, leader=0)

    def reset_with_roles(self, roles: np.ndarray, leader: int = 0) -> np.ndarray:
        """Deterministic reset used by scripted tests and replay tooling."""
        roles = np.asarray(roles, dtype=np.int64)
        if sorted(roles.tolist()) != list(range(N_PLAYERS)):
            raise ConfigError("roles must be a permutation of 0..4")
        self.roles = roles
        self.leader = int(leader)
        self.phase = PHASE_PROPOSE
        self.round_idx = 0
        self.rejections = 0
        self.spy_score = 0
        self.res_score = 0
        self.proposed = np.zeros(N_PLAYERS)
        self.outcomes = np.zeros(N_ROUNDS, dtype=np.int64)  # 0 pending, 1 success, 2 fail
        self.played_teams = np.zeros((N_ROUNDS, N_PLAYERS))
        self.sabotage = np.zeros(N_ROUNDS)
        self.proposal_history = np.zeros((N_ROUNDS, N_PLAYERS))
        self.last_votes = np.zeros(N_PLAYERS)
        self.approve_frac = 0.0
        self.done = False
        self.winner: str | None = None
        return self._observations()

    def outcome(self) -> str | None:
        if self.winner is None:
            return None
        return "spy_win" if self.winner == "spies" else "resistance_win"

    def step(self, actions: np.ndarray) -> Transition:
        self._require_running()
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (N_PLAYERS,) or np.any(actions < 0) or np.any(actions >= N_ACTIONS):
            raise ConfigError("expected 5 actions in range 0..9")
        rewards = np.zeros(N_PLAYERS)
        phase_name = PHASE_NAMES[self.phase]

        if self.phase == PHASE_PROPOSE:
            size = TEAM_SIZES[self.round_idx]
            team = TEAM_COMBOS[size][int(actions[self.leader])]
            self.proposed = np.zeros(N_PLAYERS)
            self.proposed[team] = 1.0
            self.proposal_history[self.round_idx] = self.proposed
            self.phase = PHASE_VOTE

        elif self.phase == PHASE_VOTE:
            approve = actions < APPROVE_THRESHOLD
            self.last_votes = np.where(approve, 1.0, -1.0)
            self.approve_frac = float(approve.mean())
            if int(approve.sum()) >= 3:
                self.rejections = 0
                self.phase = PHASE_QUEST
            else:
                self.rejections += 1
                if self.rejections >= 5:
                    self._finish("spies", rewards)
                else:
                    self.phase = PHASE_PROPOSE
            self.leader = (self.leader + 1) % N_PLAYERS

        else:  # quest
            on_team = self.proposed > 0.0
            is_spy = np.isin(self.roles, SPY_ROLES)
            fails = int(np.sum(on_team & is_spy & (actions >= APPROVE_THRESHOLD)))
            success = fails == 0
            self.outcomes[self.round_idx] = 1 if success else 2
            self.played_teams[self.round_idx] = self.proposed
            self.sabotage[self.round_idx] = fails
            if success:
                self.res_score += 1
                rewards += np.where(is_spy, -1.0, 1.0)
            else:
                self.spy_score += 1
                rewards += np.where(is_spy, 1.0, -1.0)
            if self.res_score >= 3:
                self._finish("resistance", rewards)
            elif self.spy_score >= 3:
                self._finish("spies", rewards)
            else:
                self.round_idx += 1
                self.proposed = np.zeros(N_PLAYERS)
                self.phase = PHASE_PROPOSE

        return Transition(self._observations(), rewards, self.done, {"phase": phase_name})

    def _finish(self, winner: str, rewards: np.ndarray) -> None:
        self.done = True
        self.winner = winner
        is_spy = np.isin(self.roles, SPY_ROLES)
        sign = 1.0 if winner == "spies" else -1.0
        rewards += np.where(is_spy, sign * MISSION_BONUS, -sign * MISSION_BONUS)

    def _observations(self) -> np.ndarray:
        obs = np.zeros((N_PLAYERS, OBS_DIM))
        obs[:, L_ROUND] = min(self.round_idx, N_ROUNDS - 1) / 4.0
        obs[:, L_PHASE + self.phase] = 1.0
        obs[:, L_LEADER + self.leader] = 1.0
        obs[:, L_PROPOSED : L_PROPOSED + N_PLAYERS] = self.proposed
        obs[:, L_REJECTIONS] = self.rejections / 5.0
        obs[:, L_SPY_SCORE] = self.spy_score / 3.0
        obs[:, L_RES_SCORE] = self.res_score / 3.0
        obs[:, L_MISSION_SIZE] = TEAM_SIZES[min(self.round_idx, N_ROUNDS - 1)] / 3.0
        obs[:, L_OUTCOMES : L_OUTCOMES + 15] = np.eye(3)[self.outcomes].reshape(-1)
        obs[:, L_TEAMS : L_TEAMS + 25] = self.played_teams.reshape(-1)
        obs[:, L_SABOTAGE : L_SABOTAGE + N_ROUNDS] = self.sabotage / 2.0
        obs[:, L_LAST_VOTES : L_LAST_VOTES + N_PLAYERS] = self.last_votes
        obs[:, L_PROPOSALS : L_PROPOSALS + 25] = self.proposal_history.reshape(-1)
        obs[:, L_APPROVE_FRAC] = self.approve_frac

        is_spy = np.isin(self.roles, SPY_ROLES)
        for p in range(N_PLAYERS):
            obs[p, L_IS_LEADER] = 1.0 if p == self.leader else 0.0
            obs[p, L_ON_PROPOSED] = self.proposed[p]
            obs[p, L_OWN_SPY] = 1.0 if is_spy[p] else 0.0
            obs[p, L_ON_MISSION] = self.proposed[p] if self.phase == PHASE_QUEST else 0.0
            if is_spy[p] and not self.blind:
                partners = is_spy.astype(np.float64).copy()
                partners[p] = 0.0
                obs[p, L_PARTNER_SPY : L_PARTNER_SPY + N_PLAYERS] = partners
        return obs
