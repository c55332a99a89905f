import numpy as np
import pytest

from beliefshaping.envs.avalon import (
    L_OWN_SPY,
    L_PARTNER_SPY,
    L_PROPOSED,
    N_PLAYERS,
    TEAM_COMBOS,
    TEAM_SIZES,
    AvalonEnv,
)
from beliefshaping.envs.base import play_episode

IDENTITY_ROLES = np.arange(5)  # player i holds role i; spies are players 0 and 1
APPROVE = np.zeros(5, dtype=np.int64)
REJECT = np.full(5, 9, dtype=np.int64)
FAIL = np.full(5, 9, dtype=np.int64)
SUCCEED = np.zeros(5, dtype=np.int64)


def fresh(blind=False):
    env = AvalonEnv(blind=blind)
    env.reset_with_roles(IDENTITY_ROLES, leader=0)
    return env


def propose_first_combo(env):
    actions = np.zeros(5, dtype=np.int64)
    return env.step(actions)


def test_reset_determinism():
    a, b = AvalonEnv(), AvalonEnv()
    obs_a = a.reset(seed=7)
    obs_b = b.reset(seed=7)
    assert np.array_equal(a.roles, b.roles)
    assert np.array_equal(obs_a, obs_b)


def test_roles_are_permutations_with_two_spies():
    env = AvalonEnv()
    for seed in range(20):
        env.reset(seed)
        assert sorted(env.roles.tolist()) == list(range(5))
        assert np.isin(env.roles, (0, 1)).sum() == 2
        assert env.roles[env.shaper_index] == 0


def test_resistance_observation_hides_spy_identities():
    env = fresh()
    obs = env._observations()
    for p in range(2, 5):
        assert obs[p, L_OWN_SPY] == 0.0
        assert np.all(obs[p, L_PARTNER_SPY : L_PARTNER_SPY + 5] == 0.0)


def test_nonblind_spy_sees_partner_mask_and_blind_does_not():
    obs = fresh(blind=False)._observations()
    partner_of_0 = obs[0, L_PARTNER_SPY : L_PARTNER_SPY + 5]
    assert partner_of_0[1] == 1.0 and partner_of_0.sum() == 1.0
    assert obs[0, L_OWN_SPY] == 1.0
    blind_obs = fresh(blind=True)._observations()
    assert np.all(blind_obs[0, L_PARTNER_SPY : L_PARTNER_SPY + 5] == 0.0)
    assert blind_obs[0, L_OWN_SPY] == 1.0


def test_proposals_have_required_size():
    env = fresh()
    for action in range(10):
        env.reset_with_roles(IDENTITY_ROLES)
        tr = env.step(np.full(5, action, dtype=np.int64))
        assert tr.obs[0, L_PROPOSED : L_PROPOSED + 5].sum() == TEAM_SIZES[0]


def test_nonleader_proposals_ignored():
    env = fresh()
    actions = np.array([3, 7, 1, 9, 5])  # leader is seat 0
    env.step(actions)
    expected = np.zeros(5)
    expected[TEAM_COMBOS[2][3]] = 1.0
    np.testing.assert_array_equal(env.proposed, expected)


def test_mission_success_reward_arithmetic():
    env = fresh()
    propose_first_combo(env)  # team {0,1}
    env.step(APPROVE)
    tr = env.step(SUCCEED)  # spies decline to sabotage
    np.testing.assert_array_equal(tr.rewards, [-1.0, -1.0, 1.0, 1.0, 1.0])
    assert tr.rewards.sum() == 1.0  # 3 * (+1) + 2 * (-1)


def test_mission_fail_reward_arithmetic():
    env = fresh()
    propose_first_combo(env)
    env.step(APPROVE)
    tr = env.step(FAIL)
    np.testing.assert_array_equal(tr.rewards, [1.0, 1.0, -1.0, -1.0, -1.0])
    assert tr.rewards.sum() == -1.0


def test_resistance_cannot_sabotage():
    env = fresh()
    env.step(np.full(5, 9, dtype=np.int64))  # leader 0 proposes combo 9 = {3,4}
    np.testing.assert_array_equal(env.proposed, [0, 0, 0, 1, 1])
    env.step(APPROVE)
    tr = env.step(FAIL)  # resistance "fail" actions are forced success
    assert env.outcomes[0] == 1
    np.testing.assert_array_equal(tr.rewards, [-1.0, -1.0, 1.0, 1.0, 1.0])


def test_three_spy_missions_end_game_with_bonus():
    env = fresh()
    total = np.zeros(5)
    for _ in range(3):
        leader = env.leader
        actions = np.zeros(5, dtype=np.int64)
        actions[leader] = 0  # lexicographically first team always contains seat 0 or {0,1,2}
        env.step(actions)
        env.step(APPROVE)
        tr = env.step(FAIL)
        total += tr.rewards
    assert env.done and env.outcome() == "spy_win"
    np.testing.assert_array_equal(tr.rewards, [11.0, 11.0, -11.0, -11.0, -11.0])


def test_five_rejections_give_spies_the_win():
    env = fresh()
    for i in range(5):
        propose_first_combo(env)
        tr = env.step(REJECT)
        assert env.rejections == i + 1 or env.done
    assert env.done and env.outcome() == "spy_win"
    np.testing.assert_array_equal(tr.rewards, [10.0, 10.0, -10.0, -10.0, -10.0])


def test_rejection_counter_resets_on_approval():
    env = fresh()
    propose_first_combo(env)
    env.step(REJECT)
    assert env.rejections == 1
    propose_first_combo(env)
    env.step(APPROVE)
    assert env.rejections == 0


def test_strict_majority_vote_threshold():
    env = fresh()
    propose_first_combo(env)
    votes = np.array([0, 0, 0, 9, 9])  # exactly three approvals
    env.step(votes)
    assert env.phase == 2  # quest
    env2 = fresh()
    propose_first_combo(env2)
    env2.step(np.array([0, 0, 9, 9, 9]))  # two approvals
    assert env2.phase == 0 and env2.rejections == 1


def test_leader_rotates_after_each_vote_resolution():
    env = fresh()
    propose_first_combo(env)
    env.step(REJECT)
    assert env.leader == 1
    propose_first_combo(env)
    env.step(APPROVE)
    assert env.leader == 2


def test_step_after_terminal_raises():
    env = fresh()
    for _ in range(5):
        propose_first_combo(env)
        env.step(REJECT)
    with pytest.raises(RuntimeError):
        env.step(APPROVE)


def test_episode_length_bounded_and_deterministic():
    def scripted(obs, roles):
        return np.zeros(N_PLAYERS, dtype=np.int64)

    env = AvalonEnv()
    first = play_episode(env, scripted, seed=3)
    second = play_episode(AvalonEnv(), scripted, seed=3)
    assert first["length"] == second["length"] <= 55
    np.testing.assert_array_equal(first["returns"], second["returns"])
    assert first["outcome"] in ("spy_win", "resistance_win")


def test_trajectory_dump_format(tmp_path):
    import json

    path = tmp_path / "traj.jsonl"
    play_episode(AvalonEnv(), lambda o, r: np.zeros(5, dtype=np.int64), seed=1, record_path=path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert {"step", "phase", "actions", "rewards", "outcome"} <= set(lines[0])
    assert lines[0]["phase"] == "propose"
    assert lines[-1]["outcome"] in ("spy_win", "resistance_win")
