import numpy as np
import pytest

from pexlab import envs
from pexlab.envs import (
    BehaviorGrade,
    EnvSpec,
    LineReach,
    PointMaze,
    compute_reference_returns,
    expert_controller,
    generate_offline_dataset,
    make_env,
    make_spec,
    normalized_score,
)
from pexlab.errors import ConfigError


def episode_returns(transitions):
    totals, cur = [], 0.0
    for t in transitions:
        cur += t.reward
        if t.done or t.truncated:
            totals.append(cur)
            cur = 0.0
    return totals


class TestReset:
    def test_pointmaze_starts_near_start_cell(self, rng):
        env = make_env("pointmaze-umaze")
        center = env._cell_center(env.start_cell)
        for _ in range(20):
            obs = env.reset(rng)
            assert np.max(np.abs(obs - center)) <= 0.1

    def test_linereach_starts_at_origin_exactly(self, rng):
        env = make_env("linereach")
        assert np.array_equal(env.reset(rng), np.zeros(2))

    def test_same_seed_same_reset(self):
        a = make_env("pointmaze-umaze").reset(np.random.default_rng(9))
        b = make_env("pointmaze-umaze").reset(np.random.default_rng(9))
        assert np.array_equal(a, b)


class TestStep:
    def test_goal_reached_rewards_and_terminates(self, rng):
        env = make_env("pointmaze-umaze")
        env.reset(rng)
        env._pos = env.goal_pos + np.array([0.6, 0.0])
        t = env.step(np.array([-0.25, 0.0]))
        assert t.reward == 1.0 and t.done and not t.truncated

    def test_wall_blocks_one_axis_only(self, rng):
        env = make_env("pointmaze-umaze")
        env.reset(rng)
        env._pos = np.array([1.5, 1.1])  # near the top wall of the start cell
        t = env.step(np.array([0.2, -0.2]))  # upward move crosses into a wall
        assert t.next_obs[1] == 1.1
        assert t.next_obs[0] == pytest.approx(1.7)

    def test_linereach_hand_evaluated_dynamics(self, rng):
        # from (0, 0) with force 1: v = 0.1, p = 0.01
        env = make_env("linereach")
        env.reset(rng)
        t = env.step(np.array([1.0]))
        assert t.next_obs[0] == pytest.approx(0.01, abs=1e-15)
        assert t.next_obs[1] == pytest.approx(0.1, abs=1e-15)
        assert t.reward == pytest.approx(-abs(0.01 - 3.0))

    def test_step_after_episode_end_rejected(self, rng):
        env = make_env("linereach")
        env.reset(rng)
        for _ in range(env.spec.max_episode_steps):
            t = env.step(np.array([0.0]))
        assert t.truncated
        with pytest.raises(RuntimeError):
            env.step(np.array([0.0]))

    def test_done_and_truncated_never_both(self, rng):
        env = make_env("pointmaze-umaze")
        ctrl = expert_controller(env)
        for _ in range(5):
            obs = env.reset(rng)
            while True:
                t = env.step(ctrl.act(obs))
                assert not (t.done and t.truncated)
                obs = t.next_obs
                if t.done or t.truncated:
                    break

    def test_determinism_bit_exact(self):
        actions = np.random.default_rng(4).uniform(-0.25, 0.25, size=(50, 2))
        histories = []
        for _ in range(2):
            env = make_env("pointmaze-umaze")
            env.reset(np.random.default_rng(11))
            rows = []
            for a in actions:
                t = env.step(a)
                rows.append(np.concatenate([t.obs, t.next_obs, [t.reward]]))
            histories.append(np.array(rows))
        assert np.array_equal(histories[0], histories[1])


class TestDatasets:
    def test_random_maze_data_rarely_rewarded(self, rng):
        env = make_env("pointmaze-umaze")
        data = generate_offline_dataset(env, BehaviorGrade.RANDOM, 1000, rng)
        rewards = np.array([t.reward for t in data])
        assert rewards.mean() < 0.05

    def test_expert_reaches_goal(self, rng):
        env = make_env("pointmaze-umaze")
        data = generate_offline_dataset(env, BehaviorGrade.EXPERT, 3000, rng)
        finished = [t for t in data if t.done or t.truncated]
        success = [t for t in finished if t.done]
        assert len(success) / len(finished) >= 0.9

    def test_observations_stay_in_bounds(self, rng):
        maze = make_env("pointmaze-umaze")
        for grade in BehaviorGrade:
            data = generate_offline_dataset(maze, grade, 500, rng)
            for t in data:
                assert 0 <= t.next_obs[0] <= maze.n_cols
                assert 0 <= t.next_obs[1] <= maze.n_rows
        line = make_env("linereach")
        for grade in BehaviorGrade:
            data = generate_offline_dataset(line, grade, 500, rng)
            for t in data:
                assert -5.0 <= t.next_obs[0] <= 5.0

    def test_grade_ordering_of_mean_returns(self, rng):
        for env_id in ("pointmaze-umaze", "linereach"):
            means = {}
            for grade in (BehaviorGrade.RANDOM, BehaviorGrade.MEDIUM, BehaviorGrade.EXPERT):
                data = generate_offline_dataset(make_env(env_id), grade, 8000, rng)
                means[grade] = np.mean(episode_returns(data))
            assert means[BehaviorGrade.RANDOM] <= means[BehaviorGrade.MEDIUM]
            assert means[BehaviorGrade.MEDIUM] <= means[BehaviorGrade.EXPERT]

    def test_maze_rewards_binary_and_done_implies_reward(self, rng):
        env = make_env("pointmaze-umaze")
        data = generate_offline_dataset(env, BehaviorGrade.MEDIUM, 3000, rng)
        for t in data:
            assert t.reward in (0.0, 1.0)
            if t.done:
                assert t.reward == 1.0
        for ret in episode_returns(data):
            assert 0.0 <= ret <= 1.0


class TestNormalizedScore:
    def test_anchors(self):
        spec = make_spec("linereach")
        assert normalized_score(spec, spec.reference_random_return) == 0.0
        assert normalized_score(spec, spec.reference_expert_return) == 100.0
        mid = (spec.reference_random_return + spec.reference_expert_return) / 2
        assert normalized_score(spec, mid) == pytest.approx(50.0)

    def test_degenerate_references_rejected(self):
        with pytest.raises(ConfigError):
            EnvSpec("bad", 2, 1, np.array([-1.0]), np.array([1.0]), 10, 1.0, 1.0)


def test_reference_returns_regenerate_exactly():
    for env_id in envs.ENV_IDS:
        pinned = envs._REFERENCE_RETURNS[env_id]
        regenerated = compute_reference_returns(env_id)
        assert regenerated == pinned


def test_unknown_env_rejected():
    with pytest.raises(ConfigError):
        make_env("cartpole")


def test_maze_layouts_parse_and_connect():
    for name in ("umaze", "medium"):
        env = PointMaze(name)
        path = env.shortest_path(env.start_cell)
        assert path[0] == env.start_cell and path[-1] == env.goal_cell
