"""Desk-scale environments, scripted controllers, and dataset generators.

Two tasks with opposite reward structure:

* PointMaze: a point navigating an ASCII-defined maze; sparse reward 1.0
  on reaching the goal, which also ends the episode. Two wall layouts,
  "umaze" (a U-shaped corridor) and "medium".
* LineReach: a 1-D point mass pushed along a track toward position 3 with
  a dense per-step reward of -|position - 3|.

Scores are normalized to 0 (random controller) .. 100 (expert controller)
using reference returns measured once with a pinned seed.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

# '#' wall, 'S' start cell, 'G' goal cell, '.' free.
MAZE_LAYOUTS: dict[str, list[str]] = {
    "umaze": [
        "###############",
        "#S............#",
        "#############.#",
        "#G............#",
        "###############",
    ],
    "medium": [
        "########",
        "#S.##..#",
        "#..#..G#",
        "##...###",
        "#..#...#",
        "#.#..#.#",
        "#...#..#",
        "########",
    ],
}

POINTMAZE_MAX_STEP = 0.25
POINTMAZE_GOAL_RADIUS = 0.5
POINTMAZE_START_JITTER = 0.1
POINTMAZE_EPISODE_LIMIT = 300

LINEREACH_TARGET = 3.0
LINEREACH_TRACK = 5.0
LINEREACH_EPISODE_LIMIT = 200

REFERENCE_EPISODES = 200
REFERENCE_SEED = 700101

ENV_IDS = ("pointmaze-umaze", "pointmaze-medium", "linereach")


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a task, including normalization references."""

    env_id: str
    obs_dim: int
    act_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int
    reference_random_return: float
    reference_expert_return: float

    def __post_init__(self):
        if self.reference_expert_return <= self.reference_random_return:
            raise ConfigError(
                f"{self.env_id}: expert reference "
                f"{self.reference_expert_return} must exceed random reference "
                f"{self.reference_random_return}"
            )
        if len(self.action_low) != self.act_dim or len(self.action_high) != self.act_dim:
            raise ConfigError(f"{self.env_id}: action bound lengths != act_dim")


@dataclass
class Transition:
    """One environment step. ``done`` marks true termination only;
    time-limit cutoffs set ``truncated`` instead (and still bootstrap)."""

    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    truncated: bool


class BehaviorGrade(enum.Enum):
    RANDOM = 0
    MEDIUM = 1
    EXPERT = 2
    MEDIUM_REPLAY = 3


def normalized_score(spec: EnvSpec, raw_return: float) -> float:
    """100 * (raw - random reference) / (expert reference - random reference)."""
    span = spec.reference_expert_return - spec.reference_random_return
    return 100.0 * (raw_return - spec.reference_random_return) / span


# ---------------------------------------------------------------------------
# PointMaze
# ---------------------------------------------------------------------------


class PointMaze:
    """Point navigation in a grid maze. Observation (x, y); action is the
    desired displacement, at most POINTMAZE_MAX_STEP per axis. Moves into a
    wall cell are blocked per axis. Reward 1.0 and termination within
    POINTMAZE_GOAL_RADIUS of the goal cell center, otherwise reward 0."""

    def __init__(self, layout_name: str):
        layout = MAZE_LAYOUTS[layout_name]
        self.layout_name = layout_name
        self.grid = [list(row) for row in layout]
        self.n_rows = len(self.grid)
        self.n_cols = len(self.grid[0])
        self.start_cell = self._find("S")
        self.goal_cell = self._find("G")
        self.goal_pos = self._cell_center(self.goal_cell)
        self.spec = make_spec(f"pointmaze-{layout_name}")
        self._pos: np.ndarray | None = None
        self._steps = 0
        self._finished = True

    def _find(self, mark: str) -> tuple[int, int]:
        for r, row in enumerate(self.grid):
            for c, ch in enumerate(row):
                if ch == mark:
                    return (r, c)
        raise ConfigError(f"maze layout has no '{mark}' cell")

    @staticmethod
    def _cell_center(cell: tuple[int, int]) -> np.ndarray:
        r, c = cell
        return np.array([c + 0.5, r + 0.5], dtype=np.float64)

    def _is_wall(self, x: float, y: float) -> bool:
        c, r = int(x), int(y)
        if not (0 <= r < self.n_rows and 0 <= c < self.n_cols):
            return True
        return self.grid[r][c] == "#"

    def free_cells(self) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r in range(self.n_rows)
            for c in range(self.n_cols)
            if self.grid[r][c] != "#"
        ]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        center = self._cell_center(self.start_cell)
        jitter = rng.uniform(-POINTMAZE_START_JITTER, POINTMAZE_START_JITTER, size=2)
        self._pos = center + jitter
        self._steps = 0
        self._finished = False
        return self._pos.copy()

    def step(self, action: np.ndarray) -> Transition:
        if self._finished or self._pos is None:
            raise RuntimeError("episode is over; call reset before stepping")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (2,):
            raise ShapeError(f"PointMaze action must have shape (2,), got {action.shape}")
        move = np.clip(action, -POINTMAZE_MAX_STEP, POINTMAZE_MAX_STEP)
        obs = self._pos.copy()
        x, y = self._pos
        nx = x + move[0]
        if self._is_wall(nx, y):
            nx = x
        ny = y + move[1]
        if self._is_wall(nx, ny):
            ny = y
        self._pos = np.array([nx, ny])
        self._steps += 1

        at_goal = float(np.linalg.norm(self._pos - self.goal_pos)) <= POINTMAZE_GOAL_RADIUS
        reward = 1.0 if at_goal else 0.0
        done = at_goal
        truncated = not done and self._steps >= self.spec.max_episode_steps
        self._finished = done or truncated
        return Transition(obs, move.copy(), reward, self._pos.copy(), done, truncated)

    def shortest_path(self, from_cell: tuple[int, int]) -> list[tuple[int, int]]:
        """BFS cell path from ``from_cell`` to the goal (inclusive)."""
        parents: dict[tuple[int, int], tuple[int, int] | None] = {from_cell: None}
        queue = deque([from_cell])
        while queue:
            cell = queue.popleft()
            if cell == self.goal_cell:
                path = [cell]
                while parents[path[-1]] is not None:
                    path.append(parents[path[-1]])
                return path[::-1]
            r, c = cell
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if (nr, nc) not in parents and self.grid[nr][nc] != "#":
                    parents[(nr, nc)] = cell
                    queue.append((nr, nc))
        raise ConfigError(f"no path from {from_cell} to the goal")


class LineReach:
    """1-D point mass on [-LINEREACH_TRACK, LINEREACH_TRACK]. Scalar force in
    [-1, 1]; velocity += 0.1*force - 0.01*velocity, position += 0.1*velocity
    (clipped to the track). Dense reward -|position - 3| every step."""

    def __init__(self):
        self.spec = make_spec("linereach")
        self._pos = 0.0
        self._vel = 0.0
        self._steps = 0
        self._finished = True

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._pos = 0.0
        self._vel = 0.0
        self._steps = 0
        self._finished = False
        return np.array([0.0, 0.0])

    def step(self, action: np.ndarray) -> Transition:
        if self._finished:
            raise RuntimeError("episode is over; call reset before stepping")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (1,):
            raise ShapeError(f"LineReach action must have shape (1,), got {action.shape}")
        force = float(np.clip(action[0], -1.0, 1.0))
        obs = np.array([self._pos, self._vel])
        self._vel += 0.1 * force - 0.01 * self._vel
        self._pos = float(np.clip(self._pos + 0.1 * self._vel, -LINEREACH_TRACK, LINEREACH_TRACK))
        self._steps += 1
        reward = -abs(self._pos - LINEREACH_TARGET)
        next_obs = np.array([self._pos, self._vel])
        truncated = self._steps >= self.spec.max_episode_steps
        self._finished = truncated
        return Transition(obs, np.array([force]), reward, next_obs, False, truncated)


def make_env(env_id: str):
    if env_id == "pointmaze-umaze":
        return PointMaze("umaze")
    if env_id == "pointmaze-medium":
        return PointMaze("medium")
    if env_id == "linereach":
        return LineReach()
    raise ConfigError(f"unknown env id {env_id!r}; known: {', '.join(ENV_IDS)}")


def make_spec(env_id: str) -> EnvSpec:
    ref_random, ref_expert = _REFERENCE_RETURNS[env_id]
    if env_id.startswith("pointmaze"):
        return EnvSpec(
            env_id=env_id,
            obs_dim=2,
            act_dim=2,
            action_low=np.array([-POINTMAZE_MAX_STEP, -POINTMAZE_MAX_STEP]),
            action_high=np.array([POINTMAZE_MAX_STEP, POINTMAZE_MAX_STEP]),
            max_episode_steps=POINTMAZE_EPISODE_LIMIT,
            reference_random_return=ref_random,
            reference_expert_return=ref_expert,
        )
    if env_id == "linereach":
        return EnvSpec(
            env_id=env_id,
            obs_dim=2,
            act_dim=1,
            action_low=np.array([-1.0]),
            action_high=np.array([1.0]),
            max_episode_steps=LINEREACH_EPISODE_LIMIT,
            reference_random_return=ref_random,
            reference_expert_return=ref_expert,
        )
    raise ConfigError(f"unknown env id {env_id!r}; known: {', '.join(ENV_IDS)}")


def is_sparse(env_id: str) -> bool:
    return env_id.startswith("pointmaze")


# ---------------------------------------------------------------------------
# Scripted controllers
# ---------------------------------------------------------------------------


class RandomController:
    """Uniform actions over the action box."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec

    def act(self, obs, rng: np.random.Generator, explore: bool = True) -> np.ndarray:
        return rng.uniform(self.spec.action_low, self.spec.action_high)


class MazeExpertController:
    """BFS waypoint follower: recompute the cell path to the goal each step
    and head for the next cell center (the goal center once adjacent)."""

    def __init__(self, env: PointMaze):
        self.env = env

    def act(self, obs, rng=None, explore: bool = False) -> np.ndarray:
        pos = np.asarray(obs, dtype=np.float64)
        cell = (int(pos[1]), int(pos[0]))
        path = self.env.shortest_path(cell)
        target = self.env.goal_pos if len(path) < 2 else self.env._cell_center(path[1])
        return np.clip(target - pos, -POINTMAZE_MAX_STEP, POINTMAZE_MAX_STEP)


class LineReachExpertController:
    """Proportional controller: force = clip(1.5*(target - pos) - vel, -1, 1)."""

    def act(self, obs, rng=None, explore: bool = False) -> np.ndarray:
        pos, vel = float(obs[0]), float(obs[1])
        force = np.clip(1.5 * (LINEREACH_TARGET - pos) - vel, -1.0, 1.0)
        return np.array([force])


def expert_controller(env):
    if isinstance(env, PointMaze):
        return MazeExpertController(env)
    return LineReachExpertController()


# ---------------------------------------------------------------------------
# Offline dataset generation
# ---------------------------------------------------------------------------

MEDIUM_EPSILON = 0.4
MEDIUM_NOISE_STD = 0.3
REPLAY_EPSILON_START = 1.0


def generate_offline_dataset(
    env, grade: BehaviorGrade, n_transitions: int, rng: np.random.Generator
) -> list[Transition]:
    """Roll a graded behavior policy until ``n_transitions`` are collected.

    RANDOM: uniform actions. EXPERT: scripted controller. MEDIUM: expert with
    uniform-action mixing (eps 0.4) plus Gaussian action noise (std 0.3).
    MEDIUM_REPLAY: the medium behavior with eps annealed 1.0 -> 0.4 across
    the dataset. Rewards are always the true environment rewards.
    """
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    spec = env.spec
    random_ctrl = RandomController(spec)
    expert = expert_controller(env)
    transitions: list[Transition] = []

    while len(transitions) < n_transitions:
        if grade is BehaviorGrade.MEDIUM_REPLAY:
            progress = len(transitions) / n_transitions
            epsilon = REPLAY_EPSILON_START + (MEDIUM_EPSILON - REPLAY_EPSILON_START) * progress
        else:
            epsilon = MEDIUM_EPSILON
        obs = env.reset(rng)
        while len(transitions) < n_transitions:
            if grade is BehaviorGrade.RANDOM:
                action = random_ctrl.act(obs, rng)
            elif grade is BehaviorGrade.EXPERT:
                action = expert.act(obs)
            else:
                if rng.random() < epsilon:
                    action = random_ctrl.act(obs, rng)
                else:
                    noisy = expert.act(obs) + rng.normal(0.0, MEDIUM_NOISE_STD, spec.act_dim)
                    action = np.clip(noisy, spec.action_low, spec.action_high)
            t = env.step(action)
            transitions.append(t)
            obs = t.next_obs
            if t.done or t.truncated:
                break
    return transitions


# ---------------------------------------------------------------------------
# Reference returns
# ---------------------------------------------------------------------------


def rollout_return(env, controller, rng: np.random.Generator) -> float:
    """One undiscounted episode return under ``controller``."""
    obs = env.reset(rng)
    total = 0.0
    while True:
        t = env.step(controller.act(obs, rng))
        total += t.reward
        obs = t.next_obs
        if t.done or t.truncated:
            return total


def compute_reference_returns(
    env_id: str, episodes: int = REFERENCE_EPISODES, seed: int = REFERENCE_SEED
) -> tuple[float, float]:
    """Mean return of the random and expert controllers, pinned-seed run.

    The module constants in _REFERENCE_RETURNS were produced by exactly this
    procedure; a regression test regenerates and compares them.
    """
    env = make_env(env_id)
    rng = np.random.default_rng(seed)
    random_ctrl = RandomController(env.spec)
    random_mean = float(np.mean([rollout_return(env, random_ctrl, rng) for _ in range(episodes)]))
    expert = expert_controller(env)
    expert_mean = float(np.mean([rollout_return(env, expert, rng) for _ in range(episodes)]))
    return random_mean, expert_mean


# Measured once via compute_reference_returns (REFERENCE_EPISODES episodes,
# REFERENCE_SEED); see tests/test_envs.py for the regeneration check.
_REFERENCE_RETURNS: dict[str, tuple[float, float]] = {
    "pointmaze-umaze": (0.0, 1.0),
    "pointmaze-medium": (0.015, 1.0),
    "linereach": (-657.4642420076499, -58.56583418268887),
}
