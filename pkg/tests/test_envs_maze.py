from collections import deque

import numpy as np
import pytest

from stackrl.envs.common import DoneReason, EnvConfig
from stackrl.envs.maze import (ACTION_DELTAS, GOAL, MAZE_SIZE, START, MazeState,
                               maze_observation, maze_reset, maze_step, open_grid,
                               parse_wall_grid)
from stackrl.envs.vec import MazeVecEnv
from stackrl.rng import Stream


def bfs_shortest_path(grid: np.ndarray, start, goal) -> int | None:
    """Independent breadth-first-search oracle over the wall grid."""
    dist = {start: 0}
    q = deque([start])
    while q:
        x, y = q.popleft()
        if (x, y) == goal:
            return dist[(x, y)]
        for dx, dy in ACTION_DELTAS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < MAZE_SIZE and 0 <= ny < MAZE_SIZE and not grid[nx, ny] \
                    and (nx, ny) not in dist:
                dist[(nx, ny)] = dist[(x, y)] + 1
                q.append((nx, ny))
    return None


class TestMazeStep:
    def test_step_into_goal_rewards_and_ends(self):
        st = maze_reset()
        st = MazeState(grid=st.grid, agent=(9, 8), goal=GOAL, steps=5)
        new, obs, reward, done, reason = maze_step(st, 0, 100)  # up
        assert reward == 1.0 and done and reason == DoneReason.GOAL
        assert new.agent == GOAL

    def test_blocked_by_border(self):
        st = maze_reset()
        new, _, reward, done, reason = maze_step(st, 2, 100)  # left from (0,0)
        assert new.agent == (0, 0)
        assert reward == 0.0 and not done

    def test_blocked_by_wall(self):
        grid = open_grid()
        grid[1, 0] = True
        st = MazeState(grid=grid, agent=(0, 0), goal=GOAL, steps=0)
        new, _, _, _, _ = maze_step(st, 3, 100)  # right into the wall
        assert new.agent == (0, 0)

    def test_timeout(self):
        st = maze_reset()
        st = MazeState(grid=st.grid, agent=(4, 4), goal=GOAL, steps=9)
        _, _, reward, done, reason = maze_step(st, 0, 10)
        assert done and reason == DoneReason.TIMEOUT and reward == 0.0

    def test_default_shortest_path_is_18(self):
        assert bfs_shortest_path(open_grid(), START, GOAL) == 18

    def test_reward_sparse_everywhere_except_goal_entry(self):
        grid = open_grid()
        for x in range(MAZE_SIZE):
            for y in range(MAZE_SIZE):
                if (x, y) == GOAL:
                    continue
                for a in range(4):
                    st = MazeState(grid=grid, agent=(x, y), goal=GOAL, steps=0)
                    new, _, reward, _, reason = maze_step(st, a, 1000)
                    if new.agent == GOAL:
                        assert reward == 1.0 and reason == DoneReason.GOAL
                    else:
                        assert reward == 0.0

    def test_observation_scaling(self):
        st = maze_reset()
        obs = maze_observation(st)
        np.testing.assert_allclose(obs, [-1.0, -1.0, 1.0, 1.0], atol=0)
        st2 = MazeState(grid=st.grid, agent=(9, 0), goal=GOAL, steps=0)
        obs2 = maze_observation(st2)
        assert obs2[0] == 1.0 and obs2[1] == -1.0

    def test_invalid_action_rejected(self):
        with pytest.raises(ValueError):
            maze_step(maze_reset(), 4, 100)


class TestWallFile:
    def test_parse_and_orientation(self):
        text = "\n".join(["." * 10] * 9 + ["..########"])
        grid = parse_wall_grid(text)
        # last text row is y = 0; columns 2..9 are walls there
        assert grid[2, 0] and grid[9, 0] and not grid[1, 0]
        assert not grid[2, 9]

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError):
            parse_wall_grid("\n".join(["." * 10] * 9))
        with pytest.raises(ValueError):
            parse_wall_grid("\n".join(["." * 9] * 10))

    def test_rejects_bad_characters(self):
        bad = "\n".join(["." * 10] * 9 + ["....x....."])
        with pytest.raises(ValueError):
            parse_wall_grid(bad)

    def test_rejects_blocked_start_or_goal(self):
        blocked_goal = "\n".join(["." * 9 + "#"] + ["." * 10] * 9)
        with pytest.raises(ValueError):
            parse_wall_grid(blocked_goal)

    def test_acceptance_maze_has_18_step_solution(self):
        with open("configs/maze_stair18.walls", encoding="utf-8") as fh:
            grid = parse_wall_grid(fh.read())
        assert bfs_shortest_path(grid, START, GOAL) == 18


class TestMazeVecEnv:
    def test_single_env_matches_scalar(self):
        cfg = EnvConfig(env_kind="maze", max_episode_length=50)
        env = MazeVecEnv(cfg, 1, 0)
        env.set_stage(1, 50)
        st = maze_reset()
        stream = Stream(4, 2)
        for t in range(120):
            a = int(stream.randint(4, t, 0))
            obs, rewards, dones, reasons, info = env.step(np.array([a]))
            st_new, s_obs, s_r, s_done, s_reason = maze_step(st, a, 50)
            assert rewards[0] == s_r
            assert bool(dones[0]) == s_done
            assert np.array_equal(info["terminal_obs"][0], s_obs)
            st = maze_reset() if s_done else st_new

    def test_identical_lanes_stay_identical(self):
        cfg = EnvConfig(env_kind="maze", max_episode_length=30)
        env = MazeVecEnv(cfg, 2, 0)
        env.set_stage(1, 30)
        stream = Stream(8, 1)
        for t in range(90):
            a = int(stream.randint(4, t, 0))
            obs, rewards, dones, _, _ = env.step(np.array([a, a]))
            assert np.array_equal(obs[0], obs[1])
            assert rewards[0] == rewards[1]

    def test_shard_counts_are_bitwise_identical(self):
        cfg = EnvConfig(env_kind="maze", max_episode_length=25)
        outs = []
        for shards in (1, 4):
            env = MazeVecEnv(cfg, 9, 3, shards=shards)
            env.set_stage(1, 25)
            env.reset_all()
            stream = Stream(6, 6)
            trace = []
            for t in range(75):
                acts = stream.randint(4, t, np.arange(9, dtype=np.uint64))
                obs, rewards, dones, reasons, _ = env.step(acts)
                trace.append((obs.copy(), rewards.copy(), dones.copy()))
            outs.append(trace)
        for (o1, r1, d1), (o2, r2, d2) in zip(*outs):
            assert np.array_equal(o1, o2) and np.array_equal(r1, r2) and np.array_equal(d1, d2)

    def test_auto_reset_restores_start(self):
        cfg = EnvConfig(env_kind="maze", max_episode_length=3)
        env = MazeVecEnv(cfg, 1, 0)
        env.set_stage(1, 3)
        for _ in range(3):
            obs, _, dones, reasons, _ = env.step(np.array([3]))
        assert dones[0] and reasons[0] == int(DoneReason.TIMEOUT)
        assert env.agent[0, 0] == 0 and env.steps[0] == 0  # fresh episode
        np.testing.assert_allclose(obs[0], maze_observation(maze_reset()), atol=0)
