import math

import numpy as np
import pytest

from stackrl.envs.common import EnvConfig
from stackrl.envs.stacker import StackState, stack_reset, stack_step
from stackrl.reward import (SIGNALS, Quaternion, RewardTable, compose, quat_conjugate,
                            quat_mult, r_abs, r_action, r_dense, r_grasp, r_orientation,
                            r_sparse, r_table, slot_position)
from stackrl.rng import DrawCursor, Stream


class TestDense:
    def test_hand_case(self):
        assert r_dense((0, 0, 0), (1, 2, 2)) == 9.0

    def test_identical_points(self):
        assert r_dense((0.3, -1.0, 2.0), (0.3, -1.0, 2.0)) == 0.0

    def test_symmetric(self, stream):
        for i in range(100):
            a = stream.normal(i, np.arange(3, dtype=np.uint64))
            b = stream.normal(1000 + i, np.arange(3, dtype=np.uint64))
            assert r_dense(a, b) == r_dense(b, a)


class TestSparse:
    def test_at_goal(self):
        assert r_sparse(1.0, 1.0, 0.1) == 1.0

    def test_boundary_inclusive(self):
        assert r_sparse(1.1, 1.0, 0.1) == 1.0
        assert r_sparse(np.array([1.0, 2.1]), np.array([1.0, 2.0]), 0.1) == 1.0

    def test_just_outside(self):
        assert r_sparse(1.0 + 1.0001 * 0.1, 1.0, 0.1) == 0.0

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            r_sparse(0.0, 0.0, 0.0)


class TestAction:
    def test_zero_action_at_home(self):
        assert r_action(np.zeros(4), np.array([0, 0, 0.5]), np.array([0, 0, 0.5])) == 0.0

    def test_unit_action(self):
        assert r_action(np.array([1, 0, 0, 0.0]), np.zeros(3), np.zeros(3)) == 1.0

    def test_matches_summation_oracle(self, stream):
        for i in range(50):
            a = stream.normal(2000 + i, np.arange(4, dtype=np.uint64))
            j = stream.normal(3000 + i, np.arange(3, dtype=np.uint64))
            j0 = stream.normal(4000 + i, np.arange(3, dtype=np.uint64))
            expected = sum(x * x for x in a) + sum((p - q) ** 2 for p, q in zip(j, j0))
            assert r_action(a, j, j0) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            r_action(np.zeros(4), np.zeros(3), np.zeros(2))


class TestTable:
    def test_at_threshold_inclusive(self):
        assert r_table(0.04, 0.04) == 1.0

    def test_just_above(self):
        assert r_table(0.04 + 1e-9, 0.04) == 0.0

    def test_on_table(self):
        assert r_table(0.0, 0.04) == 1.0


class TestQuaternions:
    def test_identity_mult(self):
        q = Quaternion(0.5, 0.5, 0.5, 0.5)
        assert quat_mult(Quaternion.IDENTITY, q) == q

    def test_i_times_j_is_k(self):
        i = Quaternion(0.0, 1.0, 0.0, 0.0)
        j = Quaternion(0.0, 0.0, 1.0, 0.0)
        assert quat_mult(i, j) == Quaternion(0.0, 0.0, 0.0, 1.0)

    def test_conjugate_negates_vector_part(self):
        q = Quaternion(0.1, 0.2, -0.3, 0.4)
        c = quat_conjugate(q)
        assert (c.w, c.x, c.y, c.z) == (0.1, -0.2, 0.3, -0.4)

    def test_self_orientation_error_is_zero(self, stream):
        for i in range(20):
            raw = stream.normal(5000 + i, np.arange(4, dtype=np.uint64))
            n = math.sqrt(sum(x * x for x in raw))
            q = Quaternion(*(x / n for x in raw))
            assert r_orientation(q, q) == pytest.approx(0.0, abs=1e-12)

    def test_error_monotone_in_angle(self):
        def rot_z(angle):
            return Quaternion(math.cos(angle / 2), 0.0, 0.0, math.sin(angle / 2))

        errs = [r_orientation(rot_z(a), Quaternion.IDENTITY) for a in (0.1, 0.5, 1.5, 3.0)]
        assert errs == sorted(errs)

    def test_non_unit_rejected(self):
        with pytest.raises(AssertionError):
            r_orientation(Quaternion(1.0, 1.0, 0.0, 0.0), Quaternion.IDENTITY)


class TestAbs:
    def test_single_matching_object(self):
        assert r_abs((1, 2, 3), [(1, 2, 3)]) == 0.0

    def test_hand_sum(self):
        assert r_abs((0, 0, 0), [(1, 1, 1), (3, 0, 0)]) == 3.0

    def test_single_object_is_l1(self):
        assert r_abs((0, 0, 0), [(1, -2, 0.5)]) == 3.5

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            r_abs((0, 0, 0), [])


class TestGrasp:
    def test_exact_match(self):
        assert r_grasp((1, 2, 3), (1, 2, 3), 0.05) == 1.0

    def test_one_axis_out(self):
        assert r_grasp((1.075, 2, 3), (1, 2, 3), 0.05) == 0.0

    def test_boundary_inclusive(self):
        # 0.05 - 0.0 is exact in binary floating point, unlike 1.05 - 1.0
        assert r_grasp((0.05, 2, 3), (0, 2, 3), 0.05) == 1.0


class TestRewardTable:
    def test_published_defaults(self):
        t = RewardTable()
        assert t.goal_achieved == 150.0
        assert t.box_on_target == 1.0
        assert t.subgoal_bonus == 150.0
        assert t.box_to_goal == -5.0
        assert t.ee_to_box == -5.0
        assert t.action_penalty == -0.01
        assert t.table_touch == -5.0
        assert t.orientation == -0.1
        assert t.grasp == 2.0

    def test_ablation_overrides_loadable(self):
        for dist in (1.0, 5.0, 25.0):
            for done in (15.0, 150.0):
                t = RewardTable().with_overrides({
                    "box_to_goal": -dist, "ee_to_box": -dist,
                    "goal_achieved": done, "subgoal_bonus": done,
                })
                assert t.box_to_goal == -dist and t.goal_achieved == done

    def test_unknown_signal_rejected(self):
        with pytest.raises(ValueError):
            RewardTable().with_overrides({"mystery": 1.0})

    def test_array_order_matches_signal_list(self):
        arr = RewardTable().to_array()
        assert arr.shape == (len(SIGNALS),)
        assert arr[SIGNALS.index("subgoal_bonus")] == 150.0


def make_state(cfg, n_goal=1, **overrides):
    K = cfg.num_objects
    st = StackState(
        ee_pos=np.array([0.0, 0.0, 0.5]),
        ee_vel=np.zeros(3),
        aperture=1.0,
        held=-1,
        obj_pos=np.zeros((K, 3)),
        obj_vel=np.zeros((K, 3)),
        obj_active=np.zeros(K, dtype=bool),
        goal_pos=np.array([0.5, 0.5, 0.04]),
        perm=np.arange(K, dtype=np.int64),
        bonus_claimed=np.zeros(K, dtype=bool),
        steps=0,
        n_goal=n_goal,
        target_slot=0,
    )
    st.obj_active[:n_goal] = True
    for k, v in overrides.items():
        setattr(st, k, v)
    return st


class TestCompose:
    def setup_method(self):
        self.cfg = EnvConfig(env_kind="stacker", num_objects=2)
        self.table = RewardTable()

    def test_box_on_target_pays_one_per_step(self):
        st = make_state(self.cfg, n_goal=1)
        st.obj_pos[0] = slot_position(st.goal_pos, 0, self.cfg.cube_height)
        st.bonus_claimed[0] = True  # bonus already paid earlier in the episode
        _, breakdown, claims, _, _ = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert breakdown["box_on_target"] == 1.0
        assert breakdown["subgoal_bonus"] == 0.0

    def test_subgoal_bonus_paid_once(self):
        st = make_state(self.cfg, n_goal=1)
        st.obj_pos[0] = slot_position(st.goal_pos, 0, self.cfg.cube_height)
        _, b1, claims, _, _ = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert b1["subgoal_bonus"] == 150.0
        st.bonus_claimed = claims
        _, b2, _, _, _ = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert b2["subgoal_bonus"] == 0.0

    def test_breakdown_sums_to_total(self, stream):
        cursor_stream = Stream(99, 1)
        for i in range(200):
            cursor = DrawCursor(cursor_stream, i, 0)
            st = stack_reset(self.cfg, 2, cursor)
            action = 2.0 * stream.uniform(7000 + i, np.arange(4, dtype=np.uint64)) - 1.0
            for mode in ("shaped_set", "staggered", "absolute"):
                total, breakdown, _, _, _ = compose(st, action, self.cfg, self.table, mode)
                assert total == pytest.approx(sum(breakdown.values()), abs=1e-12)
                assert set(breakdown) == set(SIGNALS)

    def test_ee_to_box_zero_while_holding_target(self):
        st = make_state(self.cfg, n_goal=1)
        st.obj_pos[0] = st.ee_pos.copy()
        st.held = 0
        _, breakdown, _, _, _ = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert breakdown["ee_to_box"] == 0.0

    def test_absolute_mode_averages_over_objects(self):
        st = make_state(self.cfg, n_goal=2)
        st.obj_pos[0] = np.array([0.1, 0.0, 0.04])
        st.obj_pos[1] = np.array([-0.3, 0.2, 0.04])
        _, breakdown, _, _, _ = compose(st, np.zeros(4), self.cfg, self.table, "absolute")
        expected = -5.0 * r_abs(st.goal_pos, [st.obj_pos[0], st.obj_pos[1]])
        assert breakdown["box_to_goal"] == pytest.approx(expected, abs=1e-12)

    def test_goal_achieved_requires_release(self):
        st = make_state(self.cfg, n_goal=1)
        st.obj_pos[0] = slot_position(st.goal_pos, 0, self.cfg.cube_height)
        st.held = 0
        _, b_held, _, _, success = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert not success and b_held["goal_achieved"] == 0.0
        st.held = -1
        _, b_free, _, _, success = compose(st, np.zeros(4), self.cfg, self.table, "shaped_set")
        assert success and b_free["goal_achieved"] == 150.0

    def test_staggered_target_is_first_unplaced_slot(self):
        st = make_state(self.cfg, n_goal=2)
        st.obj_pos[0] = slot_position(st.goal_pos, 0, self.cfg.cube_height)
        st.obj_pos[1] = np.array([-0.5, -0.5, 0.04])
        _, _, _, target_slot, _ = compose(st, np.zeros(4), self.cfg, self.table, "staggered")
        assert target_slot == 1

    def test_one_time_bonus_at_most_once_per_episode(self):
        # run full episodes with random actions and count per-slot payouts
        cfg = EnvConfig(env_kind="stacker", num_objects=1, max_episode_length=60)
        table = RewardTable()
        stream = Stream(31, 0)
        for ep in range(5):
            st = stack_reset(cfg, 1, DrawCursor(stream, ep, 0))
            paid = 0.0
            done = False
            t = 0
            while not done:
                a = 2.0 * stream.uniform(50 + ep, t, np.arange(4, dtype=np.uint64)) - 1.0
                st, _, _, done, _, br = stack_step(st, a, cfg, table, "shaped_set")
                paid += br["subgoal_bonus"]
                t += 1
            assert paid in (0.0, 150.0)
