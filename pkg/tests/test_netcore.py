import math

import numpy as np
import pytest

from stackrl import netcore
from stackrl.netcore import (Categorical, Gaussian, LossSpec, NetConfig, NetParams,
                             ShapeError, adam_init, adam_step)
from stackrl.rng import Stream

from conftest import random_batch, random_net

LOG_2PI = math.log(2.0 * math.pi)


def zero_net(kind="gaussian", obs_dim=4, action_dim=3, hidden=(5,)):
    cfg, params = random_net(kind, obs_dim, action_dim, hidden)
    for _, arr in params.tree():
        arr[...] = 0.0
    return cfg, params


class TestForward:
    def test_zero_weights_give_zero_mean_and_value(self, stream):
        cfg, params = zero_net()
        obs = random_batch(stream, 0, 7, cfg.obs_dim)
        out = netcore.forward(params, obs)
        assert np.array_equal(out.dist.mean, np.zeros((7, 3)))
        assert np.array_equal(out.value, np.zeros((7, 1)))
        assert np.array_equal(out.dist.sigma, np.exp(params.log_sigma))

    def test_elu_definition_on_identity_layer(self):
        cfg = NetConfig(obs_dim=2, action_dim=1, action_kind="gaussian", hidden=(2,))
        params = netcore.init_params(cfg, Stream(0, 0))
        params.weights[0][...] = np.eye(2)
        params.biases[0][...] = 0.0
        params.w_policy[...] = 0.0
        params.w_value[...] = np.array([[1.0], [0.0]])
        params.b_value[...] = 0.0
        out = netcore.forward(params, np.array([[-1.0, 0.5]]))
        # hidden = (ELU(-1), 0.5); value head reads the first coordinate
        assert out.value[0, 0] == pytest.approx(math.exp(-1.0) - 1.0, abs=1e-12)

    def test_matches_straight_line_reimplementation(self, stream):
        cfg, params = random_net("gaussian", obs_dim=5, action_dim=3, hidden=(8, 6), seed=3)
        obs = random_batch(stream, 1, 11, 5)
        out = netcore.forward(params, obs)
        for b in range(obs.shape[0]):
            h = obs[b]
            for w, bias in zip(params.weights, params.biases):
                z = h @ w + bias
                h = np.array([zz if zz > 0 else math.exp(zz) - 1.0 for zz in z])
            mean = h @ params.w_policy + params.b_policy
            value = float(h @ params.w_value[:, 0] + params.b_value[0])
            np.testing.assert_allclose(out.dist.mean[b], mean, rtol=0, atol=1e-12)
            assert abs(out.value[b, 0] - value) < 1e-12

    def test_forward_is_pure(self, stream):
        cfg, params = random_net("categorical", 4, 5, (6,))
        obs = random_batch(stream, 2, 9, 4)
        o1 = netcore.forward(params, obs)
        o2 = netcore.forward(params, obs)
        assert np.array_equal(o1.dist.logits, o2.dist.logits)
        assert np.array_equal(o1.value, o2.value)

    def test_value_column_shape(self, stream):
        cfg, params = random_net("gaussian")
        obs = random_batch(stream, 3, 4, cfg.obs_dim)
        assert netcore.forward(params, obs).value.shape == (4, 1)

    def test_shape_mismatch_raises(self, stream):
        cfg, params = random_net("gaussian", obs_dim=5)
        with pytest.raises(ShapeError):
            netcore.forward(params, np.zeros((3, 4)))

    def test_elu_continuity_near_zero(self):
        assert abs(netcore.elu(np.array([1e-9]))[0]) < 2e-9
        assert abs(netcore.elu(np.array([-1e-9]))[0]) < 2e-9


class TestLogProb:
    def test_standard_normal_at_mode(self):
        lp = netcore.gaussian_log_prob(np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)))
        assert lp[0] == pytest.approx(-0.5 * LOG_2PI, abs=1e-12)

    def test_uniform_categorical(self):
        lp = netcore.categorical_log_prob(np.zeros((1, 2)), np.array([0]))
        assert lp[0] == pytest.approx(math.log(0.5), abs=1e-12)

    def test_matches_density_formula(self):
        mean = np.array([[1.0, -1.0]])
        sigma = np.array([0.5, 2.0])
        action = np.zeros((1, 2))
        lp = netcore.gaussian_log_prob(mean, sigma, action)
        expected = sum(
            -math.log(s) - 0.5 * LOG_2PI - (a - m) ** 2 / (2 * s * s)
            for m, s, a in [(1.0, 0.5, 0.0), (-1.0, 2.0, 0.0)]
        )
        assert lp[0] == pytest.approx(expected, abs=1e-12)

    def test_gaussian_density_integrates_to_one(self):
        mean = np.full((1, 1), 0.3)
        sigma = np.array([0.7])
        grid = np.linspace(0.3 - 8 * 0.7, 0.3 + 8 * 0.7, 20001)
        lp = netcore.gaussian_log_prob(np.full((grid.size, 1), 0.3), sigma, grid[:, None])
        integral = np.trapezoid(np.exp(lp), grid)
        assert abs(integral - 1.0) < 0.01

    def test_sigma_must_be_positive(self):
        with pytest.raises(AssertionError):
            netcore.gaussian_log_prob(np.zeros((1, 1)), np.array([0.0]), np.zeros((1, 1)))


def _fd_check(cfg, params, obs, spec, samples=8, h=1e-5, seed=0):
    grads, _ = netcore.backward(params, obs, spec)
    gdict = dict(grads.tree())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in params.tree():
        flat = arr.reshape(-1)
        for _ in range(samples):
            i = int(rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + h
            up = netcore.loss_and_parts(params, obs, spec).total
            flat[i] = orig - h
            dn = netcore.loss_and_parts(params, obs, spec).total
            flat[i] = orig
            num = (up - dn) / (2 * h)
            ana = gdict[name].reshape(-1)[i]
            worst = max(worst, abs(ana - num) / max(1.0, abs(num)))
    return worst


def _random_spec(stream, tag, params, obs, kind, action_dim, entropy_coef=0.01):
    B = obs.shape[0]
    out = netcore.forward(params, obs)
    if kind == "gaussian":
        actions = out.dist.mean + out.dist.sigma * random_batch(stream, tag + 1, B, action_dim)
    else:
        actions = stream.randint(action_dim, tag + 1, np.arange(B, dtype=np.uint64))
    logp_old = netcore.log_prob(out.dist, actions) + 0.2 * stream.normal(tag + 2, np.arange(B, dtype=np.uint64))
    return LossSpec(
        actions=actions,
        logp_old=logp_old,
        advantages=stream.normal(tag + 3, np.arange(B, dtype=np.uint64)),
        returns=stream.normal(tag + 4, np.arange(B, dtype=np.uint64)),
        clip_epsilon=0.2,
        value_coef=0.5,
        entropy_coef=entropy_coef,
    )


class TestBackward:
    def test_linear_value_gradient_equals_obs(self):
        # no hidden layers: value head regresses directly on the observation
        cfg = NetConfig(obs_dim=4, action_dim=2, action_kind="gaussian", hidden=())
        params = netcore.init_params(cfg, Stream(4, 4))
        obs = np.array([[0.3, -1.2, 2.0, 0.7]])
        v = netcore.forward(params, obs).value[0, 0]
        spec = LossSpec(
            actions=np.zeros((1, 2)), logp_old=np.zeros(1), advantages=np.zeros(1),
            returns=np.array([v - 1.0]), clip_epsilon=0.2, value_coef=1.0, entropy_coef=0.0,
        )
        grads, _ = netcore.backward(params, obs, spec)
        np.testing.assert_allclose(grads.w_value[:, 0], obs[0], rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", ["gaussian", "categorical"])
    def test_finite_difference_agreement(self, stream, kind):
        cfg, params = random_net(kind, obs_dim=5, action_dim=3, hidden=(8, 6), seed=11)
        obs = random_batch(stream, 10, 16, 5)
        spec = _random_spec(stream, 20, params, obs, kind, 3)
        assert _fd_check(cfg, params, obs, spec) < 1e-5

    def test_gradients_scale_exactly_with_loss(self, stream):
        cfg, params = random_net("gaussian", seed=5)
        obs = random_batch(stream, 30, 8, cfg.obs_dim)
        spec = _random_spec(stream, 40, params, obs, "gaussian", cfg.action_dim)
        g1, _ = netcore.backward(params, obs, spec)
        spec_scaled = LossSpec(**{**spec.__dict__, "scale": 4.0})
        g4, _ = netcore.backward(params, obs, spec_scaled)
        for (_, a), (_, b) in zip(g1.tree(), g4.tree()):
            assert np.array_equal(4.0 * a, b)  # power-of-two scale is exact

    def test_surrogate_part_matches_ppo_objective(self, stream):
        from stackrl.ppo import ppo_objective

        cfg, params = random_net("gaussian", seed=6)
        obs = random_batch(stream, 50, 12, cfg.obs_dim)
        spec = _random_spec(stream, 60, params, obs, "gaussian", cfg.action_dim)
        _, info = netcore.backward(params, obs, spec)
        direct = ppo_objective(info.logp_new, spec.logp_old, spec.advantages, spec.clip_epsilon)
        assert info.parts.surrogate == pytest.approx(direct, abs=1e-12)


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        _, params = random_net("gaussian")
        state = adam_init(params)
        new_params, new_state = adam_step(params, state, params.zeros_like(), 5e-4)
        for (_, a), (_, b) in zip(params.tree(), new_params.tree()):
            assert np.array_equal(a, b)
        for (_, m) in new_state.first_moment.tree():
            assert np.all(m == 0.0)
        assert new_state.step_count == 1

    def test_single_scalar_first_step_magnitude(self):
        cfg = NetConfig(obs_dim=1, action_dim=1, action_kind="gaussian", hidden=())
        params = netcore.init_params(cfg, Stream(0, 0))
        grads = params.zeros_like()
        grads.b_value[...] = 1.0
        state = adam_init(params)
        new_params, _ = adam_step(params, state, grads, 5e-4)
        # bias-corrected moments are both exactly 1 on the first step
        expected = params.b_value[0] - 5e-4 * 1.0 / (1.0 + netcore.ADAM_EPS)
        assert new_params.b_value[0] == pytest.approx(expected, abs=1e-18)

    def test_pure_function_of_inputs(self, stream):
        _, params = random_net("categorical")
        grads = params.zeros_like()
        for _, g in grads.tree():
            g[...] = random_batch(stream, 70, 1, g.size).reshape(g.shape)
        state = adam_init(params)
        r1 = adam_step(params.copy(), state, grads, 1e-3)
        r2 = adam_step(params.copy(), state, grads, 1e-3)
        for (_, a), (_, b) in zip(r1[0].tree(), r2[0].tree()):
            assert np.array_equal(a, b)
        assert np.array_equal(r1[1].second_moment.w_policy, r2[1].second_moment.w_policy)

    def test_nonfinite_gradients_abort(self):
        _, params = random_net("gaussian")
        grads = params.zeros_like()
        grads.w_policy[0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            adam_step(params, adam_init(params), grads, 1e-3)

    def test_params_stay_finite_over_many_steps(self, stream):
        _, params = random_net("gaussian")
        state = adam_init(params)
        for k in range(50):
            grads = params.zeros_like()
            for i, (_, g) in enumerate(grads.tree()):
                g[...] = random_batch(stream, 1000 + 10 * k + i, 1, g.size).reshape(g.shape)
            params, state = adam_step(params, state, grads, 1e-3)
        assert params.all_finite()
