import math

import numpy as np
import pytest
from pytest import approx

from tprl.ddqn import (
    DdqnAgent,
    DdqnConfig,
    DdqnError,
    ReplayBuffer,
    ddqn_update,
    double_q_targets,
    epsilon_by_progress,
    q_loss_only,
)
from tprl.nets import adam_init, flatten_grads, flatten_params, mlp_forward, mlp_init, set_flat_params


class TestReplayBuffer:
    def test_push_and_sample(self):
        buf = ReplayBuffer(capacity=100)
        rng = np.random.default_rng(0)
        for i in range(60):
            buf.push(np.full(5, i), i % 3, float(i), np.full(5, i + 1), False)
        obs, actions, rewards, next_obs, dones = buf.sample(32, rng)
        assert obs.shape == (32, 5)
        assert np.all(next_obs[:, 0] == obs[:, 0] + 1)

    def test_ring_overwrite(self):
        buf = ReplayBuffer(capacity=10)
        for i in range(25):
            buf.push(np.zeros(5), 0, float(i), np.zeros(5), False)
        assert buf.size == 10
        assert set(buf.rewards.tolist()) == set(float(i) for i in range(15, 25))

    def test_insufficient_sample_error(self):
        buf = ReplayBuffer(capacity=10)
        buf.push(np.zeros(5), 0, 0.0, np.zeros(5), False)
        with pytest.raises(DdqnError):
            buf.sample(4, np.random.default_rng(0))


class TestTargets:
    def test_terminal_target_ignores_q(self):
        rng = np.random.default_rng(1)
        online = mlp_init(5, 3, rng)
        target = mlp_init(5, 3, rng)
        y = double_q_targets(
            online, target, np.array([-1.0]), np.zeros((1, 5)), np.array([True]), 0.99
        )
        assert y[0] == approx(-1.0, abs=1e-15)

    def test_double_q_rule_hand_case(self):
        # Online argmax picks action 1; the target net evaluates it.
        q_online_next = np.array([[1.0, 3.0, 2.0]])
        q_target_next = np.array([[0.5, 0.1, 0.9]])
        best = np.argmax(q_online_next, axis=1)
        y = 0.0 + 0.99 * q_target_next[np.arange(1), best]
        assert y[0] == approx(0.099, abs=1e-12)

    def test_gradient_check(self):
        rng = np.random.default_rng(2)
        online = mlp_init(5, 3, rng)
        obs = rng.normal(size=(10, 5))
        actions = rng.integers(0, 3, size=10)
        targets = rng.normal(size=10)

        from tprl.nets import mlp_backward, mlp_forward_cached

        q, acts = mlp_forward_cached(online, obs)
        err = q[np.arange(10), actions] - targets
        dq = np.zeros_like(q)
        dq[np.arange(10), actions] = 2.0 * err / 10
        gw, gb = mlp_backward(online, acts, dq)
        flat_g = flatten_grads(gw, gb)
        flat = flatten_params(online)
        h = 1e-5
        for k in rng.choice(flat.size, 50, replace=False):
            up = flat.copy(); up[k] += h
            set_flat_params(online, up)
            lp = q_loss_only(online, obs, actions, targets)
            dn = flat.copy(); dn[k] -= h
            set_flat_params(online, dn)
            lm = q_loss_only(online, obs, actions, targets)
            set_flat_params(online, flat)
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(flat_g[k]), 1e-8)
            assert abs(fd - flat_g[k]) / denom < 1e-4


class TestEpsilon:
    def test_schedule_endpoints(self):
        cfg = DdqnConfig()
        assert epsilon_by_progress(0.0, cfg) == approx(1.0)
        assert epsilon_by_progress(0.3, cfg) == approx(0.05)
        assert epsilon_by_progress(1.0, cfg) == approx(0.05)

    def test_midpoint(self):
        cfg = DdqnConfig()
        assert epsilon_by_progress(0.15, cfg) == approx(0.525)

    def test_uniform_when_epsilon_one(self):
        # Oracle: 3-sigma binomial bands around 1/3 frequencies.
        rng = np.random.default_rng(3)
        agent = DdqnAgent.initialize(np.ones(5), rng)
        n = 30_000
        counts = np.zeros(3)
        obs = np.zeros(5)
        for _ in range(n):
            counts[agent.act(obs, rng, epsilon=1.0)] += 1
        sigma = math.sqrt((1 / 3) * (2 / 3) / n)
        for k in range(3):
            assert abs(counts[k] / n - 1 / 3) < 3 * sigma


class TestUpdate:
    def test_loss_decreases_on_fixed_buffer(self):
        rng = np.random.default_rng(4)
        cfg = DdqnConfig(batch_size=32, lr=3e-3)
        online = mlp_init(5, 3, rng)
        target = online.copy()
        buf = ReplayBuffer(200)
        for _ in range(200):
            obs = rng.normal(size=5)
            buf.push(obs, int(rng.integers(0, 3)), float(rng.normal()), obs, True)
        opt = adam_init(online)
        first = ddqn_update(buf, online, target, opt, cfg, np.random.default_rng(0))
        for _ in range(60):
            last = ddqn_update(buf, online, target, opt, cfg, np.random.default_rng(0))
        assert last < first

    def test_agent_target_sync(self):
        rng = np.random.default_rng(5)
        cfg = DdqnConfig(batch_size=4, target_sync_every=5, updates_per_sample=0.0)
        agent = DdqnAgent.initialize(np.ones(5), rng, cfg)
        agent.online.weights[0][0, 0] += 1.0
        assert agent.online.weights[0][0, 0] != agent.target.weights[0][0, 0]
        for _ in range(5):
            agent.observe_transition(np.zeros(5), 0, 0.0, np.zeros(5), False, rng)
        assert agent.online.weights[0][0, 0] == agent.target.weights[0][0, 0]
