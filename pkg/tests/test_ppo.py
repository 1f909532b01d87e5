import math

import numpy as np
import pytest
from pytest import approx

from tprl.nets import flatten_grads, flatten_params, mlp_forward, mlp_init, set_flat_params
from tprl.ppo import (
    DecisionSample,
    PpoConfig,
    PpoError,
    actor_loss_only,
    categorical_entropy,
    critic_loss_only,
    gae_advantages,
    log_softmax,
    policy_logprob_and_sample,
    ppo_losses,
    ppo_update,
    rewards_to_go,
    softmax,
)
from tprl.nets import adam_init


def random_batch(rng, n=12):
    obs = rng.normal(size=(n, 5))
    actions = rng.integers(0, 3, size=n)
    adv = rng.normal(size=n)
    targets = rng.normal(size=n)
    return obs, actions, adv, targets


class TestPolicySampling:
    def test_uniform_logits(self):
        rng = np.random.default_rng(0)
        action, logp = policy_logprob_and_sample(np.zeros(3), rng)
        assert action in (0, 1, 2)
        assert logp == approx(math.log(1.0 / 3.0), abs=1e-12)

    def test_dominant_logit(self):
        rng = np.random.default_rng(1)
        counts = np.zeros(3)
        for _ in range(2000):
            action, _ = policy_logprob_and_sample(np.array([10.0, 0.0, 0.0]), rng)
            counts[action] += 1
        assert counts[0] / 2000 > 0.9999 - 3 * math.sqrt(1e-4 / 2000)

    def test_empirical_frequencies(self):
        # Oracle: binomial 3-sigma bands around the softmax probabilities.
        rng = np.random.default_rng(2)
        logits = np.array([0.3, -0.5, 1.1])
        p = softmax(logits)
        n = 100_000
        counts = np.zeros(3)
        for _ in range(n):
            a, _ = policy_logprob_and_sample(logits, rng)
            counts[a] += 1
        for k in range(3):
            sigma = math.sqrt(p[k] * (1 - p[k]) / n)
            assert abs(counts[k] / n - p[k]) < 3 * sigma

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            logits = rng.normal(scale=100.0, size=3)
            assert softmax(logits).sum() == approx(1.0, abs=1e-12)

    def test_logsumexp_overflow_safe(self):
        logits = np.array([1e3, -1e3, 0.0])
        lp = log_softmax(logits)
        assert np.all(np.isfinite(lp))
        assert lp[0] == approx(0.0, abs=1e-12)


class TestReturns:
    def test_rewards_to_go_undiscounted(self):
        assert rewards_to_go([1, 2, 3], 1.0).tolist() == [6.0, 5.0, 3.0]

    def test_rewards_to_go_discounted(self):
        assert rewards_to_go([1, 2, 3], 0.5).tolist() == [2.75, 3.5, 3.0]

    def test_single_reward(self):
        assert rewards_to_go([4.0], 0.9).tolist() == [4.0]

    def test_gae_hand_case(self):
        adv = gae_advantages([1.0, 1.0], [0.5, 0.5], 0.0, 1.0, 1.0)
        assert adv.tolist() == [1.5, 0.5]

    def test_gae_zero_case(self):
        adv = gae_advantages(np.zeros(5), np.zeros(5), 0.0, 0.99, 0.97)
        assert np.all(adv == 0.0)

    def test_gae_matches_double_sum(self):
        # Oracle: the definitional double sum over TD residuals.
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 50))
            rewards = rng.normal(size=n)
            values = rng.normal(size=n)
            boot = float(rng.normal())
            gamma = float(rng.uniform(0.9, 1.0))
            lam = float(rng.uniform(0.9, 1.0))
            fast = gae_advantages(rewards, values, boot, gamma, lam)
            nxt = np.concatenate([values[1:], [boot]])
            deltas = rewards + gamma * nxt - values
            slow = np.array(
                [
                    sum((gamma * lam) ** k * deltas[t + k] for k in range(n - t))
                    for t in range(n)
                ]
            )
            assert np.max(np.abs(fast - slow)) < 1e-10

    def test_length_mismatch(self):
        with pytest.raises(PpoError):
            gae_advantages([1.0, 2.0], [0.0], 0.0, 0.99, 0.97)


class TestClipObjective:
    def test_spot_values(self):
        # ratio 1.5, adv 2, eps 0.2 -> min(3.0, 2.4) = 2.4
        assert min(1.5 * 2.0, np.clip(1.5, 0.8, 1.2) * 2.0) == approx(2.4, abs=1e-12)
        # ratio 0.5, adv -1 -> min(-0.5, -0.8) = -0.8
        assert min(0.5 * -1.0, np.clip(0.5, 0.8, 1.2) * -1.0) == approx(-0.8, abs=1e-12)

    def test_first_step_ratio_one(self):
        rng = np.random.default_rng(5)
        actor = mlp_init(5, 3, rng)
        critic = mlp_init(5, 1, rng)
        obs, actions, adv, targets = random_batch(rng)
        logits = mlp_forward(actor, obs)
        logp_old = log_softmax(logits)[np.arange(len(actions)), actions]
        report = ppo_losses(obs, actions, logp_old, adv, targets, actor, critic, PpoConfig())
        assert report.clip_objective == approx(float(adv.mean()), abs=1e-12)

    def test_lower_bound_property(self):
        rng = np.random.default_rng(6)
        eps = 0.2
        for _ in range(10_000):
            ratio = float(rng.uniform(0.0, 3.0))
            adv = float(rng.normal())
            per = min(ratio * adv, float(np.clip(ratio, 1 - eps, 1 + eps)) * adv)
            assert per <= ratio * adv + 1e-15

    def test_gradient_check(self):
        rng = np.random.default_rng(7)
        cfg = PpoConfig(entropy_coef=0.013)
        actor = mlp_init(5, 3, rng)
        critic = mlp_init(5, 1, rng)
        obs, actions, adv, targets = random_batch(rng)
        logits = mlp_forward(actor, obs)
        logp_old = log_softmax(logits)[np.arange(len(actions)), actions] + rng.normal(
            scale=0.05, size=len(actions)
        )
        report = ppo_losses(obs, actions, logp_old, adv, targets, actor, critic, cfg)
        ga = flatten_grads(report.actor_grads_w, report.actor_grads_b)
        flat = flatten_params(actor)
        h = 1e-5
        for k in rng.choice(flat.size, 50, replace=False):
            up = flat.copy(); up[k] += h
            set_flat_params(actor, up)
            lp = actor_loss_only(actor, obs, actions, logp_old, adv, cfg)
            dn = flat.copy(); dn[k] -= h
            set_flat_params(actor, dn)
            lm = actor_loss_only(actor, obs, actions, logp_old, adv, cfg)
            set_flat_params(actor, flat)
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(ga[k]), 1e-8)
            assert abs(fd - ga[k]) / denom < 1e-4

    def test_empty_batch_error(self):
        rng = np.random.default_rng(8)
        actor = mlp_init(5, 3, rng)
        critic = mlp_init(5, 1, rng)
        with pytest.raises(PpoError):
            ppo_losses(
                np.zeros((0, 5)), np.zeros(0, dtype=int), np.zeros(0), np.zeros(0),
                np.zeros(0), actor, critic, PpoConfig(),
            )


def make_samples(rng, n, reward_fn):
    samples = []
    for _ in range(n):
        obs = rng.normal(size=5)
        action = int(rng.integers(0, 3))
        samples.append(
            DecisionSample(
                obs_vec=obs,
                action=action,
                logprob_old=math.log(1.0 / 3.0),
                reward=reward_fn(action),
                value_est=0.0,
                advantage=reward_fn(action),
                reward_to_go=reward_fn(action),
            )
        )
    return samples


class TestPpoUpdate:
    def test_ascent_direction(self):
        # Positive advantage only for action 0: its probability must rise.
        rng = np.random.default_rng(9)
        actor = mlp_init(5, 3, rng, final_scale=0.01)
        critic = mlp_init(5, 1, rng)
        samples = make_samples(rng, 64, lambda a: 1.0 if a == 0 else -1.0)
        obs = np.stack([s.obs_vec for s in samples])
        p_before = softmax(mlp_forward(actor, obs))[:, 0].mean()
        ppo_update(
            samples, actor, critic, adam_init(actor), adam_init(critic),
            PpoConfig(grad_steps=20), np.random.default_rng(1),
        )
        p_after = softmax(mlp_forward(actor, obs))[:, 0].mean()
        assert p_after > p_before

    def test_value_regression_converges(self):
        # Oracle harness: constant target c, loss must shrink monotonically
        # over the first steps on a fixed batch.
        rng = np.random.default_rng(10)
        actor = mlp_init(5, 3, rng)
        critic = mlp_init(5, 1, rng)
        c = 3.7
        samples = make_samples(rng, 46, lambda a: 0.0)
        for s in samples:
            s.reward_to_go = c
        obs = np.stack([s.obs_vec for s in samples])
        losses = []
        opt_a, opt_c = adam_init(actor), adam_init(critic)
        for _ in range(10):
            report = ppo_losses(
                obs,
                np.array([s.action for s in samples]),
                np.array([s.logprob_old for s in samples]),
                np.zeros(len(samples)),
                np.full(len(samples), c),
                actor, critic, PpoConfig(critic_lr=0.01),
            )
            losses.append(report.value_loss)
            from tprl.nets import adam_step

            adam_step(critic, report.critic_grads_w, report.critic_grads_b, opt_c, 0.01)
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_bit_identical_updates(self):
        def run():
            rng = np.random.default_rng(11)
            actor = mlp_init(5, 3, rng)
            critic = mlp_init(5, 1, rng)
            samples = make_samples(rng, 100, lambda a: float(a))
            ppo_update(
                samples, actor, critic, adam_init(actor), adam_init(critic),
                PpoConfig(), np.random.default_rng(5),
            )
            return flatten_params(actor), flatten_params(critic)

        a1, c1 = run()
        a2, c2 = run()
        assert np.array_equal(a1, a2)
        assert np.array_equal(c1, c2)

    def test_empty_sample_set(self):
        rng = np.random.default_rng(12)
        actor = mlp_init(5, 3, rng)
        critic = mlp_init(5, 1, rng)
        with pytest.raises(PpoError):
            ppo_update(
                [], actor, critic, adam_init(actor), adam_init(critic),
                PpoConfig(), rng,
            )


class TestEntropy:
    def test_uniform_entropy(self):
        assert categorical_entropy(np.zeros(3)) == approx(math.log(3.0), abs=1e-12)

    def test_peaked_entropy_small(self):
        assert categorical_entropy(np.array([100.0, 0.0, 0.0])) < 1e-6
