"""Clipped-surrogate policy optimization for the discrete lane-change policy.

Actor and critic are separate tanh MLPs updated by their own Adam optimizers:
the actor maximizes the clipped surrogate objective, the critic regresses on
rewards-to-go.  A combined mode folds the value coefficient and an entropy
bonus into the same update for completeness; the default keeps the updates
separate with no entropy bonus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import (
    AdamState,
    MlpParams,
    adam_init,
    adam_step,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_init,
)
from .world import FrenetObservation

OBS_DIM = 5
ACTION_DIM = 3


class PpoError(ValueError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    actor_lr: float = 1e-3
    critic_lr: float = 3e-4
    grad_steps: int = 80
    gamma: float = 0.99
    gae_lambda: float = 0.97
    minibatch_size: int = 46
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    combined_loss: bool = False

    def validate(self) -> None:
        if not 0.0 < self.clip_ratio < 1.0:
            raise PpoError("clip ratio must be in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise PpoError("gamma and lambda must be in (0, 1]")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise PpoError("learning rates must be positive")


@dataclass
class DecisionSample:
    """One high-level decision: observation, action, and its credited reward."""

    obs_vec: np.ndarray
    action: int
    logprob_old: float
    reward: float
    value_est: float
    advantage: float = 0.0
    reward_to_go: float = 0.0
    obs: FrenetObservation | None = None


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    p = np.exp(logp)
    return -(p * logp).sum(axis=-1)


def policy_logprob_and_sample(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Sample from softmax(logits); returns (action, log probability)."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1:
        raise PpoError("expected a single logits vector")
    logp = log_softmax(logits)
    p = np.exp(logp)
    u = rng.random()
    action = int(np.searchsorted(np.cumsum(p), u))
    action = min(action, len(p) - 1)
    return action, float(logp[action])


def rewards_to_go(rewards, gamma: float, bootstrap_value: float = 0.0) -> np.ndarray:
    """Discounted suffix sums, optionally bootstrapped past the cut."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise PpoError("rewards must be non-empty")
    out = np.empty_like(rewards)
    running = bootstrap_value
    for i in range(len(rewards) - 1, -1, -1):
        running = rewards[i] + gamma * running
        out[i] = running
    return out


def gae_advantages(rewards, values, bootstrap_value: float, gamma: float, lam: float) -> np.ndarray:
    """Exponentially weighted temporal-difference residuals."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise PpoError("rewards and values must be aligned")
    next_values = np.concatenate([values[1:], [bootstrap_value]])
    deltas = rewards + gamma * next_values - values
    out = np.empty_like(deltas)
    running = 0.0
    for i in range(len(deltas) - 1, -1, -1):
        running = deltas[i] + gamma * lam * running
        out[i] = running
    return out


@dataclass
class PpoLossReport:
    clip_objective: float
    value_loss: float
    entropy: float
    actor_grads_w: list
    actor_grads_b: list
    critic_grads_w: list
    critic_grads_b: list
    approx_kl: float
    clip_fraction: float


def actor_loss_only(actor: MlpParams, obs, actions, logp_old, advantages, cfg: PpoConfig) -> float:
    """Scalar actor loss (negated surrogate), used by gradient checks."""
    logits = mlp_forward(actor, obs)
    logp_all = log_softmax(logits)
    logp = logp_all[np.arange(len(actions)), actions]
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    per_sample = np.minimum(ratio * advantages, clipped * advantages)
    entropy = categorical_entropy(logits).mean()
    return float(-(per_sample.mean() + cfg.entropy_coef * entropy))


def critic_loss_only(critic: MlpParams, obs, targets) -> float:
    v = mlp_forward(critic, obs)[:, 0]
    return float(np.mean((v - targets) ** 2))


def ppo_losses(
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    targets: np.ndarray,
    actor: MlpParams,
    critic: MlpParams,
    cfg: PpoConfig,
) -> PpoLossReport:
    """Surrogate objective, value loss, entropy, and their exact gradients."""
    if len(obs) == 0:
        raise PpoError("empty batch")
    n = len(obs)
    idx = np.arange(n)

    logits, actor_acts = mlp_forward_cached(actor, obs)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * advantages
    per_sample = np.minimum(unclipped, clipped)
    clip_objective = float(per_sample.mean())
    entropy_each = -(p * logp_all).sum(axis=1)
    entropy = float(entropy_each.mean())

    if not np.all(np.isfinite(per_sample)):
        raise PpoError("non-finite surrogate objective")

    # d(actor_loss)/dlogits where actor_loss = -(surrogate + c2 * entropy).
    active = (unclipped <= clipped).astype(float)  # clipped branch has zero grad
    w = advantages * ratio * active / n
    onehot = np.zeros_like(p)
    onehot[idx, actions] = 1.0
    dlogits = -w[:, None] * (onehot - p)
    if cfg.entropy_coef != 0.0:
        dentropy = -p * (logp_all + entropy_each[:, None])
        dlogits += -cfg.entropy_coef * dentropy / n
    a_gw, a_gb = mlp_backward(actor, actor_acts, dlogits)

    v_out, critic_acts = mlp_forward_cached(critic, obs)
    v = v_out[:, 0]
    err = v - targets
    value_loss = float(np.mean(err ** 2))
    if not np.isfinite(value_loss):
        raise PpoError("non-finite value loss")
    dv = (2.0 * err / n)[:, None]
    c_gw, c_gb = mlp_backward(critic, critic_acts, dv)
    if cfg.combined_loss:
        c_gw = [cfg.value_coef * g for g in c_gw]
        c_gb = [cfg.value_coef * g for g in c_gb]

    approx_kl = float(np.mean(logp_old - logp))
    clip_fraction = float(np.mean((np.abs(ratio - 1.0) > cfg.clip_ratio).astype(float)))
    return PpoLossReport(
        clip_objective=clip_objective,
        value_loss=value_loss,
        entropy=entropy,
        actor_grads_w=a_gw,
        actor_grads_b=a_gb,
        critic_grads_w=c_gw,
        critic_grads_b=c_gb,
        approx_kl=approx_kl,
        clip_fraction=clip_fraction,
    )


@dataclass
class PpoUpdateStats:
    clip_objective_start: float
    clip_objective_end: float
    value_loss_start: float
    value_loss_end: float
    entropy: float
    approx_kl: float
    clip_fraction: float


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(
    samples: list[DecisionSample],
    actor: MlpParams,
    critic: MlpParams,
    actor_opt: AdamState,
    critic_opt: AdamState,
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> PpoUpdateStats:
    """Run the configured number of minibatch gradient steps on both networks.

    Parameters and optimizer states are updated in place; the update is a
    deterministic function of (samples, params, optimizer state, rng state).
    """
    cfg.validate()
    if not samples:
        raise PpoError("empty sample set")
    obs = np.stack([s.obs_vec for s in samples])
    actions = np.array([s.action for s in samples], dtype=int)
    logp_old = np.array([s.logprob_old for s in samples])
    advantages = normalize_advantages(np.array([s.advantage for s in samples]))
    targets = np.array([s.reward_to_go for s in samples])

    n = len(samples)
    batch_size = min(cfg.minibatch_size, n)
    order = rng.permutation(n)
    cursor = 0
    first = last = None
    for _ in range(cfg.grad_steps):
        if cursor + batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        take = order[cursor : cursor + batch_size]
        cursor += batch_size
        report = ppo_losses(
            obs[take], actions[take], logp_old[take], advantages[take], targets[take],
            actor, critic, cfg,
        )
        if first is None:
            first = report
        last = report
        adam_step(actor, report.actor_grads_w, report.actor_grads_b, actor_opt, cfg.actor_lr)
        adam_step(critic, report.critic_grads_w, report.critic_grads_b, critic_opt, cfg.critic_lr)
    return PpoUpdateStats(
        clip_objective_start=first.clip_objective,
        clip_objective_end=last.clip_objective,
        value_loss_start=first.value_loss,
        value_loss_end=last.value_loss,
        entropy=last.entropy,
        approx_kl=last.approx_kl,
        clip_fraction=last.clip_fraction,
    )


class PpoAgent:
    """Actor-critic pair with observation scaling; sampling uses the caller's RNG."""

    def __init__(self, actor: MlpParams, critic: MlpParams, obs_scales: np.ndarray):
        self.actor = actor
        self.critic = critic
        self.obs_scales = np.asarray(obs_scales, dtype=float)
        self.actor_opt = adam_init(actor)
        self.critic_opt = adam_init(critic)

    @classmethod
    def initialize(cls, obs_scales, rng: np.random.Generator) -> "PpoAgent":
        actor = mlp_init(OBS_DIM, ACTION_DIM, rng, final_scale=0.01)
        critic = mlp_init(OBS_DIM, 1, rng)
        return cls(actor, critic, obs_scales)

    def scale(self, obs_vec: np.ndarray) -> np.ndarray:
        return np.asarray(obs_vec, dtype=float) / self.obs_scales

    def act(self, scaled_obs: np.ndarray, rng: np.random.Generator) -> tuple[int, float, float]:
        logits = mlp_forward(self.actor, scaled_obs)
        action, logp = policy_logprob_and_sample(logits, rng)
        value = float(mlp_forward(self.critic, scaled_obs)[0])
        return action, logp, value

    def logp_of(self, scaled_obs: np.ndarray, action: int) -> float:
        logits = mlp_forward(self.actor, scaled_obs)
        return float(log_softmax(logits)[action])

    def value(self, scaled_obs: np.ndarray) -> float:
        return float(mlp_forward(self.critic, scaled_obs)[0])

    def greedy(self, scaled_obs: np.ndarray) -> int:
        return int(np.argmax(mlp_forward(self.actor, scaled_obs)))
