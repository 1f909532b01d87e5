"""Double-Q baseline: ring replay buffer, online/target networks, epsilon
schedule, and the double-Q regression update."""

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
from .ppo import ACTION_DIM, OBS_DIM


class DdqnError(ValueError):
    pass


@dataclass(frozen=True)
class DdqnConfig:
    buffer_capacity: int = 100_000
    batch_size: int = 64
    gamma: float = 0.99
    lr: float = 1e-3
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.3  # of total training progress
    target_sync_every: int = 1_000  # decision steps between hard syncs
    updates_per_sample: float = 0.25  # gradient steps per stored transition


class ReplayBuffer:
    """Fixed-capacity ring of (obs, action, reward, next_obs, done)."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def push(self, obs, action, reward, next_obs, done) -> None:
        i = self._head
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = done
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < batch_size:
            raise DdqnError(f"buffer holds {self.size} < batch size {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.dones[idx],
        )


def epsilon_by_progress(progress: float, cfg: DdqnConfig) -> float:
    """Linear decay over the first decay fraction of training progress."""
    progress = min(max(progress, 0.0), 1.0)
    if progress >= cfg.epsilon_decay_fraction:
        return cfg.epsilon_end
    frac = progress / cfg.epsilon_decay_fraction
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def double_q_targets(
    online: MlpParams,
    target: MlpParams,
    rewards: np.ndarray,
    next_obs: np.ndarray,
    dones: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * Q_target(s', argmax_a Q_online(s', a)), r on terminals."""
    q_online_next = mlp_forward(online, next_obs)
    best = np.argmax(q_online_next, axis=1)
    q_target_next = mlp_forward(target, next_obs)
    chosen = q_target_next[np.arange(len(best)), best]
    return rewards + gamma * (1.0 - dones.astype(float)) * chosen


def q_loss_only(online: MlpParams, obs, actions, targets) -> float:
    q = mlp_forward(online, obs)
    taken = q[np.arange(len(actions)), actions]
    return float(np.mean((taken - targets) ** 2))


def ddqn_update(
    buffer: ReplayBuffer,
    online: MlpParams,
    target: MlpParams,
    opt: AdamState,
    cfg: DdqnConfig,
    rng: np.random.Generator,
) -> float:
    """One double-Q gradient step on a sampled minibatch; returns the loss."""
    obs, actions, rewards, next_obs, dones = buffer.sample(cfg.batch_size, rng)
    y = double_q_targets(online, target, rewards, next_obs, dones, cfg.gamma)
    q, acts = mlp_forward_cached(online, obs)
    n = len(actions)
    idx = np.arange(n)
    err = q[idx, actions] - y
    loss = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    dq[idx, actions] = 2.0 * err / n
    gw, gb = mlp_backward(online, acts, dq)
    adam_step(online, gw, gb, opt, cfg.lr)
    return loss


class DdqnAgent:
    """Online/target Q pair with epsilon-greedy behavior."""

    def __init__(self, online: MlpParams, obs_scales: np.ndarray, cfg: DdqnConfig):
        self.online = online
        self.target = online.copy()
        self.obs_scales = np.asarray(obs_scales, dtype=float)
        self.cfg = cfg
        self.opt = adam_init(online)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.decision_steps = 0
        self._update_debt = 0.0

    @classmethod
    def initialize(cls, obs_scales, rng: np.random.Generator, cfg: DdqnConfig | None = None) -> "DdqnAgent":
        online = mlp_init(OBS_DIM, ACTION_DIM, rng)
        return cls(online, obs_scales, cfg or DdqnConfig())

    def scale(self, obs_vec: np.ndarray) -> np.ndarray:
        return np.asarray(obs_vec, dtype=float) / self.obs_scales

    def act(self, scaled_obs: np.ndarray, rng: np.random.Generator, epsilon: float) -> int:
        if rng.random() < epsilon:
            return int(rng.integers(0, ACTION_DIM))
        return self.greedy(scaled_obs)

    def greedy(self, scaled_obs: np.ndarray) -> int:
        return int(np.argmax(mlp_forward(self.online, scaled_obs)))

    def observe_transition(self, obs, action, reward, next_obs, done, rng) -> list[float]:
        """Store a transition and run the proportional number of updates."""
        self.buffer.push(obs, action, reward, next_obs, done)
        self.decision_steps += 1
        losses = []
        if self.buffer.size >= self.cfg.batch_size:
            self._update_debt += self.cfg.updates_per_sample
            while self._update_debt >= 1.0:
                losses.append(ddqn_update(self.buffer, self.online, self.target, self.opt, self.cfg, rng))
                self._update_debt -= 1.0
        if self.decision_steps % self.cfg.target_sync_every == 0:
            self.target = self.online.copy()
        return losses
