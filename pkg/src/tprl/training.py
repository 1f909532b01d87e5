"""Training and evaluation drivers: rollout collection under the three
action-sampling variants, the epoch loop for PPO and the double-Q baseline,
and the greedy test protocol with its three metrics."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash
from .ddqn import DdqnAgent, DdqnConfig, epsilon_by_progress
from .env import Environment, run_decision_period
from .geometry import map_from_config
from .ppo import DecisionSample, PpoAgent, gae_advantages, ppo_update, rewards_to_go


class TrainingError(RuntimeError):
    pass


class EvaluationError(RuntimeError):
    """Raised when a test run exceeds its step cap; carries partial metrics."""

    def __init__(self, message: str, partial_metrics=None):
        super().__init__(message)
        self.partial_metrics = partial_metrics


@dataclass
class RolloutStats:
    sim_steps: int = 0
    decision_samples: int = 0
    period_rewards: list = field(default_factory=list)
    step_reward_sum: float = 0.0
    rule_violation_steps: dict = field(default_factory=dict)
    emergency_activations: int = 0
    refusals: int = 0
    plans: int = 0
    episodes: int = 0
    collisions: int = 0
    laps: int = 0

    def absorb_counters(self, counters) -> None:
        for name, count in counters.rule_violation_steps.items():
            self.rule_violation_steps[name] = self.rule_violation_steps.get(name, 0) + count
        self.emergency_activations += counters.emergency_activations
        self.refusals += counters.refusals
        self.plans += counters.plans
        self.collisions += counters.collisions
        self.laps += counters.laps


def _obs_scale_vector(obs_scales: dict) -> np.ndarray:
    return np.array([obs_scales[k] for k in ("r_s", "r_d", "d_l", "d_r", "v")], dtype=float)


def _finish_segment_ppo(segment: list[DecisionSample], bootstrap: float, gamma: float, lam: float) -> None:
    rewards = np.array([s.reward for s in segment])
    values = np.array([s.value_est for s in segment])
    adv = gae_advantages(rewards, values, bootstrap, gamma, lam)
    rtg = rewards_to_go(rewards, gamma, bootstrap_value=bootstrap)
    for s, a, r in zip(segment, adv, rtg):
        s.advantage = float(a)
        s.reward_to_go = float(r)


def collect_rollout_ppo(
    env: Environment,
    agent: PpoAgent,
    variant: str,
    steps_budget: int,
    period: int,
    cfg,
    rng: np.random.Generator,
) -> tuple[list[DecisionSample], RolloutStats]:
    """Collect one epoch of decision samples under the given variant.

    tprl stores one sample per period with the discounted in-period reward;
    periodskip stores every per-step pair under the held action; noskip emits
    a fresh action every step (the planner refuses mid-trajectory ones).
    """
    if steps_budget <= 0:
        raise TrainingError("steps budget must be positive")
    if variant in ("tprl", "periodskip") and steps_budget < period:
        raise TrainingError("steps budget smaller than one decision period")
    stats = RolloutStats()
    samples: list[DecisionSample] = []
    segment: list[DecisionSample] = []

    if env.world is None or env.done:
        env.reset()

    def close_segment(terminal: bool) -> None:
        if not segment:
            return
        bootstrap = 0.0 if terminal else agent.value(agent.scale(env.observe().as_vector()))
        _finish_segment_ppo(segment, bootstrap, cfg.gamma, cfg.gae_lambda)
        samples.extend(segment)
        segment.clear()

    def handle_episode_end() -> None:
        close_segment(terminal=True)
        stats.absorb_counters(env.counters)
        stats.episodes += 1
        env.reset()

    if variant == "tprl":
        while stats.sim_steps + period <= steps_budget:
            obs = env.observe()
            scaled = agent.scale(obs.as_vector())
            action, logp, value = agent.act(scaled, rng)
            result = run_decision_period(env, action, period, cfg.gamma)
            stats.sim_steps += result.steps
            stats.period_rewards.append(result.accumulated_reward)
            stats.step_reward_sum += sum(result.step_rewards)
            segment.append(
                DecisionSample(
                    obs_vec=scaled,
                    action=action,
                    logprob_old=logp,
                    reward=result.accumulated_reward,
                    value_est=value,
                    obs=obs,
                )
            )
            if result.done:
                handle_episode_end()
        close_segment(terminal=False)
    elif variant == "periodskip":
        while stats.sim_steps + period <= steps_budget:
            obs0 = env.observe()
            scaled0 = agent.scale(obs0.as_vector())
            action, _, _ = agent.act(scaled0, rng)
            period_step_rewards = []
            done = False
            for k in range(period):
                obs = env.observe()
                scaled = agent.scale(obs.as_vector())
                logp = agent.logp_of(scaled, action)
                value = agent.value(scaled)
                outcome = env.sim_step(action if k == 0 else None)
                stats.sim_steps += 1
                period_step_rewards.append(outcome.reward)
                segment.append(
                    DecisionSample(
                        obs_vec=scaled,
                        action=action,
                        logprob_old=logp,
                        reward=float(outcome.reward),
                        value_est=value,
                        obs=obs,
                    )
                )
                if outcome.done:
                    done = True
                    break
            stats.period_rewards.append(
                _discounted_sum(period_step_rewards, cfg.gamma)
            )
            stats.step_reward_sum += sum(period_step_rewards)
            if done:
                handle_episode_end()
        close_segment(terminal=False)
    elif variant == "noskip":
        period_step_rewards = []
        while stats.sim_steps < steps_budget:
            obs = env.observe()
            scaled = agent.scale(obs.as_vector())
            action, logp, value = agent.act(scaled, rng)
            outcome = env.sim_step(action)
            stats.sim_steps += 1
            period_step_rewards.append(outcome.reward)
            if len(period_step_rewards) == period:
                stats.period_rewards.append(_discounted_sum(period_step_rewards, cfg.gamma))
                period_step_rewards = []
            stats.step_reward_sum += outcome.reward
            segment.append(
                DecisionSample(
                    obs_vec=scaled,
                    action=action,
                    logprob_old=logp,
                    reward=float(outcome.reward),
                    value_est=value,
                    obs=obs,
                )
            )
            if outcome.done:
                period_step_rewards = []
                handle_episode_end()
        close_segment(terminal=False)
    else:
        raise TrainingError(f"unknown variant {variant!r}")

    if env.world is not None and not env.done:
        # fold the still-running episode's counters into this epoch's stats
        stats.absorb_counters(env.counters)
        _reset_counter_snapshot(env)
    stats.decision_samples = len(samples)
    return samples, stats


def _reset_counter_snapshot(env: Environment) -> None:
    c = env.counters
    c.rule_violation_steps = {k: 0 for k in c.rule_violation_steps}
    c.emergency_activations = 0
    c.refusals = 0
    c.plans = 0
    c.collisions = 0
    c.laps = 0


def _discounted_sum(rewards, gamma: float) -> float:
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += factor * r
        factor *= gamma
    return total


def collect_rollout_ddqn(
    env: Environment,
    agent: DdqnAgent,
    variant: str,
    steps_budget: int,
    period: int,
    gamma: float,
    rng: np.random.Generator,
    epsilon: float,
) -> tuple[list[float], RolloutStats]:
    """Collect transitions at the variant's decision granularity, training the
    online network as transitions arrive.  Returns the update losses."""
    stats = RolloutStats()
    losses: list[float] = []
    if env.world is None or env.done:
        env.reset()

    def end_episode() -> None:
        stats.absorb_counters(env.counters)
        stats.episodes += 1
        env.reset()

    if variant == "tprl":
        while stats.sim_steps + period <= steps_budget:
            obs_vec = agent.scale(env.observe().as_vector())
            action = agent.act(obs_vec, rng, epsilon)
            result = run_decision_period(env, action, period, gamma)
            stats.sim_steps += result.steps
            stats.period_rewards.append(result.accumulated_reward)
            stats.step_reward_sum += sum(result.step_rewards)
            stats.decision_samples += 1
            done = result.done
            next_vec = agent.scale(env.observe().as_vector()) if not done else np.zeros_like(obs_vec)
            losses.extend(
                agent.observe_transition(obs_vec, action, result.accumulated_reward, next_vec, done, rng)
            )
            if done:
                end_episode()
    else:
        hold_action = None
        hold_left = 0
        period_step_rewards = []
        while stats.sim_steps < steps_budget:
            obs_vec = agent.scale(env.observe().as_vector())
            fresh = variant == "noskip" or hold_left == 0
            if fresh:
                action = agent.act(obs_vec, rng, epsilon)
                if variant == "periodskip":
                    hold_action = action
                    hold_left = period
            else:
                action = hold_action
            pass_action = action if (variant == "noskip" or hold_left == period) else None
            outcome = env.sim_step(pass_action)
            if variant == "periodskip":
                hold_left -= 1
            stats.sim_steps += 1
            stats.decision_samples += 1
            period_step_rewards.append(outcome.reward)
            if len(period_step_rewards) == period or outcome.done:
                stats.period_rewards.append(_discounted_sum(period_step_rewards, gamma))
                period_step_rewards = []
            stats.step_reward_sum += outcome.reward
            done = outcome.done
            next_vec = agent.scale(env.observe().as_vector()) if not done else np.zeros_like(obs_vec)
            losses.extend(
                agent.observe_transition(obs_vec, action, float(outcome.reward), next_vec, done, rng)
            )
            if done:
                hold_left = 0
                end_episode()

    if env.world is not None and not env.done:
        stats.absorb_counters(env.counters)
        _reset_counter_snapshot(env)
    return losses, stats


CURVE_COLUMNS = (
    "epoch",
    "decision_samples",
    "sim_steps",
    "mean_period_reward",
    "mean_step_reward",
    "r1_step_reward_mean",
    "r2_step_reward_mean",
    "laps",
    "emergency_activations",
    "refusals",
    "policy_metric",
    "value_loss",
    "entropy",
)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


@dataclass
class TrainResult:
    checkpoint_path: str
    curves_path: str
    figure_path: str | None
    final_mean_period_reward: float


def _make_environment(cfg: RunConfig, track_map, record_trace: bool = False) -> Environment:
    return Environment(
        track_map,
        scenario=cfg.scenario,
        planner_cfg=cfg.planner,
        thresholds=cfg.thresholds,
        dt=cfg.dt,
        record_trace=record_trace,
    )


def _agent_arrays(agent) -> dict:
    arrays = {}
    if isinstance(agent, PpoAgent):
        nets = {"actor": (agent.actor, agent.actor_opt), "critic": (agent.critic, agent.critic_opt)}
    else:
        nets = {"online": (agent.online, agent.opt), "target": (agent.target, None)}
    for name, (params, opt) in nets.items():
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{name}/w{i}"] = w
            arrays[f"{name}/b{i}"] = b
        if opt is not None:
            for i in range(len(params.weights)):
                arrays[f"{name}/adam_mw{i}"] = opt.m_w[i]
                arrays[f"{name}/adam_vw{i}"] = opt.v_w[i]
                arrays[f"{name}/adam_mb{i}"] = opt.m_b[i]
                arrays[f"{name}/adam_vb{i}"] = opt.v_b[i]
    return arrays


def _restore_agent(meta: dict, arrays: dict):
    from .nets import MlpParams, adam_init

    obs_scales = _obs_scale_vector(meta["config"]["obs_scales"])

    def load_net(name: str) -> MlpParams:
        weights, biases = [], []
        i = 0
        while f"{name}/w{i}" in arrays:
            weights.append(arrays[f"{name}/w{i}"])
            biases.append(arrays[f"{name}/b{i}"])
            i += 1
        return MlpParams(weights, biases)

    def load_opt(name: str, params: MlpParams):
        opt = adam_init(params)
        if f"{name}/adam_mw0" in arrays:
            for i in range(len(params.weights)):
                opt.m_w[i] = arrays[f"{name}/adam_mw{i}"]
                opt.v_w[i] = arrays[f"{name}/adam_vw{i}"]
                opt.m_b[i] = arrays[f"{name}/adam_mb{i}"]
                opt.v_b[i] = arrays[f"{name}/adam_vb{i}"]
            opt.t = int(meta.get("adam_t", {}).get(name, 0))
        return opt

    if meta["algo"] == "ppo":
        agent = PpoAgent(load_net("actor"), load_net("critic"), obs_scales)
        agent.actor_opt = load_opt("actor", agent.actor)
        agent.critic_opt = load_opt("critic", agent.critic)
    else:
        cfg = DdqnConfig(**meta["config"]["ddqn"])
        agent = DdqnAgent(load_net("online"), obs_scales, cfg)
        agent.target = load_net("target")
        agent.opt = load_opt("online", agent.online)
    return agent


def save_agent_checkpoint(path: str, agent, cfg: RunConfig, rng_states: dict, epoch: int) -> None:
    meta = {
        "algo": cfg.algo,
        "variant": cfg.variant,
        "epoch": epoch,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "architecture": "in(5)-64tanh-32tanh-out",
        "rng_states": rng_states,
        "adam_t": (
            {"actor": agent.actor_opt.t, "critic": agent.critic_opt.t}
            if isinstance(agent, PpoAgent)
            else {"online": agent.opt.t}
        ),
    }
    save_checkpoint(path, meta, _agent_arrays(agent))


def load_agent_checkpoint(path: str):
    meta, arrays = load_checkpoint(path)
    return _restore_agent(meta, arrays), meta


def train(cfg: RunConfig, out_dir: str) -> TrainResult:
    """Run the full training loop and write curves, figures and checkpoints."""
    cfg = cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    track_map = map_from_config(cfg.map)
    env = _make_environment(cfg, track_map)

    seed_seq = np.random.SeedSequence(cfg.seed)
    init_rng, rollout_rng, update_rng = (np.random.default_rng(s) for s in seed_seq.spawn(3))
    obs_scales = _obs_scale_vector(cfg.obs_scales)
    if cfg.algo == "ppo":
        agent = PpoAgent.initialize(obs_scales, init_rng)
    else:
        agent = DdqnAgent.initialize(obs_scales, init_rng, cfg.ddqn)

    rows = []
    curves_path = os.path.join(out_dir, "curves.csv")
    checkpoint_path = os.path.join(out_dir, "checkpoint.tprl")

    for epoch in range(cfg.epochs):
        if cfg.algo == "ppo":
            samples, stats = collect_rollout_ppo(
                env, agent, cfg.variant, cfg.steps_per_epoch, cfg.period, cfg.ppo, rollout_rng
            )
            if not samples:
                raise TrainingError("rollout produced no samples")
            update = ppo_update(
                samples, agent.actor, agent.critic, agent.actor_opt, agent.critic_opt,
                cfg.ppo, update_rng,
            )
            policy_metric = update.clip_objective_end
            value_loss = update.value_loss_end
            entropy = update.entropy
            if not (math.isfinite(policy_metric) and math.isfinite(value_loss)):
                raise TrainingError(f"non-finite losses at epoch {epoch}")
        else:
            epsilon = epsilon_by_progress(epoch / max(cfg.epochs - 1, 1), cfg.ddqn)
            losses, stats = collect_rollout_ddqn(
                env, agent, cfg.variant, cfg.steps_per_epoch, cfg.period, cfg.ddqn.gamma,
                rollout_rng, epsilon,
            )
            policy_metric = epsilon
            value_loss = float(np.mean(losses)) if losses else 0.0
            entropy = 0.0

        mean_period = float(np.mean(stats.period_rewards)) if stats.period_rewards else 0.0
        mean_step = stats.step_reward_sum / max(stats.sim_steps, 1)
        r1 = -stats.rule_violation_steps.get("R1", 0) / max(stats.sim_steps, 1)
        r2 = -stats.rule_violation_steps.get("R2", 0) / max(stats.sim_steps, 1)
        rows.append(
            (
                epoch,
                stats.decision_samples,
                stats.sim_steps,
                mean_period,
                mean_step,
                r1,
                r2,
                stats.laps,
                stats.emergency_activations,
                stats.refusals,
                policy_metric,
                value_loss,
                entropy,
            )
        )
        if (epoch + 1) % cfg.checkpoint_every == 0 or epoch == cfg.epochs - 1:
            rng_states = {
                "rollout": rollout_rng.bit_generator.state,
                "update": update_rng.bit_generator.state,
            }
            save_agent_checkpoint(checkpoint_path, agent, cfg, rng_states, epoch)

    header = "# config " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n"
    with open(curves_path, "w") as f:
        f.write(header)
        f.write(",".join(CURVE_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")

    figure_path = None
    try:
        from .report import plot_training_curves

        figure_path = os.path.join(out_dir, "curves.png")
        plot_training_curves(curves_path, figure_path)
    except Exception:
        figure_path = None

    return TrainResult(
        checkpoint_path=checkpoint_path,
        curves_path=curves_path,
        figure_path=figure_path,
        final_mean_period_reward=rows[-1][3],
    )


@dataclass
class Metrics:
    rule_compliance: dict
    overall_compliance: float
    emergency_brake_count: int
    time_cost: float
    laps: int
    sim_steps: int
    collided: bool
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "rule_compliance": self.rule_compliance,
            "overall_compliance": self.overall_compliance,
            "emergency_brake_count": self.emergency_brake_count,
            "time_cost": self.time_cost,
            "laps": self.laps,
            "sim_steps": self.sim_steps,
            "collided": self.collided,
            "config_hash": self.config_hash,
        }


def metrics_from_rows(rows: list[dict], dt: float, cfg_hash: str = "") -> Metrics:
    """Metrics are a pure function of the recorded step rows."""
    if not rows:
        raise EvaluationError("empty trace")
    steps = len(rows)
    rule_names = sorted(rows[0]["rules"].keys())
    ok = {name: 0 for name in rule_names}
    all_ok = 0
    emergencies = 0
    laps = 0
    collided = False
    for row in rows:
        clean = True
        for name in rule_names:
            violated = bool(row["rules"][name][1])
            if not violated:
                ok[name] += 1
            else:
                clean = False
        if clean:
            all_ok += 1
        if "emergency" in row["events"]:
            emergencies += 1
        if "lap_completed" in row["events"]:
            laps += 1
        if "collision" in row["events"]:
            collided = True
    return Metrics(
        rule_compliance={name: ok[name] / steps for name in rule_names},
        overall_compliance=all_ok / steps,
        emergency_brake_count=emergencies,
        time_cost=steps * dt,
        laps=laps,
        sim_steps=steps,
        collided=collided,
        config_hash=cfg_hash,
    )


def evaluate(
    agent,
    cfg: RunConfig,
    track_map=None,
    laps: int | None = None,
    step_cap: int = 150_000,
    record_trace: bool = True,
) -> tuple[Metrics, list[dict]]:
    """Greedy test protocol: drive the lap quota on the test map.

    Actions are argmax; the variant keeps its sampling cadence.  Exceeding the
    step cap raises EvaluationError carrying partial metrics.
    """
    cfg = cfg.validate()
    if track_map is None:
        track_map = map_from_config(cfg.test_map)
    laps = cfg.laps_test if laps is None else laps
    scenario = replace(cfg.scenario, laps=laps, max_episode_steps=step_cap)
    env = Environment(
        track_map,
        scenario=scenario,
        planner_cfg=cfg.planner,
        thresholds=cfg.thresholds,
        dt=cfg.dt,
        record_trace=record_trace,
    )
    env.reset()
    per_step = cfg.variant == "noskip"
    while not env.done:
        obs_vec = agent.scale(env.observe().as_vector())
        action = agent.greedy(obs_vec)
        if per_step:
            env.sim_step(action)
        else:
            for k in range(cfg.period):
                env.sim_step(action if k == 0 else None)
                if env.done:
                    break
    rows = env.trace if record_trace else []
    cfg_hash = config_hash(cfg)
    if record_trace:
        metrics = metrics_from_rows(rows, cfg.dt, cfg_hash)
    else:
        c = env.counters
        metrics = Metrics(
            rule_compliance={
                name: 1.0 - v / max(c.steps, 1) for name, v in c.rule_violation_steps.items()
            },
            overall_compliance=c.clean_steps / max(c.steps, 1),
            emergency_brake_count=c.emergency_activations,
            time_cost=c.steps * cfg.dt,
            laps=c.laps,
            sim_steps=c.steps,
            collided=c.collisions > 0,
            config_hash=cfg_hash,
        )
    if metrics.laps < laps:
        raise EvaluationError(
            f"test ended after {metrics.sim_steps} steps with {metrics.laps}/{laps} laps",
            partial_metrics=metrics,
        )
    return metrics, rows


class ScriptedPolicy:
    """Fixed-action policy for tests and baselines."""

    def __init__(self, action: int, obs_scales=None):
        self.action = int(action)
        self.obs_scales = np.ones(5) if obs_scales is None else _obs_scale_vector(obs_scales)

    def scale(self, obs_vec):
        return np.asarray(obs_vec, dtype=float) / self.obs_scales

    def act(self, scaled_obs, rng):
        return self.action, 0.0, 0.0

    def logp_of(self, scaled_obs, action):
        return 0.0

    def value(self, scaled_obs):
        return 0.0

    def greedy(self, scaled_obs):
        return self.action
