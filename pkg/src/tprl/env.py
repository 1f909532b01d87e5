"""In-process environment: composes the map, the two-vehicle world, the
trajectory layer and the rule engine into a step interface for the agents.

Each simulation step routes the (possibly held) high-level action through the
planner, advances the world, evaluates the traffic rules on the resulting
state, and emits the step reward.  Episodes end on collision or when the ego
completes its lap quota.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geometry import TrackMap
from .planner import HighLevelAction, PlannerConfig, PlannerState, planner_step
from .rules import (
    DEFAULT_RULES,
    AtomicValuation,
    RuleThresholds,
    RuleVerdict,
    eval_atomics,
    eval_rules,
)
from .world import (
    DT,
    FrenetObservation,
    ScenarioConfig,
    SimulationError,
    VehicleParams,
    WorldState,
    init_scenario,
    observe,
    world_step,
)


@dataclass
class StepOutcome:
    reward: int
    done: bool
    collided: bool
    events: list
    valuation: AtomicValuation
    verdict: RuleVerdict


@dataclass
class EpisodeCounters:
    steps: int = 0
    reward_sum: int = 0
    clean_steps: int = 0
    rule_violation_steps: dict = field(default_factory=dict)
    emergency_activations: int = 0
    refusals: int = 0
    plans: int = 0
    collisions: int = 0
    laps: int = 0


class Environment:
    """One scenario instance owned by a single rollout loop."""

    def __init__(
        self,
        track_map: TrackMap,
        scenario: ScenarioConfig = ScenarioConfig(),
        planner_cfg: PlannerConfig = PlannerConfig(),
        thresholds: RuleThresholds = RuleThresholds(),
        params: VehicleParams = VehicleParams(),
        dt: float = DT,
        rules=DEFAULT_RULES,
        record_trace: bool = False,
    ):
        self.track_map = track_map
        self.scenario = scenario
        self.planner_cfg = planner_cfg
        self.thresholds = thresholds
        self.params = params
        self.dt = dt
        self.rules = rules
        self.record_trace = record_trace
        self.trace: list[dict] = []
        self.world: WorldState | None = None
        self.pstate = PlannerState()
        self.counters = EpisodeCounters()
        self._done = False

    def reset(self) -> FrenetObservation:
        self.world = init_scenario(self.scenario, self.track_map, self.params, self.dt)
        self.pstate = PlannerState()
        self.counters = EpisodeCounters(
            rule_violation_steps={r.name: 0 for r in self.rules}
        )
        self._done = False
        return observe(self.world, self.track_map)

    @property
    def done(self) -> bool:
        return self._done

    def observe(self) -> FrenetObservation:
        return observe(self.world, self.track_map)

    def sim_step(self, action: HighLevelAction | int | None) -> StepOutcome:
        """Advance one simulation step under the given (or held) action."""
        if self.world is None:
            raise SimulationError("environment must be reset before stepping")
        if self._done:
            raise SimulationError("episode is done; reset the environment")

        control, events, self.pstate = planner_step(
            self.pstate, self.world, self.track_map, action, self.planner_cfg, self.params
        )
        target_control = [self.world.target.v, 0.0]  # rail policy: speed command, no steer
        world = world_step(self.world, self.track_map, control, params=self.params)
        if self.pstate.emergency or self.pstate.crossing_hold:
            world = replace(world, events=world.events | {"emergency_brake_active"})
        self.world = world
        events = list(events) + sorted(world.events)

        valuation = eval_atomics(world, self.track_map, self.thresholds)
        verdict = eval_rules(valuation, self.rules)

        c = self.counters
        c.steps += 1
        c.reward_sum += verdict.step_reward
        if verdict.step_reward == 0:
            c.clean_steps += 1
        for check in verdict.checks:
            if check.violated:
                c.rule_violation_steps[check.name] += 1
        if "emergency" in events:
            c.emergency_activations += 1
        if "refused" in events:
            c.refusals += 1
        if "planned" in events:
            c.plans += 1
        if "lap_completed" in events:
            c.laps += 1

        collided = "collision" in world.events
        if collided:
            c.collisions += 1
        self._done = (
            collided
            or world.ego_track.laps >= self.scenario.laps
            or c.steps >= self.scenario.max_episode_steps
        )

        if self.record_trace:
            obs = observe(world, self.track_map)
            ego_v, tgt_v = world.ego, world.target
            self.trace.append(
                {
                    "type": "step",
                    "step": world.step_index,
                    "t": round(world.sim_time, 9),
                    "ego": [float(ego_v.x), float(ego_v.y), float(ego_v.theta), float(ego_v.v), int(ego_v.lane)],
                    "target": [float(tgt_v.x), float(tgt_v.y), float(tgt_v.theta), float(tgt_v.v), int(tgt_v.lane)],
                    "obs": [float(obs.r_s), float(obs.r_d), float(obs.d_l), float(obs.d_r), float(obs.v)],
                    "control": [float(control[0]), float(control[1])],
                    "target_control": [float(target_control[0]), float(target_control[1])],
                    "action": None if action is None else int(action),
                    "events": events,
                    "atoms": valuation.as_dict(),
                    "rules": verdict.as_dict(),
                    "reward": int(verdict.step_reward),
                }
            )

        return StepOutcome(
            reward=verdict.step_reward,
            done=self._done,
            collided=collided,
            events=events,
            valuation=valuation,
            verdict=verdict,
        )


def accumulate_period_reward(step_rewards, gamma: float) -> float:
    """Discounted in-period sum: sum over n of gamma^n * r_n."""
    total = 0.0
    factor = 1.0
    for r in step_rewards:
        total += factor * r
        factor *= gamma
    return total


@dataclass
class PeriodResult:
    accumulated_reward: float
    step_rewards: list
    steps: int
    done: bool


def run_decision_period(
    env: Environment, action: HighLevelAction | int, n_steps: int, gamma: float
) -> PeriodResult:
    """Hold one high-level action for up to N steps, accumulating the
    discounted per-step rewards; episode termination truncates the period."""
    if env.done:
        raise SimulationError("cannot run a decision period on a finished episode")
    step_rewards = []
    total = 0.0
    factor = 1.0
    done = False
    for k in range(n_steps):
        outcome = env.sim_step(action if k == 0 else None)
        step_rewards.append(outcome.reward)
        total += factor * outcome.reward
        factor *= gamma
        if outcome.done:
            done = True
            break
    return PeriodResult(
        accumulated_reward=total, step_rewards=step_rewards, steps=len(step_rewards), done=done
    )
