"""Lane-change decision stack: simulator, hybrid A* planner, LTL rule rewards,
and a from-scratch PPO/DDQN core with period-held high-level actions."""

from .config import RunConfig, default_run_config, desk_run_config, load_run_config, smoke_run_config
from .env import Environment, accumulate_period_reward, run_decision_period
from .geometry import (
    FrenetCoord,
    ReferencePath,
    TrackMap,
    build_cross_map,
    build_oval_map,
    build_reference_path,
    frenet_project,
    frenet_to_cartesian,
    lane_boundary_distances,
    map_from_config,
)
from .planner import (
    HighLevelAction,
    PlannerConfig,
    PlannerState,
    Trajectory,
    emergency_check,
    hybrid_astar_plan,
    lane_change_goal,
    planner_step,
    track_trajectory,
)
from .ppo import (
    DecisionSample,
    PpoAgent,
    PpoConfig,
    gae_advantages,
    policy_logprob_and_sample,
    ppo_losses,
    ppo_update,
    rewards_to_go,
)
from .ddqn import DdqnAgent, DdqnConfig, ReplayBuffer, ddqn_update
from .rules import (
    AtomicValuation,
    Rule,
    RuleThresholds,
    RuleVerdict,
    eval_atomics,
    eval_rules,
    trace_compliance,
)
from .training import Metrics, ScriptedPolicy, evaluate, train
from .world import (
    FrenetObservation,
    ScenarioConfig,
    VehicleParams,
    VehicleState,
    WorldState,
    check_collision,
    init_scenario,
    observe,
    step_vehicle,
    world_step,
)

__version__ = "0.1.0"
