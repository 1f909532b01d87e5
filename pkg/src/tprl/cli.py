"""Command-line entry points: train, test, plan, replay, check-trace.

Each subcommand writes delimited outputs (CSV, JSONL, TSV) plus rendered
figures into the chosen output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .config import (
    CROSS_MAP_DEFAULT,
    OVAL_MAP_DEFAULT,
    ConfigError,
    RunConfig,
    config_hash,
    default_run_config,
    load_run_config,
    normalize_variant,
)
from .geometry import GeometryError, map_from_config
from .planner import HighLevelAction, PlannerConfig, hybrid_astar_plan, lane_change_goal, predict_target
from .tracelog import TraceError, check_trace, replay_metrics, write_trace
from .training import (
    EvaluationError,
    TrainingError,
    evaluate,
    load_agent_checkpoint,
    train,
)
from .world import ScenarioConfig, VehicleState, WorldState, init_scenario


def _preset_map(name: str) -> dict:
    return dict(OVAL_MAP_DEFAULT if name == "oval" else CROSS_MAP_DEFAULT)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else default_run_config()
    if getattr(args, "algo", None):
        cfg = replace(cfg, algo=args.algo)
    if getattr(args, "variant", None):
        cfg = replace(cfg, variant=normalize_variant(args.variant))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "map", None):
        cfg = replace(cfg, map=_preset_map(args.map))
    return cfg.validate()


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    result = train(cfg, out)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"curves:     {result.curves_path}")
    if result.figure_path:
        print(f"figure:     {result.figure_path}")
    print(f"final mean period reward: {result.final_mean_period_reward:.4f}")
    return 0


def _cmd_test(args) -> int:
    agent, meta = load_agent_checkpoint(args.checkpoint)
    cfg = RunConfig.from_dict(meta["config"])
    if args.map:
        cfg = replace(cfg, test_map=_preset_map(args.map))
    if args.laps is not None:
        cfg = replace(cfg, laps_test=args.laps)
    out = args.out
    os.makedirs(out, exist_ok=True)
    track_map = map_from_config(cfg.test_map)
    partial = False
    try:
        metrics, rows = evaluate(agent, cfg, track_map=track_map)
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.partial_metrics is None:
            return 1
        metrics, rows = exc.partial_metrics, []
        partial = True

    trace_path = os.path.join(out, "trace.jsonl")
    metrics_path = os.path.join(out, "metrics.json")
    trace_config = {
        "dt": cfg.dt,
        "config_hash": config_hash(cfg),
        "map": cfg.test_map,
        "algo": cfg.algo,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "run_config": cfg.to_dict(),
    }
    if rows:
        write_trace(trace_path, trace_config, rows)
        print(f"trace:   {trace_path}")
    with open(metrics_path, "w") as f:
        json.dump({"partial": partial, **metrics.to_dict()}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"metrics: {metrics_path}")
    if rows:
        try:
            from .report import plot_trace

            fig_path = plot_trace(track_map, rows, os.path.join(out, "trace.png"))
            print(f"figure:  {fig_path}")
        except Exception as exc:  # figure rendering must not fail a test run
            print(f"figure rendering failed: {exc}", file=sys.stderr)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return 1 if partial else 0


def _cmd_plan(args) -> int:
    with open(args.snapshot) as f:
        snap = json.load(f)
    track_map = map_from_config(snap["map"])
    scenario = ScenarioConfig(**snap.get("scenario", {}))
    world = init_scenario(scenario, track_map)
    if "ego" in snap or "target" in snap:
        world = _world_from_snapshot(snap, track_map, world)
    action = HighLevelAction(args.action)
    cfg = PlannerConfig()
    goal = lane_change_goal(world, track_map, action, cfg)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "trajectory.tsv")
    if goal.stay:
        print("action degrades to stay; no trajectory planned", file=sys.stderr)
        return 1
    traj = hybrid_astar_plan(
        [predict_target(world, track_map)],
        (world.ego.x, world.ego.y, world.ego.theta, world.ego.v),
        (goal.x, goal.y, goal.theta),
        cfg,
        track_map=track_map,
        goal_lane=goal.lane,
    )
    if traj is None:
        print("planning failed: no collision-free trajectory found", file=sys.stderr)
        return 1
    with open(out_path, "w") as f:
        f.write("t\tx\ty\ttheta\tv\n")
        for t, x, y, theta, v in traj.samples:
            f.write(f"{t:.6f}\t{x:.6f}\t{y:.6f}\t{theta:.6f}\t{v:.6f}\n")
    print(f"trajectory: {out_path} ({len(traj.samples)} samples, {traj.duration:.2f} s)")
    try:
        from .report import plot_trajectory

        fig = plot_trajectory(
            track_map, traj.samples, os.path.join(args.out, "trajectory.png"),
            obstacles=[predict_target(world, track_map)],
        )
        print(f"figure:     {fig}")
    except Exception as exc:
        print(f"figure rendering failed: {exc}", file=sys.stderr)
    return 0


def _world_from_snapshot(snap: dict, track_map, world: WorldState) -> WorldState:
    from dataclasses import replace as drep

    from .geometry import frenet_project

    def vehicle(d: dict, template: VehicleState) -> VehicleState:
        return drep(
            template,
            x=d["x"], y=d["y"], theta=d["theta"], v=d["v"], lane=d.get("lane", 0),
        )

    def track(ref_state: VehicleState, old):
        fc = frenet_project(track_map.reference, (ref_state.x, ref_state.y))
        return drep(
            old, s=fc.s, d=fc.d,
            lane=track_map.lane_from_offset(fc.d),
            prev_lane=track_map.lane_from_offset(fc.d),
        )

    if "ego" in snap:
        ego = vehicle(snap["ego"], world.ego)
        world = drep(world, ego=ego, ego_track=track(ego, world.ego_track))
    if "target" in snap:
        target = vehicle(snap["target"], world.target)
        world = drep(world, target=target, target_track=track(target, world.target_track))
    return world


def _cmd_replay(args) -> int:
    metrics = replay_metrics(args.trace)
    out = json.dumps(metrics.to_dict(), indent=2, sort_keys=True)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "metrics.json")
        with open(path, "w") as f:
            f.write(out + "\n")
        print(f"metrics: {path}")
    print(out)
    return 0


def _cmd_check_trace(args) -> int:
    mismatches = check_trace(args.trace)
    if mismatches:
        print(f"{len(mismatches)} mismatching steps", file=sys.stderr)
        for m in mismatches[:10]:
            print(json.dumps(m, sort_keys=True), file=sys.stderr)
        return 1
    print("trace verdicts match the rule engine")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tprl",
        description="Lane-change decision stack: train, test, plan, replay traces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy")
    p_train.add_argument("--config", help="run config JSON (default: built-in full scale)")
    p_train.add_argument("--map", choices=["oval", "cross"], help="training map override")
    p_train.add_argument("--algo", choices=["ppo", "ddqn"])
    p_train.add_argument("--variant", help="noskip, periodskip, or tprl")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--out", default="runs/train", help="output directory")
    p_train.set_defaults(func=_cmd_train)

    p_test = sub.add_parser("test", help="evaluate a checkpoint on the test map")
    p_test.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p_test.add_argument("--map", choices=["oval", "cross"], help="test map override")
    p_test.add_argument("--laps", type=int, help="lap quota override")
    p_test.add_argument("--out", default="runs/test")
    p_test.set_defaults(func=_cmd_test)

    p_plan = sub.add_parser("plan", help="plan one lane-change trajectory offline")
    p_plan.add_argument("--snapshot", required=True, help="scenario snapshot JSON")
    p_plan.add_argument("--action", type=int, required=True, choices=[0, 1, 2])
    p_plan.add_argument("--out", default="runs/plan")
    p_plan.set_defaults(func=_cmd_plan)

    p_replay = sub.add_parser("replay", help="recompute metrics from a trace log")
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--out")
    p_replay.set_defaults(func=_cmd_replay)

    p_check = sub.add_parser("check-trace", help="re-verify rule verdicts in a trace log")
    p_check.add_argument("--trace", required=True)
    p_check.set_defaults(func=_cmd_check_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, GeometryError, TraceError, TrainingError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
