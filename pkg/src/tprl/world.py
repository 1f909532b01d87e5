"""Two-vehicle kinematic simulation: scenario setup, stepping, observations,
and collision detection.

The ego vehicle integrates a kinematic bicycle model.  The target vehicle is
path-constrained: it advances along its lane centerline at its commanded
speed, which keeps it exactly lane-centered on both maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    FrenetCoord,
    TrackMap,
    frenet_to_cartesian,
    lane_boundary_distances,
    project_local,
    wrap_signed,
)

DT = 0.02  # s, simulation step


class SimulationError(RuntimeError):
    """Stepping a halted world or other invalid simulation use."""


class ScenarioError(ValueError):
    """Invalid scenario setup, e.g. overlapping spawn poses."""


@dataclass(frozen=True)
class VehicleParams:
    length: float = 0.4  # m
    width: float = 0.2  # m
    wheelbase: float = 0.36  # m
    v_max: float = 1.0  # m/s
    steer_max: float = math.radians(30.0)
    accel_max: float = 1.0  # m/s^2, tracking bound
    brake_max: float = 3.0  # m/s^2, emergency bound


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    theta: float
    v: float
    lane: int
    length: float = 0.4
    width: float = 0.2

    def footprint(self) -> np.ndarray:
        """Corners of the oriented bounding rectangle, (4, 2)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = self.length / 2.0, self.width / 2.0
        return np.array(
            [
                [self.x + c * hl - s * hw, self.y + s * hl + c * hw],
                [self.x + c * hl + s * hw, self.y + s * hl - c * hw],
                [self.x - c * hl + s * hw, self.y - s * hl - c * hw],
                [self.x - c * hl - s * hw, self.y - s * hl + c * hw],
            ]
        )


@dataclass(frozen=True)
class FrenetObservation:
    """The 5-tuple fed to the agent: relative gaps, lane margins, own speed."""

    r_s: float  # m, longitudinal target-minus-ego gap along the path, wrapped
    r_d: float  # m, lateral target-minus-ego offset
    d_l: float  # m, distance to the current lane's left boundary
    d_r: float  # m, distance to the current lane's right boundary
    v: float  # m/s, ego speed

    def as_vector(self) -> np.ndarray:
        return np.array([self.r_s, self.r_d, self.d_l, self.d_r, self.v])


@dataclass(frozen=True)
class FrenetTrack:
    """Per-vehicle bookkeeping in the map's shared reference frame."""

    s: float
    d: float
    lane: int
    prev_lane: int
    cum_s: float  # unwrapped progress since spawn
    laps: int


@dataclass(frozen=True)
class WorldState:
    ego: VehicleState
    target: VehicleState
    ego_track: FrenetTrack
    target_track: FrenetTrack
    step_index: int
    dt: float = DT
    ego_active: bool = True
    ego_spawn_step: int = 0
    events: frozenset = frozenset()
    halted: bool = False

    @property
    def sim_time(self) -> float:
        return self.step_index * self.dt


def step_vehicle(
    state: VehicleState,
    control: tuple[float, float],
    dt: float,
    params: VehicleParams = VehicleParams(),
) -> VehicleState:
    """Kinematic bicycle update with saturated steering and clamped speed.

    Acceleration limits are owned by the controllers; the speed clamp to
    [0, v_max] is what keeps the physics sane here.
    """
    if dt <= 0:
        raise SimulationError("dt must be positive")
    accel = control[0]
    steer = min(max(control[1], -params.steer_max), params.steer_max)
    x = state.x + state.v * math.cos(state.theta) * dt
    y = state.y + state.v * math.sin(state.theta) * dt
    theta = state.theta + state.v * math.tan(steer) / params.wheelbase * dt
    v = min(max(state.v + accel * dt, 0.0), params.v_max)
    return replace(state, x=x, y=y, theta=theta, v=v)


def _interval(corners: np.ndarray, ax: float, ay: float) -> tuple[float, float]:
    dots = corners[:, 0] * ax + corners[:, 1] * ay
    return float(dots.min()), float(dots.max())


def rectangles_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two oriented rectangles; strict overlap only,
    exact contact counts as separated."""
    for corners in (a, b):
        for i in range(2):
            ex = corners[(i + 1) % 4, 0] - corners[i, 0]
            ey = corners[(i + 1) % 4, 1] - corners[i, 1]
            ax, ay = -ey, ex
            amin, amax = _interval(a, ax, ay)
            bmin, bmax = _interval(b, ax, ay)
            if amax <= bmin or bmax <= amin:
                return False
    return True


def check_collision(world: WorldState) -> bool:
    if not world.ego_active:
        return False
    return rectangles_overlap(world.ego.footprint(), world.target.footprint())


@dataclass(frozen=True)
class ScenarioConfig:
    target_speed: float = 0.278  # m/s (1 km/h)
    ego_speed: float = 0.556  # m/s (2 km/h)
    spawn_delay: float = 8.0  # s between target and ego spawn
    target_start_s: float = 0.6  # m ahead of the ego spawn point
    ego_start_s: float = 0.0
    laps: int = 5  # ego laps per episode
    max_episode_steps: int = 200_000


def _rail_state(
    track_map: TrackMap, s: float, lane: int, speed: float, params: VehicleParams
) -> VehicleState:
    x, y, heading = frenet_to_cartesian(
        track_map.reference, FrenetCoord(track_map.reference.wrap_s(s), track_map.lane_offset(lane))
    )
    return VehicleState(
        x=x, y=y, theta=heading, v=speed, lane=lane, length=params.length, width=params.width
    )


def _track_for(track_map: TrackMap, s: float, d: float) -> FrenetTrack:
    lane = track_map.lane_from_offset(d)
    return FrenetTrack(s=s, d=d, lane=lane, prev_lane=lane, cum_s=0.0, laps=0)


def init_scenario(
    cfg: ScenarioConfig,
    track_map: TrackMap,
    params: VehicleParams = VehicleParams(),
    dt: float = DT,
) -> WorldState:
    """Spawn the target, run the spawn delay target-only, then spawn the ego.

    The returned state sits at the ego spawn instant (sim_time equals the
    delay).  Raises ScenarioError when the spawn footprints overlap.
    """
    right = track_map.rightmost_lane_index
    target = _rail_state(track_map, cfg.target_start_s, right, cfg.target_speed, params)
    ego = _rail_state(track_map, cfg.ego_start_s, right, cfg.ego_speed, params)
    world = WorldState(
        ego=ego,
        target=target,
        ego_track=_track_for(track_map, cfg.ego_start_s, 0.0),
        target_track=_track_for(track_map, cfg.target_start_s, 0.0),
        step_index=0,
        dt=dt,
        ego_active=False,
    )
    n_delay = int(round(cfg.spawn_delay / dt))
    for _ in range(n_delay):
        world = world_step(world, track_map, (0.0, 0.0), params=params)
    world = replace(world, ego_active=True, ego_spawn_step=world.step_index, events=frozenset())
    if check_collision(world):
        raise ScenarioError("spawn poses overlap")
    return world


def _advance_target(
    world: WorldState, track_map: TrackMap, params: VehicleParams, speed: float | None
) -> tuple[VehicleState, FrenetTrack]:
    v = world.target.v if speed is None else speed
    tr = world.target_track
    ds = v * world.dt
    s_new = track_map.reference.wrap_s(tr.s + ds)
    state = _rail_state(track_map, s_new, tr.lane, v, params)
    laps = int((tr.cum_s + ds) // track_map.total_length)
    new_track = replace(tr, s=s_new, cum_s=tr.cum_s + ds, prev_lane=tr.lane, laps=laps)
    return state, new_track


def _advance_ego_track(
    world: WorldState, track_map: TrackMap, ego_new: VehicleState
) -> tuple[FrenetTrack, VehicleState]:
    tr = world.ego_track
    # The per-step hint is accurate to one step of motion, so the cheap
    # Newton-only projection is safe here.
    s_new, d_new = project_local(track_map.reference, ego_new.x, ego_new.y, tr.s)
    ds = wrap_signed(s_new - tr.s, track_map.total_length)
    cum = tr.cum_s + ds
    lane = track_map.lane_from_offset(d_new)
    laps = int(cum // track_map.total_length) if cum >= 0 else 0
    new_track = FrenetTrack(
        s=s_new, d=d_new, lane=lane, prev_lane=tr.lane, cum_s=cum, laps=max(laps, tr.laps)
    )
    return new_track, replace(ego_new, lane=lane)


def world_step(
    world: WorldState,
    track_map: TrackMap,
    ego_control: tuple[float, float],
    target_speed: float | None = None,
    params: VehicleParams = VehicleParams(),
) -> WorldState:
    """Advance both vehicles by one step; pure function of the inputs."""
    if world.halted:
        raise SimulationError("cannot step a halted world (collision)")
    events = set()
    target, target_track = _advance_target(world, track_map, params, target_speed)
    ego = world.ego
    ego_track = world.ego_track
    if world.ego_active:
        ego = step_vehicle(world.ego, ego_control, world.dt, params)
        ego_track, ego = _advance_ego_track(world, track_map, ego)
        if ego_track.laps > world.ego_track.laps:
            events.add("lap_completed")

    new_world = replace(
        world,
        ego=ego,
        target=target,
        ego_track=ego_track,
        target_track=target_track,
        step_index=world.step_index + 1,
        events=frozenset(events),
    )
    if check_collision(new_world):
        new_world = replace(
            new_world, events=new_world.events | {"collision"}, halted=True
        )
    return new_world


def observe(world: WorldState, track_map: TrackMap) -> FrenetObservation:
    """Extract the agent's 5-tuple from the world state."""
    if not world.ego_active:
        raise SimulationError("cannot observe before the ego spawns")
    total = track_map.total_length
    r_s = wrap_signed(world.target_track.s - world.ego_track.s, total)
    r_d = world.target_track.d - world.ego_track.d
    lane = world.ego_track.lane
    d_in_lane = track_map.in_lane_offset(world.ego_track.d, lane)
    d_l, d_r = lane_boundary_distances(track_map, FrenetCoord(world.ego_track.s, d_in_lane), lane)
    return FrenetObservation(r_s=r_s, r_d=r_d, d_l=d_l, d_r=d_r, v=world.ego.v)
