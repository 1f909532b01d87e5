"""Low-level trajectory layer: hybrid A* lane-change planning, pure-pursuit
tracking with proportional speed control, the emergency-stop supervisor, and
the per-step orchestration that turns a high-level action into controls.

High-level actions arriving while a planned trajectory is still executing are
refused; boundary actions (changing off the map) degrade to "stay".  When no
trajectory is active the ego follows its current lane, matching the target's
speed when close behind it.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import (
    FrenetCoord,
    TrackMap,
    frenet_project,
    frenet_to_cartesian,
    project_local,
    wrap_angle,
    wrap_signed,
    wrap_unsigned,
)
from .world import VehicleParams, VehicleState, WorldState


class HighLevelAction(IntEnum):
    STAY = 0
    CHANGE_LEFT = 1
    CHANGE_RIGHT = 2


@dataclass(frozen=True)
class PlannerConfig:
    # hybrid A* discretization
    grid_xy: float = 0.05  # m
    grid_theta: float = math.radians(10.0)
    primitive_arc: float = 0.15  # m per expansion
    substep_arc: float = 0.05  # m per collision-check sample
    steer_change_weight: float = 0.1  # of arc length, per full-range steer step
    node_budget: int = 2_500  # expansions before giving up
    replan_cooldown_steps: int = 25  # steps to wait after a failed plan
    goal_pos_tol: float = 0.045  # m, below the substep spacing on purpose
    goal_heading_tol: float = math.radians(15.0)
    # safety margins
    r_safe: float = 0.10  # m, required clearance to predicted obstacles
    search_margin: float = 0.08  # m, extra clearance during search
    corridor_margin: float = 0.05  # m beyond the outer lane boundaries
    # speeds
    cruise_speed: float = 0.556  # m/s
    follow_speed: float = 0.278  # m/s
    plan_accel: float = 0.5  # m/s^2 ramp in the speed profile
    min_profile_speed: float = 0.1  # m/s floor for time parameterization
    # goal selection
    goal_lookahead: float = 1.5  # m along the path
    # tracking
    lookahead_dist: float = 0.25  # m, pure pursuit
    speed_gain: float = 2.0  # 1/s
    # emergency supervisor
    d_emergency: float = 0.25  # m bumper gap
    emergency_hysteresis: float = 0.05  # m
    # crossing guard (self-intersecting maps)
    crossing_approach: float = 0.5  # m before a conflict zone entrance
    crossing_margin_lead: float = 1.2  # m of target lead occupancy
    crossing_margin_tail: float = 0.3  # m of target tail occupancy
    # follow-mode hysteresis
    follow_gap: float = 0.7  # m, engage following below this bumper gap
    follow_release_gap: float = 0.8  # m


@dataclass
class Trajectory:
    """Time-stamped pose/speed samples; columns are (t, x, y, theta, v)."""

    samples: np.ndarray
    goal_lane: int
    creation_step: int

    @property
    def duration(self) -> float:
        return float(self.samples[-1, 0])

    def length(self) -> float:
        d = np.diff(self.samples[:, 1:3], axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


@dataclass(frozen=True)
class PlannerState:
    active_trajectory: Trajectory | None = None
    tracker_index: int = 0
    emergency: bool = False
    crossing_hold: bool = False
    follow_engaged: bool = False
    replan_blocked_until: int = 0  # step index gating retries after failures


def _corners(x: float, y: float, theta: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    hl, hw = length / 2.0, width / 2.0
    return np.array(
        [
            [x + c * hl - s * hw, y + s * hl + c * hw],
            [x + c * hl + s * hw, y + s * hl - c * hw],
            [x - c * hl + s * hw, y - s * hl - c * hw],
            [x - c * hl - s * hw, y - s * hl + c * hw],
        ]
    )


class LanePrediction:
    """Constant-speed obstacle prediction along a map lane."""

    def __init__(self, track_map: TrackMap, s0: float, d: float, speed: float,
                 length: float = 0.4, width: float = 0.2):
        self._map = track_map
        self.s0 = s0
        self.d = d
        self.speed = speed
        self.length = length
        self.width = width

    def pose_at(self, t: float) -> tuple[float, float, float]:
        s = self._map.reference.wrap_s(self.s0 + self.speed * t)
        return frenet_to_cartesian(self._map.reference, FrenetCoord(s, self.d))

    def footprint_at(self, t: float) -> np.ndarray:
        x, y, theta = self.pose_at(t)
        return _corners(x, y, theta, self.length, self.width)

    def center_at(self, t: float) -> tuple[float, float]:
        x, y, _ = self.pose_at(t)
        return x, y

    @property
    def radius(self) -> float:
        return math.hypot(self.length, self.width) / 2.0


class FixedObstacle:
    """A static oriented box, e.g. for walled-off test scenarios."""

    def __init__(self, x: float, y: float, theta: float, length: float, width: float):
        self.x, self.y, self.theta = x, y, theta
        self.length, self.width = length, width
        self._footprint = _corners(x, y, theta, length, width)

    def pose_at(self, t: float):
        return self.x, self.y, self.theta

    def footprint_at(self, t: float) -> np.ndarray:
        return self._footprint

    def center_at(self, t: float) -> tuple[float, float]:
        return self.x, self.y

    @property
    def radius(self) -> float:
        return math.hypot(self.length, self.width) / 2.0


def predict_target(world: WorldState, track_map: TrackMap) -> LanePrediction:
    tt = world.target_track
    return LanePrediction(
        track_map, tt.s, tt.d, world.target.v,
        length=world.target.length, width=world.target.width,
    )


def _point_segment_dist(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    vv = vx * vx + vy * vy
    t = 0.0 if vv == 0.0 else min(max((wx * vx + wy * vy) / vv, 0.0), 1.0)
    dx, dy = wx - t * vx, wy - t * vy
    return math.hypot(dx, dy)


def rect_clearance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two oriented rectangles; 0 when they overlap."""
    from .world import rectangles_overlap

    if rectangles_overlap(a, b):
        return 0.0
    best = math.inf
    for p, q in ((a, b), (b, a)):
        for i in range(4):
            px, py = p[i]
            for j in range(4):
                k = (j + 1) % 4
                d = _point_segment_dist(px, py, q[j, 0], q[j, 1], q[k, 0], q[k, 1])
                if d < best:
                    best = d
    return best


def _clear_of(ego_pose, ego_len, ego_wid, obstacle, t, needed) -> bool:
    """True when the ego footprint at ego_pose clears obstacle at time t."""
    ox, oy = obstacle.center_at(t)
    cd = math.hypot(ego_pose[0] - ox, ego_pose[1] - oy)
    ego_radius = math.hypot(ego_len, ego_wid) / 2.0
    if cd - ego_radius - obstacle.radius >= needed:
        return True
    ego_fp = _corners(ego_pose[0], ego_pose[1], ego_pose[2], ego_len, ego_wid)
    return rect_clearance(ego_fp, obstacle.footprint_at(t)) >= needed


class _CachedObstacles:
    """Obstacle snapshots shared across equal-timestamp search nodes.

    The planner's speed profile depends only on traveled arc, so every node
    at a given substep depth carries the same timestamp; obstacle poses can
    be computed once per depth.
    """

    def __init__(self, occupancy, ego_radius: float):
        self._occupancy = list(occupancy)
        self._ego_radius = ego_radius
        self._cache: dict[int, list] = {}

    def any_obstacles(self) -> bool:
        return bool(self._occupancy)

    def _snapshots(self, depth: int, t: float) -> list:
        snap = self._cache.get(depth)
        if snap is None:
            snap = []
            for ob in self._occupancy:
                cx, cy = ob.center_at(t)
                snap.append((cx, cy, ob.radius, ob.footprint_at(t)))
            self._cache[depth] = snap
        return snap

    def clear(self, x: float, y: float, theta: float, ego_len: float, ego_wid: float,
              depth: int, t: float, needed: float) -> bool:
        for cx, cy, radius, footprint in self._snapshots(depth, t):
            if math.hypot(x - cx, y - cy) - self._ego_radius - radius >= needed:
                continue
            ego_fp = _corners(x, y, theta, ego_len, ego_wid)
            if rect_clearance(ego_fp, footprint) < needed:
                return False
        return True


@dataclass(frozen=True)
class GoalSpec:
    x: float
    y: float
    theta: float
    v: float
    lane: int
    stay: bool


def lane_change_goal(
    world: WorldState,
    track_map: TrackMap,
    action: HighLevelAction,
    cfg: PlannerConfig = PlannerConfig(),
) -> GoalSpec:
    """Goal pose on the requested lane's centerline a lookahead ahead.

    Boundary actions degrade to stay.  Stay goals use the follow speed when a
    slower target is close ahead in the same lane, the cruise speed otherwise.
    """
    et = world.ego_track
    lane = et.lane
    action = HighLevelAction(action)
    if action == HighLevelAction.CHANGE_LEFT:
        desired = min(lane + 1, track_map.lane_count - 1)
    elif action == HighLevelAction.CHANGE_RIGHT:
        desired = max(lane - 1, 0)
    else:
        desired = lane
    stay = desired == lane

    s_goal = track_map.reference.wrap_s(et.s + cfg.goal_lookahead)
    x, y, theta = frenet_to_cartesian(
        track_map.reference, FrenetCoord(s_goal, track_map.lane_offset(desired))
    )
    if stay:
        v = cfg.cruise_speed
        tt = world.target_track
        if tt.lane == lane:
            ds = wrap_signed(tt.s - et.s, track_map.total_length)
            gap = ds - (world.ego.length + world.target.length) / 2.0
            if 0.0 < ds and gap < cfg.follow_gap:
                v = cfg.follow_speed
    else:
        v = cfg.cruise_speed
    return GoalSpec(x=x, y=y, theta=theta, v=v, lane=desired, stay=stay)


def hybrid_astar_plan(
    occupancy,
    start: tuple[float, float, float, float],
    goal: tuple[float, float, float],
    cfg: PlannerConfig = PlannerConfig(),
    params: VehicleParams = VehicleParams(),
    track_map: TrackMap | None = None,
    creation_step: int = 0,
    goal_lane: int = 0,
    node_budget: int | None = None,
) -> Trajectory | None:
    """Search for a kinematically feasible, collision-free trajectory.

    ``occupancy`` is a list of obstacle predictions exposing footprint_at(t).
    ``start`` is (x, y, theta, v); ``goal`` is (x, y, theta).  Returns None
    when the open list exhausts or the node budget is exceeded.
    """
    sx, sy, stheta, sv = start
    gx, gy, gtheta = goal[0], goal[1], goal[2]
    budget = cfg.node_budget if node_budget is None else node_budget
    steer_set = [
        -params.steer_max,
        -params.steer_max / 2.0,
        0.0,
        params.steer_max / 2.0,
        params.steer_max,
    ]
    required = cfg.r_safe + cfg.search_margin
    n_sub = max(1, int(round(cfg.primitive_arc / cfg.substep_arc)))
    ds = cfg.primitive_arc / n_sub

    ref = track_map.reference if track_map is not None else None
    if ref is not None:
        d_lo = -track_map.lane_width / 2.0 - cfg.corridor_margin
        d_hi = (track_map.lane_count - 0.5) * track_map.lane_width + cfg.corridor_margin
        s_start = frenet_project(ref, (sx, sy)).s
        s_goal = frenet_project(ref, (gx, gy), s_hint=s_start + cfg.goal_lookahead).s
        span = wrap_unsigned(s_goal - s_start, ref.total_length) + 0.6

    def bin_key(x, y, theta):
        return (
            int(math.floor(x / cfg.grid_xy)),
            int(math.floor(y / cfg.grid_xy)),
            int(math.floor(wrap_unsigned(theta, 2.0 * math.pi) / cfg.grid_theta)),
        )

    def at_goal(x, y, theta):
        return (
            math.hypot(x - gx, y - gy) <= cfg.goal_pos_tol
            and abs(wrap_angle(theta - gtheta)) <= cfg.goal_heading_tol
        )

    def start_clear():
        for ob in occupancy:
            if not _clear_of((sx, sy, stheta), params.length, params.width, ob, 0.0, cfg.r_safe):
                return False
        return True

    if not start_clear():
        return None

    # Fail fast when the goal region stays occupied through the whole
    # arrival window; searching cannot succeed then.
    if occupancy:
        t_est = math.hypot(gx - sx, gy - sy) / max(cfg.cruise_speed, 1e-6)
        window = [max(0.0, t_est + off) for off in (-0.6, -0.3, 0.0, 0.3, 0.6)]
        goal_free = any(
            all(
                _clear_of((gx, gy, gtheta), params.length, params.width, ob, t, cfg.r_safe)
                for ob in occupancy
            )
            for t in window
        )
        if not goal_free:
            return None

    # Fail fast when a slower vehicle rides the goal lane alongside or just
    # ahead: with the fixed speed profile the ego can neither drop behind it
    # nor clear past it, so the search would only exhaust its budget.
    if occupancy and ref is not None:
        margin = params.length + cfg.r_safe + cfg.search_margin + 0.05
        t_nom = cfg.goal_lookahead / max(cfg.cruise_speed, 1e-6) + 0.6
        blocked_lo = -margin
        for ob in occupancy:
            if not isinstance(ob, LanePrediction):
                continue
            if track_map.lane_from_offset(ob.d) != goal_lane:
                continue
            if ob.speed > cfg.cruise_speed + 0.05:
                continue
            # Where the obstacle ends up relative to the goal by arrival time.
            blocked_hi = cfg.goal_lookahead - ob.speed * t_nom + margin
            rel = wrap_signed(ob.s0 - s_start, ref.total_length)
            if blocked_lo < rel < blocked_hi:
                return None

    obstacles = _CachedObstacles(occupancy, math.hypot(params.length, params.width) / 2.0)

    # Records are referenced by immutable ids so parent chains can never be
    # invalidated when a grid bin is reached again on a cheaper path; bins
    # only prune dominated states.
    # Record: (g, x, y, theta, v, t, steer, s_guess, depth, parent_id, samples)
    start_s_guess = frenet_project(ref, (sx, sy)).s if ref is not None else 0.0
    records = [
        (0.0, sx, sy, stheta, max(sv, 0.0), 0.0, 0.0, start_s_guess, 0, None,
         [(0.0, sx, sy, stheta, max(sv, 0.0))])
    ]
    best_g = {bin_key(sx, sy, stheta): 0.0}
    heap = [(math.hypot(sx - gx, sy - gy), 0, 0)]
    counter = 0
    expansions = 0
    goal_id = None

    if at_goal(sx, sy, stheta):
        goal_id = 0

    tan_over_wb = {steer: math.tan(steer) / params.wheelbase for steer in steer_set}
    while heap and goal_id is None:
        _, _, node_id = heapq.heappop(heap)
        node = records[node_id]
        g, x, y, theta, v, t, steer_prev, s_guess, depth, _, _ = node
        if g > best_g.get(bin_key(x, y, theta), math.inf):
            continue  # superseded by a cheaper path into the same bin
        expansions += 1
        if expansions > budget:
            return None

        for steer in steer_set:
            nx_, ny_, nth, nv, nt, nsg = x, y, theta, v, t, s_guess
            ndepth = depth
            samples = []
            ok = True
            hit_goal = False
            for _ in range(n_sub):
                speed = max(nv, cfg.min_profile_speed)
                dt = ds / speed
                nx_ += ds * math.cos(nth)
                ny_ += ds * math.sin(nth)
                nth += ds * tan_over_wb[steer]
                if nv < cfg.cruise_speed:
                    nv = min(nv + cfg.plan_accel * dt, cfg.cruise_speed)
                elif nv > cfg.cruise_speed:
                    nv = max(nv - cfg.plan_accel * dt, cfg.cruise_speed)
                nt += dt
                ndepth += 1
                if obstacles.any_obstacles() and not obstacles.clear(
                    nx_, ny_, nth, params.length, params.width, ndepth, nt, required
                ):
                    ok = False
                    break
                samples.append((nt, nx_, ny_, nth, nv))
                if at_goal(nx_, ny_, nth):
                    hit_goal = True
                    break
            if not ok or not samples:
                continue
            if ref is not None:
                # Corridor check at the primitive end; in-primitive bulge is
                # bounded well below the corridor margin.
                nsg += ds * len(samples)
                ps, pd = project_local(ref, samples[-1][1], samples[-1][2], nsg)
                nsg = ps
                if not (d_lo <= pd <= d_hi):
                    continue
                if wrap_unsigned(ps - s_start, ref.total_length) > span:
                    continue
            cost = ds * len(samples) + cfg.steer_change_weight * cfg.primitive_arc * abs(
                steer - steer_prev
            ) / params.steer_max
            ng = g + cost
            nkey = bin_key(samples[-1][1], samples[-1][2], samples[-1][3])
            if best_g.get(nkey, math.inf) <= ng and not hit_goal:
                continue
            records.append(
                (ng, samples[-1][1], samples[-1][2], samples[-1][3], samples[-1][4],
                 samples[-1][0], steer, nsg, ndepth, node_id, samples)
            )
            child_id = len(records) - 1
            best_g[nkey] = min(ng, best_g.get(nkey, math.inf))
            if hit_goal:
                goal_id = child_id
                break
            counter += 1
            h = math.hypot(samples[-1][1] - gx, samples[-1][2] - gy)
            heapq.heappush(heap, (ng + h, counter, child_id))

    if goal_id is None:
        return None

    # Reconstruct the sample chain through the immutable parent ids.
    chain = []
    node_id = goal_id
    while node_id is not None:
        node = records[node_id]
        chain.append(node[10])
        node_id = node[9]
    chain.reverse()
    rows = [pt for seg in chain for pt in seg]
    samples = np.asarray(rows, dtype=float)
    # Strictly increasing timestamps are guaranteed by construction; drop any
    # duplicated leading sample from the start node.
    keep = np.concatenate([[True], np.diff(samples[:, 0]) > 0])
    samples = samples[keep]
    return Trajectory(samples=samples, goal_lane=goal_lane, creation_step=creation_step)


def track_trajectory(
    state: VehicleState,
    traj: Trajectory,
    elapsed: float,
    tracker_index: int = 0,
    cfg: PlannerConfig = PlannerConfig(),
    params: VehicleParams = VehicleParams(),
) -> tuple[float, float, int, bool]:
    """Pure-pursuit steering plus proportional speed control along a trajectory.

    Returns (accel, steer, next_tracker_index, done).
    """
    s = traj.samples
    n = len(s)
    # Advance the progress pointer monotonically to the nearest sample.
    window_end = min(tracker_index + 40, n)
    seg = s[tracker_index:window_end]
    d2 = (seg[:, 1] - state.x) ** 2 + (seg[:, 2] - state.y) ** 2
    idx = tracker_index + int(np.argmin(d2))

    # Lookahead point for steering.
    j = idx
    while j < n - 1 and math.hypot(s[j, 1] - state.x, s[j, 2] - state.y) < cfg.lookahead_dist:
        j += 1
    lx, ly = s[j, 1], s[j, 2]
    dist = math.hypot(lx - state.x, ly - state.y)
    if dist < 1e-9:
        steer = 0.0
    else:
        alpha = wrap_angle(math.atan2(ly - state.y, lx - state.x) - state.theta)
        kappa = 2.0 * math.sin(alpha) / dist
        steer = math.atan(params.wheelbase * kappa)
    steer = min(max(steer, -params.steer_max), params.steer_max)

    v_ref = float(np.interp(elapsed, s[:, 0], s[:, 4]))
    accel = cfg.speed_gain * (v_ref - state.v)
    accel = min(max(accel, -params.accel_max), params.accel_max)

    done = idx >= n - 1 and (
        math.hypot(s[-1, 1] - state.x, s[-1, 2] - state.y) <= 0.08
        or elapsed > traj.duration + 0.5
    )
    return accel, steer, idx, done


def emergency_check(
    world: WorldState, track_map: TrackMap, cfg: PlannerConfig = PlannerConfig()
) -> bool:
    """True when a slower vehicle sits ahead in the ego's lane inside the
    emergency gap while the ego is closing in."""
    et, tt = world.ego_track, world.target_track
    if tt.lane != et.lane:
        return False
    ds = wrap_signed(tt.s - et.s, track_map.total_length)
    if ds <= 0.0:
        return False
    gap = ds - (world.ego.length + world.target.length) / 2.0
    return gap < cfg.d_emergency and world.ego.v > world.target.v


def _same_lane_gap(world: WorldState, track_map: TrackMap) -> float | None:
    """Bumper gap to a target ahead in the ego's lane, None otherwise."""
    et, tt = world.ego_track, world.target_track
    if tt.lane != et.lane:
        return None
    ds = wrap_signed(tt.s - et.s, track_map.total_length)
    if ds <= 0.0:
        return None
    return ds - (world.ego.length + world.target.length) / 2.0


def _in_interval(s: float, interval: tuple[float, float], total: float) -> bool:
    s0, s1 = interval
    if s0 <= s1:
        return s0 <= s <= s1
    return s >= s0 or s <= s1


def crossing_hold_check(
    world: WorldState, track_map: TrackMap, cfg: PlannerConfig = PlannerConfig()
) -> bool:
    """Yield before a self-crossing when the target occupies the paired zone.

    Only holds while the ego is still approaching the zone entrance; once
    inside it proceeds (stopping inside the conflict region would be worse).
    """
    if not track_map.conflict_zones:
        return False
    total = track_map.total_length
    es, ts = world.ego_track.s, world.target_track.s
    for zone_a, zone_b in track_map.conflict_zones:
        for mine, theirs in ((zone_a, zone_b), (zone_b, zone_a)):
            if _in_interval(es, mine, total):
                continue
            gap_to_entrance = wrap_unsigned(mine[0] - es, total)
            if gap_to_entrance > cfg.crossing_approach:
                continue
            expanded = (
                track_map.reference.wrap_s(theirs[0] - cfg.crossing_margin_lead),
                track_map.reference.wrap_s(theirs[1] + cfg.crossing_margin_tail),
            )
            if _in_interval(ts, expanded, total):
                return True
    return False


def _follow_control(
    world: WorldState,
    track_map: TrackMap,
    engaged: bool,
    cfg: PlannerConfig,
    params: VehicleParams,
) -> tuple[float, float, bool]:
    """Lane-keeping pure pursuit plus speed matching behind a slow leader."""
    et = world.ego_track
    ref = track_map.reference
    s_ahead = ref.wrap_s(et.s + cfg.lookahead_dist)
    lx, ly, _ = frenet_to_cartesian(
        ref, FrenetCoord(s_ahead, track_map.lane_offset(et.lane))
    )
    dist = math.hypot(lx - world.ego.x, ly - world.ego.y)
    if dist < 1e-9:
        steer = 0.0
    else:
        alpha = wrap_angle(math.atan2(ly - world.ego.y, lx - world.ego.x) - world.ego.theta)
        steer = math.atan(params.wheelbase * 2.0 * math.sin(alpha) / dist)
    steer = min(max(steer, -params.steer_max), params.steer_max)

    gap = _same_lane_gap(world, track_map)
    if gap is None:
        engaged = False
    elif gap < cfg.follow_gap:
        engaged = True
    elif gap > cfg.follow_release_gap:
        engaged = False
    v_cmd = min(cfg.cruise_speed, world.target.v) if engaged else cfg.cruise_speed
    accel = cfg.speed_gain * (v_cmd - world.ego.v)
    accel = min(max(accel, -params.accel_max), params.accel_max)
    return accel, steer, engaged


def planner_step(
    pstate: PlannerState,
    world: WorldState,
    track_map: TrackMap,
    action: HighLevelAction | int | None,
    cfg: PlannerConfig = PlannerConfig(),
    params: VehicleParams = VehicleParams(),
) -> tuple[tuple[float, float], list[str], PlannerState]:
    """One control step: accept/refuse the action, plan, track, supervise.

    ``action`` is None on steps without a fresh high-level command (mid-period).
    Returns (control, events, new_planner_state).
    """
    events: list[str] = []

    # Emergency latch with hysteresis.
    was_braking = pstate.emergency or pstate.crossing_hold
    gap = _same_lane_gap(world, track_map)
    if pstate.emergency:
        emergency = gap is not None and gap <= cfg.d_emergency + cfg.emergency_hysteresis
    else:
        emergency = emergency_check(world, track_map, cfg)
    hold = crossing_hold_check(world, track_map, cfg)
    if (emergency or hold) and not was_braking:
        events.append("emergency")
    if hold and not pstate.crossing_hold:
        events.append("crossing_hold")

    traj = pstate.active_trajectory
    tracker_index = pstate.tracker_index
    follow_engaged = pstate.follow_engaged
    replan_blocked_until = pstate.replan_blocked_until
    braking = emergency or hold

    if braking and traj is not None:
        # Abandon the maneuver; safety overrides tracking.
        traj = None
        tracker_index = 0

    if traj is not None:
        if action is not None:
            events.append("refused")
        elapsed = (world.step_index - traj.creation_step) * world.dt
        accel, steer, tracker_index, done = track_trajectory(
            world.ego, traj, elapsed, tracker_index, cfg, params
        )
        if done:
            events.append("completed")
            traj = None
            tracker_index = 0
            accel, steer, follow_engaged = _follow_control(
                world, track_map, follow_engaged, cfg, params
            )
        control = (accel, steer)
    elif braking:
        if action is not None:
            events.append("refused")
        _, steer, follow_engaged = _follow_control(
            world, track_map, follow_engaged, cfg, params
        )
        control = (-params.brake_max, steer)
    else:
        if action is not None:
            goal = lane_change_goal(world, track_map, action, cfg)
            if not goal.stay and world.step_index < pstate.replan_blocked_until:
                events.append("refused")
            elif not goal.stay:
                occupancy = [predict_target(world, track_map)]
                planned = hybrid_astar_plan(
                    occupancy,
                    (world.ego.x, world.ego.y, world.ego.theta, world.ego.v),
                    (goal.x, goal.y, goal.theta),
                    cfg,
                    params,
                    track_map=track_map,
                    creation_step=world.step_index,
                    goal_lane=goal.lane,
                )
                if planned is not None:
                    events.append("planned")
                    traj = planned
                    tracker_index = 0
                else:
                    events.append("plan_failed")
                    replan_blocked_until = world.step_index + cfg.replan_cooldown_steps
        if traj is not None:
            accel, steer, tracker_index, _ = track_trajectory(
                world.ego, traj, 0.0, 0, cfg, params
            )
            control = (accel, steer)
        else:
            accel, steer, follow_engaged = _follow_control(
                world, track_map, follow_engaged, cfg, params
            )
            control = (accel, steer)

    new_state = PlannerState(
        active_trajectory=traj,
        tracker_index=tracker_index,
        emergency=emergency,
        crossing_hold=hold,
        follow_engaged=follow_engaged,
        replan_blocked_until=replan_blocked_until,
    )
    return control, events, new_state
