"""Reference paths, Frenet projection, and the two closed track maps.

Conventions used throughout the package:

* Paths are directed.  The lateral offset ``d`` is positive to the LEFT of
  the direction of travel.
* Lane 0 is the rightmost lane; lane indices increase to the left.  Lane
  ``i``'s centerline sits at ``d = i * lane_width`` measured from the
  rightmost centerline, which also serves as the shared longitudinal
  reference for every vehicle on the map.
* On a closed path the arc coordinate ``s`` lives in ``[0, total_length)``
  and wraps at the seam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

RESAMPLE_SPACING = 0.05  # m, maximum gap between stored path samples


class GeometryError(ValueError):
    """Degenerate path or map construction input."""


def wrap_unsigned(value: float, period: float) -> float:
    """Wrap into [0, period)."""
    w = value % period
    return 0.0 if w == period else w


def wrap_signed(value: float, period: float) -> float:
    """Wrap into (-period/2, period/2]."""
    w = value % period
    if w > period / 2.0:
        w -= period
    return w


def wrap_angle(angle: float) -> float:
    """Wrap into (-pi, pi]."""
    return -wrap_signed(-angle, 2.0 * math.pi)


@dataclass(frozen=True)
class FrenetCoord:
    """Arc length along a path plus signed lateral offset (left positive)."""

    s: float
    d: float


@dataclass
class ReferencePath:
    """A directed path resampled at <= 0.05 m spacing.

    ``points``, ``cumulative_arc_length`` and ``headings`` are aligned
    per-sample arrays.  For a closed path the samples cover ``[0, L)`` and the
    seam between the last sample and the first is implied.  A smooth
    piecewise-cubic interpolant over the samples backs projection and
    reconstruction so the two stay exact inverses of each other.
    """

    points: np.ndarray
    cumulative_arc_length: np.ndarray
    headings: np.ndarray
    closed: bool
    total_length: float
    _knots: np.ndarray = field(repr=False)
    _cx: np.ndarray = field(repr=False)
    _cy: np.ndarray = field(repr=False)
    _spacing: float = field(repr=False, default=0.0)

    def wrap_s(self, s: float) -> float:
        if self.closed:
            return wrap_unsigned(s, self.total_length)
        return min(max(s, 0.0), self.total_length)

    def _piece(self, s: float) -> tuple[int, float]:
        # Knots are uniformly spaced, so the piece lookup is arithmetic.
        if self.closed:
            s = s % self.total_length
        elif s <= 0.0:
            s = 0.0
        elif s > self.total_length:
            s = self.total_length
        i = int(s / self._spacing)
        if i > len(self._knots) - 2:
            i = len(self._knots) - 2
        return i, s - i * self._spacing

    def derivatives(self, s: float) -> tuple[tuple[float, float], tuple[float, float], tuple[float, float]]:
        """Position, first and second derivative of the interpolant at s."""
        i, u = self._piece(s)
        cx = self._cx
        cy = self._cy
        ax, bx, cx1, dx = cx[0, i], cx[1, i], cx[2, i], cx[3, i]
        ay, by, cy1, dy = cy[0, i], cy[1, i], cy[2, i], cy[3, i]
        px = ((ax * u + bx) * u + cx1) * u + dx
        py = ((ay * u + by) * u + cy1) * u + dy
        vx = (3.0 * ax * u + 2.0 * bx) * u + cx1
        vy = (3.0 * ay * u + 2.0 * by) * u + cy1
        wx = 6.0 * ax * u + 2.0 * bx
        wy = 6.0 * ay * u + 2.0 * by
        return (px, py), (vx, vy), (wx, wy)

    def position(self, s: float) -> tuple[float, float]:
        return self.derivatives(s)[0]

    def heading_at(self, s: float) -> float:
        _, (vx, vy), _ = self.derivatives(s)
        return math.atan2(vy, vx)

    def tangent_at(self, s: float) -> tuple[float, float]:
        _, (vx, vy), _ = self.derivatives(s)
        n = math.hypot(vx, vy)
        return vx / n, vy / n

    def curvature_at(self, s: float) -> float:
        _, (vx, vy), (wx, wy) = self.derivatives(s)
        speed2 = vx * vx + vy * vy
        return (vx * wy - vy * wx) / speed2 ** 1.5


def build_reference_path(waypoints, closed: bool) -> ReferencePath:
    """Resample a waypoint polyline at <= 0.05 m spacing and fit headings.

    Open paths need at least 2 distinct waypoints, closed paths at least 3.
    Raises GeometryError on duplicate consecutive waypoints.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError("waypoints must be an (n, 2) array of positions")
    if closed and len(pts) >= 2 and np.allclose(pts[0], pts[-1], atol=1e-12):
        pts = pts[:-1]
    min_pts = 3 if closed else 2
    if len(pts) < min_pts:
        raise GeometryError(
            f"need at least {min_pts} waypoints for a {'closed' if closed else 'open'} path"
        )

    segs = np.diff(pts, axis=0)
    if closed:
        segs = np.vstack([segs, pts[0] - pts[-1]])
    seg_len = np.hypot(segs[:, 0], segs[:, 1])
    if np.any(seg_len < 1e-9):
        raise GeometryError("duplicate consecutive waypoints")
    poly_s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(poly_s[-1])
    if total <= 0.0:
        raise GeometryError("path has zero length")

    poly_pts = np.vstack([pts, pts[0]]) if closed else pts
    n = int(math.ceil(total / RESAMPLE_SPACING))
    if closed:
        s_grid = np.arange(n) * (total / n)
    else:
        s_grid = np.linspace(0.0, total, n + 1)
    xs = np.interp(s_grid, poly_s, poly_pts[:, 0])
    ys = np.interp(s_grid, poly_s, poly_pts[:, 1])
    samples = np.column_stack([xs, ys])

    if closed:
        knots = np.concatenate([s_grid, [total]])
        vals = np.vstack([samples, samples[:1]])
        spline_x = CubicSpline(knots, vals[:, 0], bc_type="periodic")
        spline_y = CubicSpline(knots, vals[:, 1], bc_type="periodic")
    else:
        knots = s_grid
        spline_x = CubicSpline(knots, samples[:, 0], bc_type="natural")
        spline_y = CubicSpline(knots, samples[:, 1], bc_type="natural")

    dxs = spline_x(s_grid, 1)
    dys = spline_y(s_grid, 1)
    headings = np.arctan2(dys, dxs)

    knots_arr = np.asarray(spline_x.x, dtype=float)
    return ReferencePath(
        points=samples,
        cumulative_arc_length=s_grid,
        headings=headings,
        closed=closed,
        total_length=total,
        _knots=knots_arr,
        _cx=np.asarray(spline_x.c, dtype=float),
        _cy=np.asarray(spline_y.c, dtype=float),
        _spacing=float(knots_arr[1] - knots_arr[0]),
    )


def _refine_projection(
    path: ReferencePath, px: float, py: float, s0: float, half_width: float = RESAMPLE_SPACING
) -> float:
    """Newton refinement of the foot point near s0, with a bracketed fallback."""
    h = half_width
    s = s0
    for _ in range(30):
        (cx, cy), (vx, vy), (wx, wy) = path.derivatives(s)
        rx = px - cx
        ry = py - cy
        f = rx * vx + ry * vy
        fp = -(vx * vx + vy * vy) + rx * wx + ry * wy
        if fp >= -1e-12:
            break
        step = f / fp
        if abs(step) > 2.0 * h:
            step = math.copysign(2.0 * h, step)
        s = s - step
        if not path.closed:
            s = min(max(s, 0.0), path.total_length)
        if abs(s - s0) > 4.0 * h:
            break
        if abs(step) < 1e-12:
            return s
    # Golden-section fallback over the bracketing interval.
    lo, hi = s0 - h, s0 + h
    if not path.closed:
        lo = max(lo, 0.0)
        hi = min(hi, path.total_length)

    def dist2(sv: float) -> float:
        (cx, cy), _, _ = path.derivatives(sv)
        return (px - cx) ** 2 + (py - cy) ** 2

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = dist2(c), dist2(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = dist2(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = dist2(d)
    return 0.5 * (a + b)


def frenet_project(path: ReferencePath, point, s_hint: float | None = None) -> FrenetCoord:
    """Project a point onto the path.

    Returns the arc length of the foot point (refined between samples) and
    the signed perpendicular offset, positive left.  Exact-distance ties are
    broken toward the smallest s.  A caller that tracks a moving object can
    pass ``s_hint`` to keep the projection on the local branch of a
    self-intersecting path.
    """
    px, py = float(point[0]), float(point[1])
    if s_hint is None:
        diff = path.points - (px, py)
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2
        s0 = float(path.cumulative_arc_length[int(np.argmin(d2))])
    else:
        # Local search over a window of samples around the hint; tolerates
        # hints off by up to ~0.5 m.
        n = len(path.points)
        i0 = int(path.wrap_s(float(s_hint)) / path.total_length * n)
        window = np.arange(i0 - 12, i0 + 13)
        window = window % n if path.closed else np.clip(window, 0, n - 1)
        diff = path.points[window] - (px, py)
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2
        s0 = float(path.cumulative_arc_length[int(window[int(np.argmin(d2))])])
    s = _refine_projection(path, px, py, s0)
    (cx, cy), (vx, vy), _ = path.derivatives(s)
    norm = math.hypot(vx, vy)
    nx, ny = -vy / norm, vx / norm
    d = (px - cx) * nx + (py - cy) * ny
    return FrenetCoord(s=path.wrap_s(s), d=float(d))


def project_local(
    path: ReferencePath, px: float, py: float, s_hint: float, half_width: float = 0.2
) -> tuple[float, float]:
    """Newton-only projection from a nearby hint (within half_width or so).

    Cheaper than frenet_project; used by tight loops that track their own
    arc-length estimate.  Returns (s, d).
    """
    s = _refine_projection(path, px, py, path.wrap_s(s_hint), half_width)
    (cx, cy), (vx, vy), _ = path.derivatives(s)
    norm = math.hypot(vx, vy)
    d = (px - cx) * (-vy / norm) + (py - cy) * (vx / norm)
    return path.wrap_s(s), d


def frenet_to_cartesian(path: ReferencePath, fc: FrenetCoord) -> tuple[float, float, float]:
    """Inverse of the projection: position offset along the left normal.

    Raises GeometryError when ``|d|`` reaches the local radius of curvature
    (the offset curve folds over there).
    """
    s = path.wrap_s(fc.s)
    (cx, cy), (vx, vy), (wx, wy) = path.derivatives(s)
    speed2 = vx * vx + vy * vy
    kappa = (vx * wy - vy * wx) / speed2 ** 1.5
    # The offset curve folds over on the concave side once |d| reaches the
    # local curvature radius; the convex side stays well defined.
    if fc.d * kappa >= 1.0:
        raise GeometryError(
            f"lateral offset {fc.d:.3f} m exceeds local curvature radius {1.0 / abs(kappa):.3f} m"
        )
    norm = math.sqrt(speed2)
    nx, ny = -vy / norm, vx / norm
    return cx + fc.d * nx, cy + fc.d * ny, math.atan2(vy, vx)


@dataclass
class TrackMap:
    """A closed multi-lane loop. ``centerlines[0]`` is the rightmost lane and
    doubles as the shared longitudinal reference for the whole map."""

    centerlines: list[ReferencePath]
    lane_width: float
    lane_count: int
    rightmost_lane_index: int = 0
    conflict_zones: list[tuple[tuple[float, float], tuple[float, float]]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def reference(self) -> ReferencePath:
        return self.centerlines[self.rightmost_lane_index]

    @property
    def total_length(self) -> float:
        return self.reference.total_length

    def lane_offset(self, lane: int) -> float:
        return (lane - self.rightmost_lane_index) * self.lane_width

    def lane_from_offset(self, d: float) -> int:
        lane = int(round(d / self.lane_width)) + self.rightmost_lane_index
        return min(max(lane, 0), self.lane_count - 1)

    def in_lane_offset(self, d: float, lane: int) -> float:
        return d - self.lane_offset(lane)

    def leftmost_lane_index(self) -> int:
        return self.lane_count - 1


def lane_boundary_distances(track_map: TrackMap, ego_fc: FrenetCoord, lane: int) -> tuple[float, float]:
    """Distances from a point to its lane's left and right boundaries.

    ``ego_fc.d`` is measured from the given lane's centerline.  Inside the
    lane the two distances sum to the lane width; outside, the crossed side
    clamps to zero.
    """
    if not 0 <= lane < track_map.lane_count:
        raise GeometryError(f"lane {lane} out of range for {track_map.lane_count}-lane map")
    half = track_map.lane_width / 2.0
    d_l = max(0.0, half - ego_fc.d)
    d_r = max(0.0, half + ego_fc.d)
    return d_l, d_r


def _walk_segments(start_xy, start_heading: float, segments, sample_step: float = 0.02):
    """Integrate straight/arc segments into (x, y, heading) sample arrays.

    Segment forms: ("straight", length) and ("arc", signed_angle, radius)
    where a positive angle turns left.
    """
    x, y = float(start_xy[0]), float(start_xy[1])
    heading = float(start_heading)
    xs, ys, hs = [x], [y], [heading]
    for seg in segments:
        kind = seg[0]
        if kind == "straight":
            length = float(seg[1])
            if length <= 0:
                raise GeometryError("straight segment length must be positive")
            n = max(1, int(math.ceil(length / sample_step)))
            for i in range(1, n + 1):
                t = length * i / n
                xs.append(x + t * math.cos(heading))
                ys.append(y + t * math.sin(heading))
                hs.append(heading)
            x, y = xs[-1], ys[-1]
        elif kind == "arc":
            angle = float(seg[1])
            radius = float(seg[2])
            if radius <= 0 or angle == 0:
                raise GeometryError("arc needs positive radius and nonzero angle")
            side = 1.0 if angle > 0 else -1.0
            # center sits on the left normal for a left turn, right normal otherwise
            nx, ny = -math.sin(heading), math.cos(heading)
            cx_, cy_ = x + side * radius * nx, y + side * radius * ny
            start_phi = math.atan2(y - cy_, x - cx_)
            n = max(2, int(math.ceil(abs(angle) * radius / sample_step)))
            for i in range(1, n + 1):
                phi = start_phi + angle * i / n
                xs.append(cx_ + radius * math.cos(phi))
                ys.append(cy_ + radius * math.sin(phi))
                hs.append(heading + angle * i / n)
            x, y = xs[-1], ys[-1]
            heading = wrap_angle(heading + angle)
        else:
            raise GeometryError(f"unknown segment kind {kind!r}")
    return np.column_stack([xs, ys]), np.asarray(hs)


def _offset_waypoints(pts: np.ndarray, headings: np.ndarray, offset: float) -> np.ndarray:
    nx = -np.sin(headings)
    ny = np.cos(headings)
    return pts + offset * np.column_stack([nx, ny])


def _dedupe(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if math.hypot(pts[i, 0] - pts[keep[-1], 0], pts[i, 1] - pts[keep[-1], 1]) > tol:
            keep.append(i)
    return pts[keep]


def _segment_distance(a0, a1, b0, b1) -> float:
    """Distance between two 2D segments."""

    def point_seg(p, q0, q1):
        vx, vy = q1[0] - q0[0], q1[1] - q0[1]
        wx, wy = p[0] - q0[0], p[1] - q0[1]
        vv = vx * vx + vy * vy
        t = 0.0 if vv == 0 else min(max((wx * vx + wy * vy) / vv, 0.0), 1.0)
        dx, dy = wx - t * vx, wy - t * vy
        return math.hypot(dx, dy)

    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    # Proper intersection means zero distance.
    o1, o2 = orient(a0, a1, b0), orient(a0, a1, b1)
    o3, o4 = orient(b0, b1, a0), orient(b0, b1, a1)
    if (o1 * o2 < 0) and (o3 * o4 < 0):
        return 0.0
    return min(
        point_seg(b0, a0, a1),
        point_seg(b1, a0, a1),
        point_seg(a0, b0, b1),
        point_seg(a1, b0, b1),
    )


def detect_conflict_zones(
    ref: ReferencePath,
    lane_width: float,
    lane_count: int,
    min_route_separation: float = 3.0,
    clearance: float = 0.75,
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Find pairs of s-intervals where the route physically crosses itself.

    Two route samples conflict when their lateral vehicle-center sections
    (spanning all lanes) come within ``clearance`` of each other while being
    far apart along the route.  Contiguous conflicting samples are clustered
    into intervals and returned as matched pairs.
    """
    pts = ref.points
    s = ref.cumulative_arc_length
    n = len(pts)
    total = ref.total_length
    lo_d = -0.1
    hi_d = (lane_count - 1) * lane_width + 0.1
    nx = -np.sin(ref.headings)
    ny = np.cos(ref.headings)
    sec_a = pts + lo_d * np.column_stack([nx, ny])
    sec_b = pts + hi_d * np.column_stack([nx, ny])

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    ds = np.abs(s[:, None] - s[None, :])
    route_sep = np.minimum(ds, total - ds)
    coarse = (dist < clearance + 2.0 * (hi_d - lo_d)) & (route_sep > min_route_separation)

    mask = np.zeros((n, n), dtype=bool)
    for i, j in zip(*np.nonzero(np.triu(coarse))):
        d = _segment_distance(sec_a[i], sec_b[i], sec_a[j], sec_b[j])
        if d < clearance:
            mask[i, j] = mask[j, i] = True

    involved = mask.any(axis=1)
    if not involved.any():
        return []

    # Cluster contiguous involved samples, wrap-aware.
    idx = np.nonzero(involved)[0]
    clusters: list[list[int]] = [[int(idx[0])]]
    for i in idx[1:]:
        if i - clusters[-1][-1] <= 2:
            clusters[-1].append(int(i))
        else:
            clusters.append([int(i)])
    if len(clusters) > 1 and clusters[0][0] == 0 and clusters[-1][-1] == n - 1:
        clusters[0] = clusters.pop() + clusters[0]

    zones = []
    for c in clusters:
        zones.append((float(s[c[0] % n]), float(s[c[-1] % n]), c))

    pairs = []
    for i in range(len(zones)):
        for j in range(i + 1, len(zones)):
            block = mask[np.ix_(zones[i][2], zones[j][2])]
            if block.any():
                pairs.append(((zones[i][0], zones[i][1]), (zones[j][0], zones[j][1])))
    return pairs


def _build_track(
    lane0_pts: np.ndarray,
    lane0_headings: np.ndarray,
    lane_width: float,
    lane_count: int,
    meta: dict,
) -> TrackMap:
    centerlines = []
    for lane in range(lane_count):
        pts = _dedupe(_offset_waypoints(lane0_pts, lane0_headings, lane * lane_width))
        centerlines.append(build_reference_path(pts, closed=True))
    zones = detect_conflict_zones(centerlines[0], lane_width, lane_count)
    return TrackMap(
        centerlines=centerlines,
        lane_width=lane_width,
        lane_count=lane_count,
        rightmost_lane_index=0,
        conflict_zones=zones,
        meta=meta,
    )


def build_oval_map(
    straight_length: float = 6.0,
    radius: float = 1.6,
    lane_width: float = 0.8,
    lane_count: int = 2,
) -> TrackMap:
    """Closed oval, driven clockwise so lane 0 (rightmost) is the inner ring.

    The default dimensions keep opposite track sections more than the dense
    radius (2 m) apart, so proximity predicates only fire for vehicles that
    actually share a road section.
    """
    if straight_length <= 0 or radius <= 0 or lane_width <= 0:
        raise GeometryError("oval dimensions must be positive")
    if lane_count < 2:
        raise GeometryError("need at least 2 lanes")
    a = straight_length
    segments = [
        ("straight", a),
        ("arc", -math.pi, radius),
        ("straight", a),
        ("arc", -math.pi, radius),
    ]
    pts, headings = _walk_segments((a / 2.0, -radius), math.pi, segments)
    if math.hypot(pts[-1, 0] - pts[0, 0], pts[-1, 1] - pts[0, 1]) > 1e-6:
        raise GeometryError("oval route failed to close")
    meta = {
        "kind": "oval",
        "straight_length": straight_length,
        "radius": radius,
        "lane_width": lane_width,
        "lane_count": lane_count,
    }
    return _build_track(pts[:-1], headings[:-1], lane_width, lane_count, meta)


def cross_segments(radius: float) -> list:
    """The 9-segment closed sequence of the cross-road route.

    Two lobes (one left-turning, one right-turning) joined by straights that
    cross each other at 60 degrees, giving the route a single self-crossing.
    """
    half_angle = math.radians(30.0)
    tangent_len = radius / math.tan(half_angle)
    sweep = math.pi + 2.0 * half_angle
    third = sweep / 3.0
    return [
        ("straight", tangent_len),
        ("arc", third, radius),
        ("arc", third, radius),
        ("arc", third, radius),
        ("straight", 2.0 * tangent_len),
        ("arc", -third, radius),
        ("arc", -third, radius),
        ("arc", -third, radius),
        ("straight", tangent_len),
    ]


def build_cross_map(
    radius: float = 2.0,
    lane_width: float = 0.8,
    lane_count: int = 2,
    segments: list | None = None,
) -> TrackMap:
    """Closed cross-road route with left and right curves and one crossing."""
    if radius <= 0 or lane_width <= 0:
        raise GeometryError("cross-road dimensions must be positive")
    if lane_count < 2:
        raise GeometryError("need at least 2 lanes")
    if radius - (lane_count - 1) * lane_width <= 0.3:
        raise GeometryError("turn radius too tight for the requested lane span")
    segs = segments if segments is not None else cross_segments(radius)
    half_angle = math.radians(30.0)
    pts, headings = _walk_segments((0.0, 0.0), -half_angle, segs)
    if math.hypot(pts[-1, 0] - pts[0, 0], pts[-1, 1] - pts[0, 1]) > 1e-6:
        raise GeometryError("cross route failed to close")
    pts, headings = pts[:-1], headings[:-1]
    # Roll the seam away from the crossing so s = 0 sits mid-lobe.
    roll = len(pts) // 3
    pts = np.roll(pts, -roll, axis=0)
    headings = np.roll(headings, -roll)
    meta = {
        "kind": "cross",
        "radius": radius,
        "lane_width": lane_width,
        "lane_count": lane_count,
    }
    return _build_track(pts, headings, lane_width, lane_count, meta)


def map_from_config(cfg: dict) -> TrackMap:
    """Build a TrackMap from a map config dictionary (see docs/formats.md)."""
    kind = cfg.get("kind")
    if kind == "oval":
        return build_oval_map(
            straight_length=cfg.get("straight_length", 4.0),
            radius=cfg.get("radius", 1.0),
            lane_width=cfg.get("lane_width", 0.8),
            lane_count=cfg.get("lane_count", 2),
        )
    if kind == "cross":
        segments = None
        if "segments" in cfg:
            segments = []
            for seg in cfg["segments"]:
                if seg[0] == "straight":
                    segments.append(("straight", float(seg[1])))
                elif seg[0] == "arc":
                    segments.append(("arc", math.radians(float(seg[1])), float(seg[2])))
                else:
                    raise GeometryError(f"unknown segment kind {seg[0]!r}")
        return build_cross_map(
            radius=cfg.get("radius", 2.0),
            lane_width=cfg.get("lane_width", 0.8),
            lane_count=cfg.get("lane_count", 2),
            segments=segments,
        )
    if kind == "waypoints":
        wps = np.asarray(cfg["waypoints"], dtype=float)
        lane_width = cfg.get("lane_width", 0.8)
        lane_count = cfg.get("lane_count", 2)
        base = build_reference_path(wps, closed=True)
        return _build_track(
            base.points,
            base.headings,
            lane_width,
            lane_count,
            {"kind": "waypoints", "lane_width": lane_width, "lane_count": lane_count},
        )
    raise GeometryError(f"unknown map kind {kind!r}")


