import math

import numpy as np
import pytest
from pytest import approx

from tprl.geometry import (
    FrenetCoord,
    GeometryError,
    build_cross_map,
    build_oval_map,
    build_reference_path,
    frenet_project,
    frenet_to_cartesian,
    lane_boundary_distances,
    map_from_config,
    project_local,
    wrap_signed,
)


def circle_waypoints(radius, n=2000, center=(0.0, 0.0)):
    theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.column_stack(
        [center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)]
    )


class TestBuildReferencePath:
    def test_straight_segment(self):
        path = build_reference_path([(0.0, 0.0), (10.0, 0.0)], closed=False)
        assert path.total_length == approx(10.0)
        assert np.all(np.abs(path.headings) < 1e-12)
        assert path.cumulative_arc_length[0] == 0.0
        assert np.all(np.diff(path.cumulative_arc_length) > 0)

    def test_resampling_spacing(self):
        path = build_reference_path([(0.0, 0.0), (3.0, 4.0), (6.0, 0.0)], closed=False)
        gaps = np.diff(path.cumulative_arc_length)
        assert gaps.max() <= 0.05 + 1e-12

    def test_square_loop_arc_length(self):
        # Oracle: exact polyline perimeter of the unit square.
        square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        path = build_reference_path(square, closed=True)
        assert 4.0 <= path.total_length <= 4.2

    def test_two_waypoints_closed_is_error(self):
        with pytest.raises(GeometryError):
            build_reference_path([(0.0, 0.0), (1.0, 0.0)], closed=True)

    def test_duplicate_waypoints_error(self):
        with pytest.raises(GeometryError):
            build_reference_path([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)], closed=False)

    def test_single_waypoint_error(self):
        with pytest.raises(GeometryError):
            build_reference_path([(0.0, 0.0)], closed=False)


class TestFrenetProject:
    def test_perpendicular_drop(self):
        path = build_reference_path([(0.0, 0.0), (10.0, 0.0)], closed=False)
        fc = frenet_project(path, (2.0, 0.5))
        assert fc.s == approx(2.0, abs=1e-9)
        assert fc.d == approx(0.5, abs=1e-9)

    def test_point_on_path(self):
        path = build_reference_path([(0.0, 0.0), (10.0, 0.0)], closed=False)
        fc = frenet_project(path, (3.0, 0.0))
        assert fc.s == approx(3.0, abs=1e-9)
        assert fc.d == approx(0.0, abs=1e-12)

    def test_circle_projection(self):
        # Oracle: closed-form circle geometry. s = R * angle; a point outside
        # a counterclockwise circle sits on the negative-d (outward) side.
        path = build_reference_path(circle_waypoints(5.0), closed=True)
        fc = frenet_project(path, (5.5 * math.cos(math.pi / 2), 5.5 * math.sin(math.pi / 2)))
        assert fc.s == approx(5.0 * math.pi / 2.0, abs=1e-3)
        assert fc.d == approx(-0.5, abs=1e-4)

    def test_seam_wrap_continuity(self):
        path = build_reference_path(circle_waypoints(5.0), closed=True)
        just_past = frenet_to_cartesian(path, FrenetCoord(0.001, 0.1))
        fc = frenet_project(path, just_past[:2])
        assert fc.s < 0.01  # near zero, never near total_length


class TestFrenetToCartesian:
    def test_on_path_point(self):
        path = build_reference_path([(0.0, 0.0), (10.0, 0.0)], closed=False)
        x, y, heading = frenet_to_cartesian(path, FrenetCoord(2.0, 0.0))
        assert (x, y) == (approx(2.0), approx(0.0))
        assert heading == approx(0.0)

    def test_normal_offset(self):
        path = build_reference_path([(0.0, 0.0), (10.0, 0.0)], closed=False)
        x, y, _ = frenet_to_cartesian(path, FrenetCoord(2.0, 0.5))
        assert (x, y) == (approx(2.0), approx(0.5))

    def test_fold_over_error(self):
        path = build_reference_path(circle_waypoints(2.0), closed=True)
        # Counterclockwise circle: the concave side is d > 0 (toward center).
        with pytest.raises(GeometryError):
            frenet_to_cartesian(path, FrenetCoord(1.0, 2.5))

    def test_roundtrip_oval(self, oval_map):
        rng = np.random.default_rng(1)
        ref = oval_map.reference
        worst = 0.0
        for _ in range(1000):
            s = rng.uniform(0.0, ref.total_length)
            d = rng.uniform(-0.32, 0.32)
            x, y, _ = frenet_to_cartesian(ref, FrenetCoord(s, d))
            fc = frenet_project(ref, (x, y))
            x2, y2, _ = frenet_to_cartesian(ref, fc)
            worst = max(worst, math.hypot(x2 - x, y2 - y))
        assert worst < 1e-6


class TestLaneBoundaryDistances:
    def test_centered(self, oval_map):
        d_l, d_r = lane_boundary_distances(oval_map, FrenetCoord(1.0, 0.0), 0)
        assert d_l == approx(0.4)
        assert d_r == approx(0.4)

    def test_left_of_center(self, oval_map):
        d_l, d_r = lane_boundary_distances(oval_map, FrenetCoord(1.0, 0.1), 0)
        assert d_l == approx(0.3)
        assert d_r == approx(0.5)

    def test_on_left_boundary(self, oval_map):
        d_l, d_r = lane_boundary_distances(oval_map, FrenetCoord(1.0, 0.4), 0)
        assert d_l == approx(0.0)
        assert d_r == approx(0.8)

    def test_sum_is_lane_width(self, oval_map):
        rng = np.random.default_rng(2)
        for _ in range(200):
            d = rng.uniform(-0.4, 0.4)
            d_l, d_r = lane_boundary_distances(oval_map, FrenetCoord(0.0, d), 1)
            assert d_l + d_r == approx(0.8, abs=1e-9)

    def test_invalid_lane(self, oval_map):
        with pytest.raises(GeometryError):
            lane_boundary_distances(oval_map, FrenetCoord(0.0, 0.0), 5)


class TestMaps:
    def test_oval_perimeter(self):
        # Oracle: analytic perimeter 2a + 2 pi r.
        m = build_oval_map(straight_length=4.0, radius=1.0)
        assert m.total_length == approx(2 * 4.0 + 2 * math.pi * 1.0, abs=5e-3)

    def test_rightmost_lane_index(self, oval_map):
        assert oval_map.rightmost_lane_index == 0
        assert oval_map.lane_count == 2

    def test_zero_lane_width_error(self):
        with pytest.raises(GeometryError):
            build_oval_map(lane_width=0.0)

    def test_negative_radius_error(self):
        with pytest.raises(GeometryError):
            build_cross_map(radius=-1.0)

    def test_cross_has_one_conflict_pair(self, cross_map):
        assert len(cross_map.conflict_zones) == 1

    def test_oval_has_no_conflicts(self, oval_map):
        assert oval_map.conflict_zones == []

    def test_adjacent_lane_separation(self, oval_map, cross_map):
        for track in (oval_map, cross_map):
            lane1 = track.centerlines[1]
            hint = 0.0
            for s1 in np.linspace(0.0, lane1.total_length, 1000, endpoint=False):
                x, y = lane1.position(s1)
                fc = frenet_project(track.reference, (x, y), s_hint=hint)
                hint = fc.s
                assert abs(fc.d - track.lane_width) < 1e-3

    def test_map_from_config_presets(self):
        m = map_from_config({"kind": "oval", "straight_length": 2.0, "radius": 0.8})
        assert m.meta["straight_length"] == 2.0
        with pytest.raises(GeometryError):
            map_from_config({"kind": "hexagon"})

    def test_cross_custom_segments(self):
        from tprl.geometry import cross_segments

        segs = []
        for seg in cross_segments(2.5):
            if seg[0] == "straight":
                segs.append(["straight", seg[1]])
            else:
                segs.append(["arc", math.degrees(seg[1]), seg[2]])
        m = map_from_config({"kind": "cross", "radius": 2.5, "segments": segs})
        assert len(m.conflict_zones) == 1
        with pytest.raises(GeometryError):
            map_from_config({"kind": "cross", "segments": [["straight", 2.0], ["arc", 90.0, 1.0]]})


class TestWrap:
    def test_wrap_signed_range(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            x = rng.uniform(-100, 100)
            w = wrap_signed(x, 14.0)
            assert -7.0 < w <= 7.0
            assert (x - w) % 14.0 == approx(0.0, abs=1e-9)

    def test_wrap_signed_half(self):
        assert wrap_signed(7.0, 14.0) == 7.0
        assert wrap_signed(-7.0, 14.0) == 7.0


class TestProjectLocal:
    def test_matches_global(self, oval_map):
        rng = np.random.default_rng(4)
        ref = oval_map.reference
        for _ in range(200):
            s = rng.uniform(0, ref.total_length)
            d = rng.uniform(-0.4, 1.2)
            x, y, _ = frenet_to_cartesian(ref, FrenetCoord(s, d))
            ps, pd = project_local(ref, x, y, s + rng.uniform(-0.1, 0.1))
            fc = frenet_project(ref, (x, y))
            assert ps == approx(fc.s, abs=1e-6)
            assert pd == approx(fc.d, abs=1e-9)
