import itertools
from dataclasses import replace

import numpy as np
import pytest
from pytest import approx

from tprl.geometry import FrenetCoord, frenet_to_cartesian
from tprl.rules import (
    Atom,
    AtomicValuation,
    Globally,
    Implies,
    Not,
    Rule,
    RuleError,
    RuleThresholds,
    eval_atomics,
    eval_formula,
    eval_rules,
    trace_compliance,
)
from tprl.world import ScenarioConfig, init_scenario


def place_target(world, track_map, ds, d, lane, speed=0.278):
    """Teleport the target relative to the ego along the reference path."""
    s = track_map.reference.wrap_s(world.ego_track.s + ds)
    x, y, th = frenet_to_cartesian(track_map.reference, FrenetCoord(s, d))
    target = replace(world.target, x=x, y=y, theta=th, v=speed, lane=lane)
    tt = replace(world.target_track, s=s, d=d, lane=lane, prev_lane=lane)
    return replace(world, target=target, target_track=tt)


def valuation(**overrides) -> AtomicValuation:
    base = dict(
        dense=False, right=False, left=False, in_front=False, behind=False,
        sd_front=True, sd_rear=True, lane_change=False, rightmost_lane=True,
    )
    base.update(overrides)
    return AtomicValuation(**base)


class TestEvalAtomics:
    def test_target_directly_ahead(self, oval_map):
        w = init_scenario(ScenarioConfig(), oval_map)
        w = place_target(w, oval_map, 1.0, 0.0, 0)
        v = eval_atomics(w, oval_map, RuleThresholds(r_dense=2.0))
        assert v.dense
        assert v.in_front and not v.behind
        assert not v.left and not v.right
        assert v.rightmost_lane

    def test_target_abreast_left(self, oval_map):
        w = init_scenario(ScenarioConfig(), oval_map)
        w = place_target(w, oval_map, 0.0, 0.8, 1)
        v = eval_atomics(w, oval_map)
        assert v.left and not v.right
        assert not v.in_front and not v.behind

    def test_safe_distance_threshold(self, oval_map):
        # gap 0.8 vs required 0.556 * 1.0 + 0.3 = 0.856 -> unsafe
        w = init_scenario(ScenarioConfig(), oval_map)
        halves = (w.ego.length + w.target.length) / 2.0
        w2 = place_target(w, oval_map, 0.8 + halves, 0.0, 0)
        v = eval_atomics(w2, oval_map, RuleThresholds(t_headway=1.0, d_min=0.3))
        assert not v.sd_front
        # gap 0.9 >= 0.856 -> safe
        w3 = place_target(w, oval_map, 0.9 + halves, 0.0, 0)
        v3 = eval_atomics(w3, oval_map, RuleThresholds(t_headway=1.0, d_min=0.3))
        assert v3.sd_front

    def test_mutual_exclusions_fuzzed(self, oval_map, cross_map):
        rng = np.random.default_rng(11)
        for track in (oval_map, cross_map):
            w0 = init_scenario(ScenarioConfig(), track)
            for _ in range(300):
                ds = rng.uniform(-track.total_length / 2, track.total_length / 2)
                d = rng.uniform(-0.4, 1.2)
                lane = track.lane_from_offset(d)
                w = place_target(w0, track, ds, d, lane, speed=rng.uniform(0, 1))
                v = eval_atomics(w, track)
                assert not (v.in_front and v.behind)
                assert not (v.left and v.right)

    def test_lane_change_straddle(self, oval_map):
        w = init_scenario(ScenarioConfig(), oval_map)
        # Move the ego onto the boundary between lanes 0 and 1.
        x, y, th = frenet_to_cartesian(oval_map.reference, FrenetCoord(w.ego_track.s, 0.4))
        w2 = replace(
            w,
            ego=replace(w.ego, x=x, y=y, theta=th),
            ego_track=replace(w.ego_track, d=0.4, lane=1, prev_lane=1),
        )
        v = eval_atomics(w2, oval_map)
        assert v.lane_change

    def test_lane_index_change_counts_as_lane_change(self, oval_map):
        w = init_scenario(ScenarioConfig(), oval_map)
        w2 = replace(w, ego_track=replace(w.ego_track, lane=1, prev_lane=0, d=0.8))
        v = eval_atomics(w2, oval_map)
        assert v.lane_change


class TestEvalRules:
    def test_r1_violation(self):
        v = valuation(dense=False, rightmost_lane=False)
        verdict = eval_rules(v)
        assert verdict.checks[0].violated
        assert verdict.step_reward == -1

    def test_r1_vacuous_when_dense(self):
        v = valuation(dense=True, rightmost_lane=False)
        verdict = eval_rules(v)
        assert not verdict.checks[0].violated
        assert verdict.step_reward == 0

    def test_both_violated(self):
        v = valuation(dense=False, rightmost_lane=False, lane_change=True, sd_front=False)
        verdict = eval_rules(v)
        assert verdict.step_reward == -2

    def test_violated_implies_premise(self):
        for bits in itertools.product([False, True], repeat=4):
            v = valuation(
                dense=bits[0], rightmost_lane=bits[1], lane_change=bits[2], sd_front=bits[3]
            )
            verdict = eval_rules(v)
            for check in verdict.checks:
                if check.violated:
                    assert check.premise_active
            assert verdict.step_reward in (-2, -1, 0)

    def test_formula_evaluation(self):
        v = valuation(dense=True)
        assert eval_formula(Atom("dense"), v)
        assert not eval_formula(Not(Atom("dense")), v)
        assert eval_formula(Implies(Not(Atom("dense")), Atom("lane_change")), v)

    def test_temporal_operator_rejected(self):
        with pytest.raises(RuleError):
            eval_formula(Globally(Atom("dense")), valuation())

    def test_unknown_atom_rejected(self):
        with pytest.raises(RuleError):
            eval_formula(Atom("warp_drive"), valuation())

    def test_custom_rule_set(self):
        rules = (Rule("R9", premise=Atom("behind"), conclusion=Atom("sd_rear")),)
        verdict = eval_rules(valuation(behind=True, sd_rear=False), rules)
        assert verdict.checks[0].name == "R9"
        assert verdict.step_reward == -1


class TestTraceCompliance:
    def _verdicts(self, flags):
        return [eval_rules(valuation(dense=False, rightmost_lane=not f)) for f in flags]

    def test_ratio(self):
        report = trace_compliance(self._verdicts([False] * 90 + [True] * 10))
        assert report.overall == approx(0.9)
        assert report.per_rule["R1"] == approx(0.9)
        assert report.per_rule["R2"] == approx(1.0)

    def test_all_compliant(self):
        report = trace_compliance(self._verdicts([False] * 25))
        assert report.overall == 1.0

    def test_alternating(self):
        report = trace_compliance(self._verdicts([True, False] * 50))
        assert report.overall == approx(0.5)

    def test_empty_error(self):
        with pytest.raises(RuleError):
            trace_compliance([])

    def test_overall_bounded_by_per_rule(self):
        rng = np.random.default_rng(12)
        verdicts = []
        for _ in range(500):
            verdicts.append(
                eval_rules(
                    valuation(
                        dense=bool(rng.integers(2)),
                        rightmost_lane=bool(rng.integers(2)),
                        lane_change=bool(rng.integers(2)),
                        sd_front=bool(rng.integers(2)),
                    )
                )
            )
        report = trace_compliance(verdicts)
        assert report.overall <= min(report.per_rule.values()) + 1e-12
