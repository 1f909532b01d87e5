"""Traffic-rule engine: atomic propositions over the world state, globally
scoped premise/conclusion rules, and the per-step reward in {-2, -1, 0}.

Each rule has the shape "globally (premise implies conclusion)" and is
enforced as a per-step check: a step violates a rule when its premise holds
and its conclusion does not, costing reward -1 per violated rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import TrackMap, wrap_signed, wrap_angle
from .world import WorldState


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class RuleThresholds:
    r_dense: float = 2.0  # m, proximity radius for the dense predicate
    dense_vehicle_count: int = 1  # vehicles within r_dense needed for dense
    t_headway: float = 1.0  # s, safe-distance headway
    d_min: float = 0.3  # m, safe-distance floor


@dataclass(frozen=True)
class AtomicValuation:
    """Per-step proposition values.

    Relational propositions (left/right/in_front/behind) are stored as
    target-relative-to-ego; dense, sd_front, sd_rear, lane_change and
    rightmost_lane are ego-centric.
    """

    dense: bool
    right: bool
    left: bool
    in_front: bool
    behind: bool
    sd_front: bool
    sd_rear: bool
    lane_change: bool
    rightmost_lane: bool

    def as_dict(self) -> dict:
        return {
            "dense": bool(self.dense),
            "right": bool(self.right),
            "left": bool(self.left),
            "in_front": bool(self.in_front),
            "behind": bool(self.behind),
            "sd_front": bool(self.sd_front),
            "sd_rear": bool(self.sd_rear),
            "lane_change": bool(self.lane_change),
            "rightmost_lane": bool(self.rightmost_lane),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AtomicValuation":
        return cls(**{k: bool(d[k]) for k in cls.__dataclass_fields__})


# Minimal formula representation.  The propositional fragment plus implication
# is evaluated per step; the temporal constructors exist so rules can be
# written down in full generality but they are not evaluated here.


class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    arg: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula


@dataclass(frozen=True)
class Finally(Formula):
    arg: Formula


def eval_formula(formula: Formula, valuation: AtomicValuation) -> bool:
    """Evaluate the step-local fragment of a formula."""
    if isinstance(formula, Atom):
        try:
            return bool(getattr(valuation, formula.name))
        except AttributeError:
            raise RuleError(f"unknown atomic proposition {formula.name!r}") from None
    if isinstance(formula, Not):
        return not eval_formula(formula.arg, valuation)
    if isinstance(formula, And):
        return eval_formula(formula.left, valuation) and eval_formula(formula.right, valuation)
    if isinstance(formula, Or):
        return eval_formula(formula.left, valuation) or eval_formula(formula.right, valuation)
    if isinstance(formula, Implies):
        return (not eval_formula(formula.left, valuation)) or eval_formula(formula.right, valuation)
    raise RuleError(f"temporal operator {type(formula).__name__} is not step-evaluable")


@dataclass(frozen=True)
class Rule:
    """A globally scoped premise/conclusion rule."""

    name: str
    premise: Formula
    conclusion: Formula


DEFAULT_RULES = (
    Rule("R1", premise=Not(Atom("dense")), conclusion=Atom("rightmost_lane")),
    Rule("R2", premise=Atom("lane_change"), conclusion=Atom("sd_front")),
)


@dataclass(frozen=True)
class RuleCheck:
    name: str
    premise_active: bool
    violated: bool


@dataclass(frozen=True)
class RuleVerdict:
    checks: tuple[RuleCheck, ...]
    step_reward: int

    def as_dict(self) -> dict:
        return {c.name: [bool(c.premise_active), bool(c.violated)] for c in self.checks}


def eval_atomics(world: WorldState, track_map: TrackMap, thresholds: RuleThresholds = RuleThresholds()) -> AtomicValuation:
    """Evaluate all atomic propositions for the current step."""
    ego, target = world.ego, world.target
    et, tt = world.ego_track, world.target_track
    total = track_map.total_length
    w = track_map.lane_width

    gap_euclid = math.hypot(target.x - ego.x, target.y - ego.y)
    dense = (1 if gap_euclid < thresholds.r_dense else 0) >= thresholds.dense_vehicle_count

    ds_te = wrap_signed(tt.s - et.s, total)  # target minus ego along the path
    r_d = tt.d - et.d
    same_band = abs(r_d) < w / 2.0
    in_front = same_band and ds_te > 0.0
    behind = same_band and ds_te < 0.0
    left = tt.lane > et.lane
    right = tt.lane < et.lane

    half_lengths = (ego.length + target.length) / 2.0
    same_lane = tt.lane == et.lane
    if same_lane and ds_te > 0.0:
        gap_front = ds_te - half_lengths
        sd_front = gap_front >= ego.v * thresholds.t_headway + thresholds.d_min
    else:
        sd_front = True  # no preceding vehicle in the ego's lane
    if same_lane and ds_te < 0.0:
        gap_rear = -ds_te - half_lengths
        sd_rear = gap_rear >= target.v * thresholds.t_headway + thresholds.d_min
    else:
        sd_rear = True

    # Lane-change: the footprint straddles a lane boundary, with a lane-index
    # change since the previous step as fallback.
    heading_err = wrap_angle(ego.theta - track_map.reference.heading_at(et.s))
    lateral_extent = (ego.length / 2.0) * abs(math.sin(heading_err)) + (
        ego.width / 2.0
    ) * abs(math.cos(heading_err))
    d_in_lane = track_map.in_lane_offset(et.d, et.lane)
    straddles = abs(d_in_lane) + lateral_extent > w / 2.0
    lane_change = straddles or (et.lane != et.prev_lane)

    rightmost_lane = et.lane == track_map.rightmost_lane_index

    return AtomicValuation(
        dense=dense,
        right=right,
        left=left,
        in_front=in_front,
        behind=behind,
        sd_front=sd_front,
        sd_rear=sd_rear,
        lane_change=lane_change,
        rightmost_lane=rightmost_lane,
    )


def eval_rules(valuation: AtomicValuation, rules: tuple[Rule, ...] = DEFAULT_RULES) -> RuleVerdict:
    """Per-step check of each rule's implication; reward is -1 per violation."""
    checks = []
    violations = 0
    for rule in rules:
        premise = eval_formula(rule.premise, valuation)
        violated = premise and not eval_formula(rule.conclusion, valuation)
        if violated:
            violations += 1
        checks.append(RuleCheck(rule.name, premise, violated))
    return RuleVerdict(checks=tuple(checks), step_reward=-violations)


@dataclass(frozen=True)
class ComplianceReport:
    per_rule: dict
    overall: float
    steps: int


def trace_compliance(verdicts) -> ComplianceReport:
    """Fraction of steps without violations, per rule and overall."""
    verdicts = list(verdicts)
    if not verdicts:
        raise RuleError("cannot compute compliance of an empty trace")
    n = len(verdicts)
    names = [c.name for c in verdicts[0].checks]
    ok_counts = {name: 0 for name in names}
    all_ok = 0
    for v in verdicts:
        clean = True
        for c in v.checks:
            if not c.violated:
                ok_counts[c.name] += 1
            else:
                clean = False
        if clean:
            all_ok += 1
    return ComplianceReport(
        per_rule={name: ok_counts[name] / n for name in names},
        overall=all_ok / n,
        steps=n,
    )
