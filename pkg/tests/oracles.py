"""Independent oracles shared by the test modules.

These deliberately avoid the library's own checking code paths: clearance is
brute-force boundary sampling, accumulation is a literal power sum, and the
rule check reads the valuation dictionary directly.
"""

import math

import numpy as np

from tprl.world import VehicleState


def brute_force_period_reward(rewards, gamma: float) -> float:
    return sum(gamma ** n * r for n, r in enumerate(rewards))


def boundary_points(corners: np.ndarray, per_edge: int = 12) -> np.ndarray:
    pts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        for frac in np.linspace(0.0, 1.0, per_edge, endpoint=False):
            pts.append(a + frac * (b - a))
    return np.asarray(pts)


def min_clearance_dense(traj, prediction, dt: float = 0.01) -> float:
    """Minimum boundary-to-boundary distance between the interpolated ego
    footprint and the predicted obstacle footprint over a dense time grid."""
    s = traj.samples
    t_grid = np.arange(0.0, s[-1, 0] + dt, dt)
    xs = np.interp(t_grid, s[:, 0], s[:, 1])
    ys = np.interp(t_grid, s[:, 0], s[:, 2])
    ths = np.interp(t_grid, s[:, 0], s[:, 3])
    best = math.inf
    for t, x, y, th in zip(t_grid, xs, ys, ths):
        ego = VehicleState(float(x), float(y), float(th), 0.0, 0)
        ego_pts = boundary_points(ego.footprint())
        obs_pts = boundary_points(prediction.footprint_at(float(t)))
        d = np.hypot(
            ego_pts[:, None, 0] - obs_pts[None, :, 0],
            ego_pts[:, None, 1] - obs_pts[None, :, 1],
        ).min()
        best = min(best, float(d))
    return best


def step_local_rule_check(atoms: dict) -> dict:
    """Brute-force evaluator of the two premise/conclusion rules straight off
    the proposition dictionary."""
    r1_premise = not atoms["dense"]
    r1_violated = r1_premise and not atoms["rightmost_lane"]
    r2_premise = atoms["lane_change"]
    r2_violated = r2_premise and not atoms["sd_front"]
    return {
        "R1": (r1_premise, r1_violated),
        "R2": (r2_premise, r2_violated),
        "reward": -(int(r1_violated) + int(r2_violated)),
    }
