"""Episode trace logs: line-delimited JSON records, one per simulation step,
preceded by a config record.  Metrics replay and rule-verdict regression
checks both operate purely on these files."""

from __future__ import annotations

import json

from .rules import AtomicValuation, eval_rules
from .training import Metrics, metrics_from_rows


class TraceError(ValueError):
    pass


def write_trace(path: str, config: dict, rows: list[dict]) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"type": "config", **config}, sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_trace(path: str) -> tuple[dict, list[dict]]:
    config = None
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("type") == "config":
                config = record
            elif record.get("type") == "step":
                rows.append(record)
            else:
                raise TraceError(f"unknown record type {record.get('type')!r}")
    if config is None:
        raise TraceError(f"{path} has no config record")
    if not rows:
        raise TraceError(f"{path} has no step records")
    return config, rows


def replay_metrics(path: str) -> Metrics:
    """Recompute the test metrics from a recorded trace alone."""
    config, rows = read_trace(path)
    dt = config.get("dt", 0.02)
    return metrics_from_rows(rows, dt, config.get("config_hash", ""))


def check_trace(path: str) -> list[dict]:
    """Re-evaluate the rules on each recorded valuation and report mismatches."""
    _, rows = read_trace(path)
    mismatches = []
    for row in rows:
        valuation = AtomicValuation.from_dict(row["atoms"])
        verdict = eval_rules(valuation)
        expected = verdict.as_dict()
        recorded = {k: [bool(v[0]), bool(v[1])] for k, v in row["rules"].items()}
        got = {k: [bool(v[0]), bool(v[1])] for k, v in expected.items()}
        if recorded != got or int(row["reward"]) != verdict.step_reward:
            mismatches.append(
                {"step": row["step"], "recorded": recorded, "recomputed": got,
                 "recorded_reward": row["reward"], "recomputed_reward": verdict.step_reward}
            )
    return mismatches
