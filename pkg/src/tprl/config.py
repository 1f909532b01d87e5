"""Run configuration: one place for every tunable, JSON in and out.

The shipped default configuration reproduces the published hyperparameter
table verbatim (learning rates 1e-3/3e-4, 80 gradient steps, clip 0.2,
discount 0.99, minibatch 46, 20000 steps per epoch, action interval 300,
advantage discount 0.97, tanh networks).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .ddqn import DdqnConfig
from .planner import PlannerConfig
from .ppo import PpoConfig
from .rules import RuleThresholds
from .world import ScenarioConfig

VARIANTS = ("noskip", "periodskip", "tprl")
ALGOS = ("ppo", "ddqn")

OBS_SCALES_DEFAULT = {"r_s": 7.0, "r_d": 1.6, "d_l": 0.8, "d_r": 0.8, "v": 1.0}

# Fully explicit map geometry so the config alone pins the tracks.
OVAL_MAP_DEFAULT = {
    "kind": "oval",
    "straight_length": 6.0,
    "radius": 1.6,
    "lane_width": 0.8,
    "lane_count": 2,
}
CROSS_MAP_DEFAULT = {
    "kind": "cross",
    "radius": 2.0,
    "lane_width": 0.8,
    "lane_count": 2,
}


class ConfigError(ValueError):
    pass


def normalize_variant(name: str) -> str:
    key = name.replace("_", "").replace("-", "").lower()
    if key not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return key


@dataclass
class RunConfig:
    algo: str = "ppo"
    variant: str = "tprl"
    seed: int = 0
    epochs: int = 250
    steps_per_epoch: int = 20_000  # simulation steps collected per epoch
    period: int = 300  # action sampling interval N, in simulation steps
    dt: float = 0.02
    map: dict = field(default_factory=lambda: dict(OVAL_MAP_DEFAULT))
    test_map: dict = field(default_factory=lambda: dict(CROSS_MAP_DEFAULT))
    laps_test: int = 10
    checkpoint_every: int = 25
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    ddqn: DdqnConfig = field(default_factory=DdqnConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    thresholds: RuleThresholds = field(default_factory=RuleThresholds)
    obs_scales: dict = field(default_factory=lambda: dict(OBS_SCALES_DEFAULT))

    def validate(self) -> "RunConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        cfg = replace(self, variant=normalize_variant(self.variant))
        if cfg.period <= 0 or cfg.steps_per_epoch <= 0 or cfg.epochs <= 0:
            raise ConfigError("epochs, steps_per_epoch and period must be positive")
        cfg.ppo.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        for key, typ in (
            ("scenario", ScenarioConfig),
            ("ppo", PpoConfig),
            ("ddqn", DdqnConfig),
            ("planner", PlannerConfig),
            ("thresholds", RuleThresholds),
        ):
            if key in data and isinstance(data[key], dict):
                data[key] = typ(**data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def load_run_config(path: str) -> RunConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return RunConfig.from_dict(data)


def save_run_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def default_run_config() -> RunConfig:
    """Full published-scale configuration (about a day of CPU per run)."""
    return RunConfig()


def desk_run_config() -> RunConfig:
    """Desk-scale configuration: 50 epochs of 6000 simulation steps."""
    return replace(default_run_config(), epochs=50, steps_per_epoch=6_000, checkpoint_every=10)


def smoke_run_config() -> RunConfig:
    """Tiny liveness configuration for tests."""
    return replace(default_run_config(), epochs=2, steps_per_epoch=1_200, checkpoint_every=1)
