"""Configuration tree for simulation, training, fuzzing and campaigns.

Every tunable lives in one nested dataclass so a campaign is fully described by
a single YAML file. Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


@dataclass
class SimConfig:
    dt: float = 0.1
    lane_width: float = 3.5
    vehicle_length: float = 4.8
    vehicle_width: float = 1.9
    v_max: float = 22.0
    a_acc: float = 2.5
    a_dec: float = 2.0
    a_brk: float = 6.0
    # Decelerate never takes a surrounding vehicle below this speed; Brake can.
    v_min: float = 2.0
    lane_change_duration: float = 1.5
    # Lower bound on longitudinal speed used for yaw during a lane change, so a
    # slow vehicle crabbing sideways does not spin its footprint.
    lane_change_yaw_speed_floor: float = 6.0
    v_reverse_max: float = 3.0


@dataclass
class ScenarioConfig:
    road: str = "Straight"
    lanes: int = 2
    n_surrounding: int = 3
    ego_spawn_s: float = 25.0
    ego_speed: float = 10.0
    # Surrounding vehicles spawn within this longitudinal window of the ego.
    sv_spawn_window: tuple[float, float] = (8.0, 30.0)
    sv_speed_jitter: float = 2.0
    destination_margin: float = 10.0
    min_step_cap: int = 600


@dataclass
class IdmParams:
    v0: float = 20.0
    T: float = 1.5
    a: float = 2.0
    b: float = 2.0
    delta: float = 4.0
    s0: float = 2.0

    def __post_init__(self) -> None:
        for name in ("v0", "T", "a", "b", "s0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IDM parameter {name} must be positive")
        if self.delta < 1:
            raise ValueError("IDM exponent delta must be >= 1")


@dataclass
class EscapeParams:
    """Thresholds for the boxed-in escape behaviour of an ego policy."""

    enabled: bool = True
    # Reverse: stopped, leader closer than this, a neighbour cutting in, rear clear.
    reverse_front_gap: float = 3.0
    reverse_rear_clear: float = 6.0
    reverse_accel: float = 1.5
    cut_in_lateral_speed: float = 0.3
    # Swerve off the outer edge when a collision is this close in time and no
    # lane is free.
    swerve_ttc: float = 0.6
    swerve_min_speed: float = 6.0


@dataclass
class HeuristicParams:
    target_speed: float = 15.0
    speed_gain: float = 0.8
    max_accel: float = 2.5
    brake_gap_factor: float = 0.5
    headway: float = 0.6
    follow_decel: float = 2.0
    sidestep_range: float = 10.0
    sidestep_gap_factor: float = 0.5


@dataclass
class SutConfig:
    kind: str = "idm"
    idm: IdmParams = field(default_factory=IdmParams)
    heuristic: HeuristicParams = field(default_factory=HeuristicParams)
    idm_escape: EscapeParams = field(default_factory=EscapeParams)
    heuristic_escape: EscapeParams = field(
        default_factory=lambda: EscapeParams(
            reverse_front_gap=5.0, reverse_rear_clear=3.0, swerve_ttc=1.2, swerve_min_speed=4.0
        )
    )
    sidestep_range: float = 20.0
    stop_range: float = 12.0
    stopped_speed: float = 0.5
    # An SV counts as occupying a lane once its body intrudes this far into it.
    lane_intrusion: float = 0.3


@dataclass
class RewardWeights:
    mu1: float = 0.7
    mu2: float = 0.01
    mu3: float = 0.5
    completion: float = 10.0
    d_enclosure: float = 0.3
    cos_eps: float = 0.001
    area_rtol: float = 1e-6
    literal_eq6_sign: bool = False

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and v < 0:
                raise ValueError(f"reward weight {f.name} must be non-negative")


@dataclass
class ArenaConfig:
    n_agents: int = 3
    box: float = 1.0
    evader_spawn: float = 0.1
    episode_cap: int = 200
    # Fraction of the previous movement vector shed each step before the new
    # increment is added. 1 makes the increment the movement vector itself;
    # 0 is pure accumulation, where a forward-only agent can never slow down.
    damping: float = 1.0
    agent_action_low: tuple[float, float] = (-0.1, 0.0)
    agent_action_high: tuple[float, float] = (0.1, 0.1)
    agent_vel_low: tuple[float, float] = (-0.1, 0.0)
    agent_vel_high: tuple[float, float] = (0.1, 0.1)
    evader_action_low: tuple[float, float] = (-0.05, -0.05)
    evader_action_high: tuple[float, float] = (0.05, 0.05)
    evader_vel_low: tuple[float, float] = (-0.05, 0.02)
    evader_vel_high: tuple[float, float] = (0.05, 0.05)
    evader: str = "learned"


@dataclass
class MaddpgConfig:
    hidden: int = 128
    layers: int = 2
    lr: float = 1e-3
    gamma: float = 0.95
    tau: float = 0.01
    batch_size: int = 256
    buffer_size: int = 100_000
    noise_init: float = 0.75
    noise_decay: float = 0.999995
    noise_floor: float = 0.01
    episodes: int = 600
    warmup: int = 2048
    update_every: int = 4
    q_divergence: float = 1e4
    seed: int = 0
    eval_episodes: int = 100


@dataclass
class FuzzerConfig:
    d_safe: float = 3.5
    d_constraint: float = 2.0
    side_behind_range: float = 10.0
    horizon: int = 100
    k_brk: int = 15
    k_dec: int = 15
    retrigger_prob: float = 0.5
    # Steps an SV stays under MARL control after a pattern hands it back.
    retrigger_cooldown: int = 10
    map_lateral: float = 0.01
    map_accel: float = 0.02
    # Simulator-side movement-vector bookkeeping.
    bridge_vy_low: float = -0.1
    bridge_bleed: float = 0.01
    bridge_bleed_below: float = 0.005


@dataclass
class GaConfig:
    population: int = 10
    crossover_rate: float = 0.9
    mutation_rate: float = 0.05
    violation_fitness: float = 20.0


@dataclass
class HarnessConfig:
    method: str = "marl_ot"
    budget: int = 200
    repetitions: int = 5
    seed: int = 0
    top_k: int = 5
    checkpoint: str | None = None
    single_rl_checkpoint: str | None = None
    trace_dir: str | None = None
    reverse_speed: float = -0.1
    reverse_steps: int = 5
    stall_speed: float = 0.1
    stall_steps: int = 100
    require_proximity: bool = True
    min_sv_near: int = 2


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sut: SutConfig = field(default_factory=SutConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    maddpg: MaddpgConfig = field(default_factory=MaddpgConfig)
    fuzzer: FuzzerConfig = field(default_factory=FuzzerConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)


def _build(cls: type, data: dict[str, Any]) -> Any:
    if not isinstance(data, dict):
        raise TypeError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise KeyError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value)
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any] | None) -> Config:
    return _build(Config, data or {})


def config_to_dict(cfg: Any) -> dict[str, Any]:
    def convert(obj: Any) -> Any:
        if dataclasses.is_dataclass(obj):
            return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        return obj

    return convert(cfg)


def load_config(path: str | Path) -> Config:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(cfg: Config, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def apply_overrides(cfg: Config, overrides: list[str]) -> Config:
    """Apply ``a.b=value`` overrides; values are parsed as YAML scalars."""
    data = config_to_dict(cfg)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override must look like key=value, got {item!r}")
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if p not in node:
                raise KeyError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise KeyError(f"unknown config key {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return config_from_dict(data)
