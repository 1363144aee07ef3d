"""Run configuration: dataclass tree, JSON loading, and CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

from .aoi import TargetConfig, WeightParams
from .channel import ChannelConfig
from .geometry import SCENARIO_KINDS
from .mac import MacConfig


class ConfigError(ValueError):
    pass


FIXED = "fixed"
ADAPTIVE = "adaptive"


@dataclass
class ControllerConfig:
    gain_p: float = 1.0
    gain_i: float = 0.0
    gain_d: float = 0.1
    interval_min: float = 0.010
    interval_max: float = 100.0
    derivative_form: str = "as_written"
    # Feedback records older than this many controller periods are evicted.
    feedback_max_age_periods: float = 2.0


@dataclass
class ScenarioConfig:
    kind: str = "freespace_static"
    vehicle_count: int = 200
    sim_time: float = 10.0
    warmup: float = 0.0
    beacon_mode: str = FIXED
    rate_hz: float = 10.0  # fixed rate, or the initial rate in adaptive mode
    weights: list[WeightParams] = field(default_factory=lambda: [WeightParams(0.0, 0.0)])
    target: TargetConfig = field(default_factory=TargetConfig)
    seed: int = 1
    speed: float = 13.9  # m/s for the mobile kinds
    block_pitch: float = 50.0
    bounds: tuple[float, float] = (550.0, 550.0)
    mobility_step: float = 0.1
    # Optional explicit (x, y, heading) placements; overrides random spawning.
    positions: list[tuple[float, float, float]] | None = None
    record_receptions: bool = False

    def validate(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.vehicle_count < 2:
            raise ConfigError("vehicle_count must be >= 2")
        if not (0 <= self.warmup < self.sim_time):
            raise ConfigError("warmup must satisfy 0 <= warmup < sim_time")
        if self.beacon_mode not in (FIXED, ADAPTIVE):
            raise ConfigError(f"unknown beacon mode {self.beacon_mode!r}")
        if self.rate_hz <= 0:
            raise ConfigError("rate_hz must be positive")
        if not self.weights:
            raise ConfigError("at least one weighting configuration is required")
        if self.positions is not None and len(self.positions) != self.vehicle_count:
            raise ConfigError("positions must list one entry per vehicle")
        if self.mobility_step <= 0:
            raise ConfigError("mobility_step must be positive")

    @property
    def is_static(self) -> bool:
        return self.kind.endswith("_static")


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    mac: MacConfig = field(default_factory=MacConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def validate(self) -> None:
        self.scenario.validate()
        self.channel.validate()
        self.mac.validate()
        if self.controller.interval_min <= 0 or self.controller.interval_min >= self.controller.interval_max:
            raise ConfigError("controller interval bounds must satisfy 0 < min < max")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"]["weights"] = [[w.alpha, w.beta] for w in self.scenario.weights]
        d["scenario"]["target"] = self.scenario.target.target
        d["scenario"]["bounds"] = list(self.scenario.bounds)
        return d


def _apply_section(obj, values: dict, section: str) -> None:
    for key, value in values.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown key {section}.{key}")
        setattr(obj, key, value)


def from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a JSON-compatible dict; unknown keys are rejected."""
    cfg = RunConfig()
    known = {"scenario", "channel", "mac", "controller"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
    scenario = dict(data.get("scenario", {}))
    if "weights" in scenario:
        scenario["weights"] = [WeightParams(float(a), float(b)) for a, b in scenario["weights"]]
    if "target" in scenario:
        scenario["target"] = TargetConfig(float(scenario["target"]))
    if "bounds" in scenario:
        scenario["bounds"] = tuple(float(v) for v in scenario["bounds"])
    if "positions" in scenario and scenario["positions"] is not None:
        scenario["positions"] = [tuple(float(v) for v in p) for p in scenario["positions"]]
    _apply_section(cfg.scenario, scenario, "scenario")
    _apply_section(cfg.channel, dict(data.get("channel", {})), "channel")
    _apply_section(cfg.mac, dict(data.get("mac", {})), "mac")
    _apply_section(cfg.controller, dict(data.get("controller", {})), "controller")
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return from_dict(data)
