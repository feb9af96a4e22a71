"""Run configuration: typed sections, defaults from the packaged JSON, strict loading."""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for invalid or unknown configuration entries."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class QuadrotorParams:
    mass: float
    inertia: tuple
    gravity: float
    arm_length: float
    thrust_coefficient: float
    torque_coefficient: float
    u_min: float
    u_max: float

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(v) for v in self.inertia))
        _require(self.mass > 0, "quadrotor.mass must be > 0")
        _require(len(self.inertia) == 3 and min(self.inertia) > 0,
                 "quadrotor.inertia needs 3 positive entries")
        _require(self.gravity > 0, "quadrotor.gravity must be > 0")
        _require(self.arm_length > 0, "quadrotor.arm_length must be > 0")
        _require(self.thrust_coefficient > 0, "quadrotor.thrust_coefficient must be > 0")
        _require(self.torque_coefficient > 0, "quadrotor.torque_coefficient must be > 0")
        _require(self.u_min >= 0, "quadrotor.u_min must be >= 0")
        _require(self.u_max > self.u_min, "quadrotor.u_max must exceed u_min")
        hover = self.mass * self.gravity / (4 * self.thrust_coefficient)
        _require(self.u_min < hover < self.u_max, "hover input must lie inside motor bounds")

    @property
    def J(self) -> np.ndarray:
        return np.array(self.inertia)

    @property
    def u_hover(self) -> np.ndarray:
        return np.full(4, self.mass * self.gravity / (4 * self.thrust_coefficient))


@dataclass(frozen=True)
class GPConfig:
    kernel: str = "rational_quadratic"
    signal_std: float = 0.05
    lengthscales: tuple = (0.1, 0.1, 0.15)
    alpha: float = 1.0
    noise_std: float = 0.002
    grid_search: bool = False
    region_margin: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        _require(self.kernel in ("rational_quadratic", "squared_exponential"),
                 f"unknown gp.kernel {self.kernel!r}")
        _require(self.signal_std > 0, "gp.signal_std must be > 0")
        _require(len(self.lengthscales) == 3 and min(self.lengthscales) > 0,
                 "gp.lengthscales needs 3 positive entries")
        _require(self.alpha > 0, "gp.alpha must be > 0")
        _require(self.noise_std > 0, "gp.noise_std must be > 0")
        _require(self.region_margin >= 0, "gp.region_margin must be >= 0")


@dataclass(frozen=True)
class MPCConfig:
    dt: float = 0.02
    horizon: int = 15
    q_position: float = 100.0
    q_attitude: float = 10.0
    q_velocity: float = 10.0
    q_rates: float = 1.0
    r_input: float = 0.1
    position_bound: float = 2.0
    attitude_bound: float = 0.5
    rho: float = 0.1
    sigma: float = 1e-6
    relaxation: float = 1.6
    max_iters: int = 200
    tol: float = 1e-5
    relinearize_iters: int = 2
    fullgp_outer_iters: int = 3
    fullgp_input_tol: float = 1e-4

    def __post_init__(self):
        _require(self.dt > 0, "mpc.dt must be > 0")
        _require(self.horizon >= 2, "mpc.horizon must be >= 2")
        for name in ("q_position", "q_attitude", "q_velocity", "q_rates"):
            _require(getattr(self, name) >= 0, f"mpc.{name} must be >= 0")
        _require(self.r_input > 0, "mpc.r_input must be > 0")
        _require(self.position_bound > 0 and self.attitude_bound > 0, "mpc bounds must be > 0")
        _require(self.rho > 0 and self.sigma > 0, "mpc.rho and mpc.sigma must be > 0")
        _require(0 < self.relaxation < 2, "mpc.relaxation must be in (0, 2)")
        _require(self.max_iters >= 1 and self.tol > 0, "mpc.max_iters >= 1 and mpc.tol > 0")
        _require(self.relinearize_iters >= 1, "mpc.relinearize_iters must be >= 1")
        _require(self.fullgp_outer_iters >= 1, "mpc.fullgp_outer_iters must be >= 1")


@dataclass(frozen=True)
class DownwashParams:
    peak_force: float = 0.0883
    radial_width: float = 0.1
    vertical_decay: float = 0.2
    reference_separation: float = 0.3
    activation_dz: float = 0.05
    clamp_factor: float = 3.0
    noise_std: float = 0.002
    disturb_upper: bool = False

    def __post_init__(self):
        _require(self.peak_force > 0, "downwash.peak_force must be > 0")
        _require(self.radial_width > 0 and self.vertical_decay > 0
                 and self.reference_separation > 0, "downwash lengths must be > 0")
        _require(self.activation_dz >= 0, "downwash.activation_dz must be >= 0")
        _require(self.clamp_factor > 0, "downwash.clamp_factor must be > 0")
        _require(self.noise_std >= 0, "downwash.noise_std must be >= 0")


@dataclass(frozen=True)
class PIDConfig:
    xy_gains: tuple = (6.0, 0.5, 4.0)
    z_gains: tuple = (25.0, 2.0, 10.0)
    attitude_gains: tuple = (400.0, 40.0)
    yaw_gains: tuple = (100.0, 20.0)
    integrator_limit: float = 0.3
    max_tilt: float = 0.5

    def __post_init__(self):
        for name, n in (("xy_gains", 3), ("z_gains", 3), ("attitude_gains", 2), ("yaw_gains", 2)):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            _require(len(vals) == n and min(vals) >= 0, f"pid.{name} needs {n} entries >= 0")
        _require(self.integrator_limit > 0, "pid.integrator_limit must be > 0")
        _require(0 < self.max_tilt < np.pi / 2, "pid.max_tilt must be in (0, pi/2)")


CONTROLLERS = ("pid", "linmpc", "linmpc-lingp", "mpc-lingp", "mpc-fullgp")


@dataclass(frozen=True)
class ScenarioConfig:
    z0: float = 0.5
    dd: float = 0.4
    half_span: float = 0.5
    duration: float = 6.0
    initial_position_std: float = 0.005
    upper_controller: str = "linmpc"

    def __post_init__(self):
        _require(self.z0 > 0 and self.dd > 0, "scenario.z0 and scenario.dd must be > 0")
        _require(self.half_span > 0 and self.duration > 0, "scenario spans must be > 0")
        _require(self.initial_position_std >= 0, "scenario.initial_position_std must be >= 0")
        _require(self.upper_controller in CONTROLLERS,
                 f"unknown scenario.upper_controller {self.upper_controller!r}")


@dataclass(frozen=True)
class CollectConfig:
    passes: int = 30
    noise_std: float = 0.002

    def __post_init__(self):
        _require(self.passes >= 1, "collect.passes must be >= 1")
        _require(self.noise_std >= 0, "collect.noise_std must be >= 0")


@dataclass(frozen=True)
class BOConfig:
    episodes: int = 15
    region_xy: float = 0.3
    region_z: tuple = (0.15, 0.5)
    grid_resolution: int = 21
    beta_delta: float = 0.1
    force_weight: float = 1.0
    sigma_force_weight: float = 0.0
    perf_signal_std: float = 1.0
    perf_lengthscales: tuple = (0.3, 0.1, 0.1)
    perf_noise_std: float = 0.1
    perf_groups: tuple = ((0, 1, 2),)
    divergence_limit: float = 2.0
    divergence_penalty: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "region_z", tuple(float(v) for v in self.region_z))
        object.__setattr__(self, "perf_lengthscales",
                           tuple(float(v) for v in self.perf_lengthscales))
        object.__setattr__(self, "perf_groups",
                           tuple(tuple(int(i) for i in g) for g in self.perf_groups))
        _require(self.episodes >= 1, "bo.episodes must be >= 1")
        _require(self.region_xy > 0, "bo.region_xy must be > 0")
        _require(len(self.region_z) == 2 and 0 < self.region_z[0] < self.region_z[1],
                 "bo.region_z must be an increasing positive pair")
        _require(self.grid_resolution >= 2, "bo.grid_resolution must be >= 2")
        _require(0 < self.beta_delta < 1, "bo.beta_delta must be in (0, 1)")
        _require(self.perf_signal_std > 0 and self.perf_noise_std > 0,
                 "bo perf GP stds must be > 0")
        _require(len(self.perf_lengthscales) == 3 and min(self.perf_lengthscales) > 0,
                 "bo.perf_lengthscales needs 3 positive entries")
        _require(self.divergence_limit > 0, "bo.divergence_limit must be > 0")

    def beta(self, t: int) -> float:
        """Confidence weight for episode ``t`` (1-based)."""
        return 2.0 * np.log(t**2 * np.pi**2 / (6.0 * self.beta_delta))


@dataclass(frozen=True)
class BenchmarkConfig:
    controllers: tuple = ("pid", "linmpc-lingp", "mpc-lingp", "mpc-fullgp")
    dd_list: tuple = (0.5, 0.4, 0.3, 0.2)
    seeds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "controllers", tuple(self.controllers))
        object.__setattr__(self, "dd_list", tuple(float(v) for v in self.dd_list))
        for c in self.controllers:
            _require(c in CONTROLLERS, f"unknown controller {c!r}")
        _require(all(d > 0 for d in self.dd_list), "benchmark.dd_list entries must be > 0")
        _require(self.seeds >= 1, "benchmark.seeds must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    quadrotor: QuadrotorParams
    gp: GPConfig = field(default_factory=GPConfig)
    mpc: MPCConfig = field(default_factory=MPCConfig)
    downwash: DownwashParams = field(default_factory=DownwashParams)
    pid: PIDConfig = field(default_factory=PIDConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    bo: BOConfig = field(default_factory=BOConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    seed: int = 0
    output_dir: str = "runs"
    record_timing: bool = True
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        _require(self.schema_version == SCHEMA_VERSION,
                 f"unsupported schema_version {self.schema_version}")
        _require(self.seed >= 0, "seed must be >= 0")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def replace(self, **sections: Any) -> "RunConfig":
        """Return a copy with top-level fields or whole sections replaced."""
        return dataclasses.replace(self, **sections)

    def override(self, section: str, **values: Any) -> "RunConfig":
        """Return a copy with individual fields of one section replaced."""
        sub = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **{section: sub})


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "quadrotor": QuadrotorParams,
    "gp": GPConfig,
    "mpc": MPCConfig,
    "downwash": DownwashParams,
    "pid": PIDConfig,
    "scenario": ScenarioConfig,
    "collect": CollectConfig,
    "bo": BOConfig,
    "benchmark": BenchmarkConfig,
}


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def default_dict() -> dict:
    text = resources.files("lingp_mpc").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def from_dict(data: dict) -> RunConfig:
    """Build a validated config from a (partial) dict layered over the defaults."""
    base = default_dict()
    unknown = sorted(set(data) - set(base))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    merged = _merge(base, data)
    kwargs = {}
    for key, val in merged.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], val, key)
        else:
            kwargs[key] = val
    return RunConfig(**kwargs)


def load_config(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return from_dict({})
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def default_config() -> RunConfig:
    return from_dict({})


# Stable identifiers for the named random sub-streams derived from the root seed.
_STREAMS = {"noise": 1, "bo": 2, "scenario": 3, "collect": 4, "random_targets": 5}


def rng_for(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``."""
    return np.random.default_rng([int(seed), _STREAMS[stream], *map(int, extra)])
