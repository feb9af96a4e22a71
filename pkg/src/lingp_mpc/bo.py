"""Bayesian-optimization-guided choice of interaction targets for data collection.

Each episode picks a relative offset ``x = p_upper - p_lower`` that the two
drones pass through at mid-time, flies the swap with LinMPC-LinGP using the
current force GP, logs the in-region force measurements and one performance
observation, and refits.

The acquisition is GP-UCB on a fixed grid over the interaction region::

    a(x) = mu_perf(x) + w_f mu_force(x) + beta_t sigma_perf(x) [+ w_s sigma_force(x)]

The performance GP is fit on the negated episode cost, and the force GP on the
downward force magnitude, both standardized, so that larger is better for
both mean terms.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, BOConfig, RunConfig, rng_for
from .gp import AdditiveGP, ForceDataset, GPModel, Kernel, ZeroForceModel, fit, kernel_from_config
from .simulator import Scenario, SimResult, run_scenario, swap_scenario

log = logging.getLogger(__name__)

CURVE_HEADER = ("episode", "J", "target_dx", "target_dy", "target_dz")


class RegionError(ValueError):
    """Target offset outside the interaction region."""


@dataclass(frozen=True)
class Region:
    """Axis-aligned box ``|dx|, |dy| <= xy``, ``z_lo <= dz <= z_hi``."""

    xy: float
    z_lo: float
    z_hi: float

    @classmethod
    def from_config(cls, cfg: BOConfig) -> "Region":
        return cls(cfg.region_xy, cfg.region_z[0], cfg.region_z[1])

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, 0.5 * (self.z_lo + self.z_hi)])

    def contains(self, x, tol: float = 1e-12) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = ((np.abs(x[..., 0]) <= self.xy + tol) & (np.abs(x[..., 1]) <= self.xy + tol)
                  & (x[..., 2] >= self.z_lo - tol) & (x[..., 2] <= self.z_hi + tol))
        return bool(inside) if x.ndim == 1 else inside

    def grid(self, n: int) -> np.ndarray:
        """``n**3`` points in lexicographic (dx, dy, dz) order."""
        xs = np.linspace(-self.xy, self.xy, n)
        zs = np.linspace(self.z_lo, self.z_hi, n)
        X, Y, Z = np.meshgrid(xs, xs, zs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.uniform(-self.xy, self.xy), rng.uniform(-self.xy, self.xy),
                         rng.uniform(self.z_lo, self.z_hi)])


@dataclass
class BOState:
    """Force and performance datasets plus the learning curve so far."""

    seed: int
    strategy: str = "ucb"
    force: ForceDataset = field(default_factory=lambda: ForceDataset(np.zeros((0, 3)), np.zeros(0)))
    perf_X: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    perf_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    curve: list = field(default_factory=list)

    @property
    def episode(self) -> int:
        return len(self.curve)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "strategy": self.strategy,
            "episode": self.episode,
            "force_X": self.force.X.tolist(),
            "force_y": self.force.y.tolist(),
            "perf_X": self.perf_X.tolist(),
            "perf_y": self.perf_y.tolist(),
            "curve": [list(row) for row in self.curve],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BOState":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported checkpoint schema {d.get('schema_version')!r}")
        return cls(
            seed=int(d["seed"]),
            strategy=d["strategy"],
            force=ForceDataset(np.array(d["force_X"], dtype=float).reshape(-1, 3),
                               np.array(d["force_y"], dtype=float)),
            perf_X=np.array(d["perf_X"], dtype=float).reshape(-1, 3),
            perf_y=np.array(d["perf_y"], dtype=float),
            curve=[tuple(row) for row in d["curve"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "BOState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_force_gp(data: ForceDataset, cfg: RunConfig):
    """Force GP used by the controller; ``ZeroForceModel`` while there is no data."""
    if len(data) == 0:
        return ZeroForceModel()
    return fit(data.X, data.y, kernel_from_config(cfg.gp), cfg.gp.noise_std**2)


def _standardize(y):
    y = np.asarray(y, dtype=float)
    mu = float(np.mean(y))
    sd = float(np.std(y))
    return (y - mu) / (sd if sd > 1e-12 else 1.0)


@dataclass
class Surrogates:
    """Standardized force and performance posteriors used by the acquisition."""

    force: AdditiveGP | None
    perf: AdditiveGP | None

    def force_mean(self, x):
        return np.zeros(len(x)) if self.force is None else self.force.mean(x)

    def force_std(self, x):
        return np.zeros(len(x)) if self.force is None else np.sqrt(self.force.var(x))

    def perf_mean(self, x):
        return np.zeros(len(x)) if self.perf is None else self.perf.mean(x)

    def perf_std(self, x, prior_std: float):
        if self.perf is None:
            return np.full(len(x), prior_std)
        return np.sqrt(self.perf.var(x))


def build_surrogates(state: BOState, cfg: RunConfig) -> Surrogates:
    """Fit the standardized GPs the acquisition adds together.

    Force targets are the downward force magnitude ``-fz``; performance
    targets are ``-J``.  Each is scaled to unit variance, which makes the
    force weight dimensionless.
    """
    bo = cfg.bo
    force = None
    if len(state.force):
        k = kernel_from_config(cfg.gp)
        scale = float(np.std(state.force.y)) or 1.0
        k = Kernel(k.kind, k.variance / scale**2, k.lengthscales, k.alpha)
        force = AdditiveGP(state.force.X, _standardize(-state.force.y), [k], [(0, 1, 2)],
                           (cfg.gp.noise_std / scale) ** 2)
    perf = None
    if len(state.perf_y):
        kernels = [Kernel(cfg.gp.kernel, bo.perf_signal_std**2 / len(bo.perf_groups),
                          tuple(bo.perf_lengthscales[i] for i in g), cfg.gp.alpha)
                   for g in bo.perf_groups]
        perf = AdditiveGP(state.perf_X, _standardize(-state.perf_y), kernels, bo.perf_groups,
                          bo.perf_noise_std**2)
    return Surrogates(force, perf)


def acquisition_surface(sur: Surrogates, X, beta: float, cfg: BOConfig) -> np.ndarray:
    score = (sur.perf_mean(X) + cfg.force_weight * sur.force_mean(X)
             + beta * sur.perf_std(X, cfg.perf_signal_std))
    if cfg.sigma_force_weight:
        score = score + cfg.sigma_force_weight * sur.force_std(X)
    return score


def acquire(state: BOState, cfg: RunConfig, beta: float | None = None) -> np.ndarray:
    """Grid maximizer of the UCB surface; region centre before any episode.

    Ties go to the lowest grid index, i.e. the lexicographically smallest offset.
    """
    region = Region.from_config(cfg.bo)
    if len(state.perf_y) == 0:
        return region.center
    t = state.episode + 1
    beta = cfg.bo.beta(t) if beta is None else float(beta)
    X = region.grid(cfg.bo.grid_resolution)
    score = acquisition_surface(build_surrogates(state, cfg), X, beta, cfg.bo)
    return X[int(np.argmax(score))].copy()


def plan_swap_through(target, cfg: RunConfig, controller: str = "linmpc-lingp") -> Scenario:
    """Swap scenario whose relative offset at mid-time equals ``target``."""
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not Region.from_config(cfg.bo).contains(target):
        raise RegionError(f"target {target.tolist()} is outside the interaction region")
    return swap_scenario(float(target[2]), cfg, controller,
                         offset_xy=(float(target[0]), float(target[1])), position_std=0.0)


@dataclass
class EpisodeResult:
    target: np.ndarray
    J: float
    X: np.ndarray  # in-region offsets
    y: np.ndarray  # measured z forces at those offsets
    result: SimResult


def run_episode(target, gp_force, cfg: RunConfig, seed: int, episode: int,
                controller: str = "linmpc-lingp", noise_std: float | None = None,
                solo: bool = False) -> EpisodeResult:
    """Fly one swap through ``target`` and score it.

    ``J`` is the mean absolute z error of the lower drone, or the divergence
    penalty if the episode was aborted.  ``solo`` drops the upper drone (no
    downwash at all).
    """
    scenario = plan_swap_through(target, cfg, controller)
    if solo:
        lo = scenario.lower
        scenario = Scenario(scenario.x0[lo:lo + 1], scenario.refs[lo:lo + 1],
                            (scenario.controllers[lo],), scenario.dd, scenario.duration,
                            scenario.dt, scenario.horizon, scenario.seed, lower=0)
    rng = rng_for(seed, "noise", episode)
    res = run_scenario(scenario, cfg, gp_force, noise_rng=rng, noise_std=noise_std)
    J = cfg.bo.divergence_penalty if res.diverged else res.summary["avg_z_error"]
    inside = Region.from_config(cfg.bo).contains(res.offsets, tol=0.0)
    return EpisodeResult(np.asarray(target, dtype=float), float(J), res.offsets[inside],
                         res.measured_fz[inside], res)


def most_informative(state: BOState, cfg: RunConfig, X) -> np.ndarray:
    """Visited offset with the largest performance-GP posterior std.

    Candidates are scanned in lexicographic order so ties resolve to the
    smallest offset.
    """
    X = np.asarray(X, dtype=float)
    order = np.lexsort((X[:, 2], X[:, 1], X[:, 0]))
    X = X[order]
    sd = build_surrogates(state, cfg).perf_std(X, cfg.bo.perf_signal_std)
    return X[int(np.argmax(sd))].copy()


def update_datasets(state: BOState, ep: EpisodeResult, cfg: RunConfig) -> None:
    """Append the force samples and one performance point, in place."""
    candidates = ep.X if len(ep.X) else ep.target[None]
    x_perf = most_informative(state, cfg, candidates)
    state.force = state.force.extend(ep.X, ep.y)
    state.perf_X = np.vstack([state.perf_X, x_perf[None]])
    state.perf_y = np.append(state.perf_y, ep.J)
    state.curve.append((state.episode + 1, ep.J, *map(float, ep.target)))


def random_target(cfg: RunConfig, seed: int, episode: int) -> np.ndarray:
    return Region.from_config(cfg.bo).sample(rng_for(seed, "random_targets", episode))


@dataclass
class BOResult:
    gp_force: GPModel | ZeroForceModel
    state: BOState


def bo_loop(cfg: RunConfig, seed: int | None = None, strategy: str = "ucb",
            episodes: int | None = None, state: BOState | None = None,
            checkpoint=None) -> BOResult:
    """Run (or resume) the acquire, plan, run, update cycle.

    ``strategy="random"`` replaces the acquisition by uniform targets from the
    ``random_targets`` stream; everything else is identical.  The checkpoint,
    when given, is rewritten after every episode.
    """
    if strategy not in ("ucb", "random"):
        raise ValueError(f"unknown strategy {strategy!r}")
    seed = cfg.seed if seed is None else int(seed)
    T = cfg.bo.episodes if episodes is None else int(episodes)
    if T < 1:
        raise ValueError("episode budget must be >= 1")
    if state is None:
        state = BOState(seed=seed, strategy=strategy)
    elif state.seed != seed or state.strategy != strategy:
        raise ValueError("checkpoint was written with a different seed or strategy")
    while state.episode < T:
        t = state.episode + 1
        gp_force = fit_force_gp(state.force, cfg)
        if strategy == "ucb":
            target = acquire(state, cfg)
        else:
            target = random_target(cfg, seed, t)
        ep = run_episode(target, gp_force, cfg, seed, t)
        update_datasets(state, ep, cfg)
        log.info("episode %d target %s J %.3g", t, np.round(target, 3), ep.J)
        if checkpoint is not None:
            state.save(checkpoint)
    return BOResult(fit_force_gp(state.force, cfg), state)


def learning_curve_csv(state: BOState) -> str:
    lines = [",".join(CURVE_HEADER)]
    for ep, J, dx, dy, dz in state.curve:
        lines.append(",".join([str(int(ep)), repr(float(J)), repr(float(dx)),
                               repr(float(dy)), repr(float(dz))]))
    return "\n".join(lines) + "\n"


def collect_dataset(cfg: RunConfig, seed: int | None = None, passes: int | None = None,
                    noise_std: float | None = None, controller: str = "linmpc") -> ForceDataset:
    """Scripted collection: swaps through uniform random targets, no BO.

    The lower drone flies ``controller`` (by default LinMPC without a force
    model); every step within ``gp.region_margin`` of the region contributes
    one measured-force sample, so the data reach the edge of the gated model.
    """
    seed = cfg.seed if seed is None else int(seed)
    passes = cfg.collect.passes if passes is None else int(passes)
    noise_std = cfg.collect.noise_std if noise_std is None else float(noise_std)
    region = Region.from_config(cfg.bo)
    data = ForceDataset()
    for p in range(1, passes + 1):
        target = region.sample(rng_for(seed, "random_targets", p))
        scenario = plan_swap_through(target, cfg, controller)
        res = run_scenario(scenario, cfg, None, noise_rng=rng_for(seed, "collect", p),
                           noise_std=noise_std)
        inside = region.contains(res.offsets, tol=cfg.gp.region_margin)
        data = data.extend(res.offsets[inside], res.measured_fz[inside])
    return data
