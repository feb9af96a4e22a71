"""Two-drone swap scenarios, lock-step simulation, metrics and the benchmark grid."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import make_controller
from .config import RunConfig, rng_for
from .downwash import measure_force, true_force
from .dynamics import NX, SingularAttitudeError, hover_state, nonlinear_derivative, step_truth

log = logging.getLogger(__name__)

TRACE_HEADER = ("t", "x", "y", "z", "xref", "yref", "zref", "fz_true", "fz_pred",
                "solve_ns", "converged")


def quintic(tau):
    """Minimum-jerk time scaling ``s(tau)`` and its first three derivatives on [0, 1]."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    ds = 30 * tau**2 - 60 * tau**3 + 30 * tau**4
    dds = 60 * tau - 180 * tau**2 + 120 * tau**3
    ddds = 60 - 360 * tau + 360 * tau**2
    return s, ds, dds, ddds


def straight_line_reference(p0, p1, duration: float, dt: float, n_samples: int,
                            gravity: float = 9.81) -> np.ndarray:
    """State reference ``(n_samples, 12)`` along a quintic straight line.

    Attitude and body-rate entries follow the small-angle relation between
    tilt and horizontal acceleration; samples past ``duration`` hold the end
    point.
    """
    p0 = np.asarray(p0, dtype=float)
    delta = np.asarray(p1, dtype=float) - p0
    t = np.arange(n_samples) * dt
    s, ds, dds, ddds = quintic(t / duration)
    inside = t <= duration
    ds, dds, ddds = ds * inside, dds * inside, ddds * inside
    ref = np.zeros((n_samples, NX))
    ref[:, 0:3] = p0 + s[:, None] * delta
    ref[:, 6:9] = (ds / duration)[:, None] * delta
    acc = (dds / duration**2)[:, None] * delta
    jerk = (ddds / duration**3)[:, None] * delta
    ref[:, 3] = -acc[:, 1] / gravity
    ref[:, 4] = acc[:, 0] / gravity
    ref[:, 9] = -jerk[:, 1] / gravity
    ref[:, 10] = jerk[:, 0] / gravity
    return ref


@dataclass
class Scenario:
    """Initial states, per-step references and controller names for each drone.

    ``refs[i]`` has ``steps + horizon + 1`` rows so every step has a full
    preview window.  ``lower`` indexes the drone whose z error is scored.
    """

    x0: np.ndarray
    refs: np.ndarray
    controllers: tuple
    dd: float
    duration: float
    dt: float
    horizon: int
    seed: int = 0
    lower: int = 0

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
        self.refs = np.asarray(self.refs, dtype=float)
        if self.refs.ndim == 2:
            self.refs = self.refs[None]
        if self.dd <= 0:
            raise ValueError("height separation must be > 0")
        if self.duration < self.horizon * self.dt:
            raise ValueError("episode shorter than the MPC horizon")
        if len(self.controllers) != len(self.x0) or len(self.refs) != len(self.x0):
            raise ValueError("need one controller and reference per drone")
        if self.refs.shape[1] < self.steps + self.horizon + 1:
            raise ValueError("reference too short for the episode")
        if not np.allclose(self.refs[:, 0, 0:3], self.x0[:, 0:3], atol=1e-12):
            raise ValueError("references must start at the initial positions")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_drones(self) -> int:
        return len(self.x0)


def swap_endpoints(offset, z0: float, half_span: float):
    """Start/end points ``(upper, lower)`` of a swap whose mid-time offset is ``offset``.

    ``offset`` is ``p_upper - p_lower``; the upper drone flies +x, the lower -x.
    """
    tx, ty, tz = map(float, offset)
    upper = (np.array([-half_span + tx / 2, ty / 2, z0 + tz]),
             np.array([half_span + tx / 2, ty / 2, z0 + tz]))
    lower = (np.array([half_span - tx / 2, -ty / 2, z0]),
             np.array([-half_span - tx / 2, -ty / 2, z0]))
    return upper, lower


def swap_scenario(dd: float, cfg: RunConfig, controller: str = "linmpc-lingp", z0=None,
                  offset_xy=(0.0, 0.0), seed: int | None = None,
                  position_std: float | None = None) -> Scenario:
    """Drone 0 flies above at ``z0 + dd``, drone 1 mirrors it at ``z0``.

    With a seed and nonzero ``position_std`` both start points are perturbed
    (the references start from the perturbed points, end points are kept).
    """
    if dd <= 0:
        raise ValueError("height separation must be > 0")
    sc, mpc = cfg.scenario, cfg.mpc
    z0 = sc.z0 if z0 is None else float(z0)
    std = sc.initial_position_std if position_std is None else float(position_std)
    upper, lower = swap_endpoints((offset_xy[0], offset_xy[1], dd), z0, sc.half_span)
    starts = [upper[0].copy(), lower[0].copy()]
    if seed is not None and std > 0:
        rng = rng_for(cfg.seed, "scenario", seed)
        for p in starts:
            p += rng.normal(0.0, std, 3)
    steps = int(round(sc.duration / mpc.dt))
    n = steps + mpc.horizon + 1
    g = cfg.quadrotor.gravity
    refs = np.stack([
        straight_line_reference(starts[0], upper[1], sc.duration, mpc.dt, n, g),
        straight_line_reference(starts[1], lower[1], sc.duration, mpc.dt, n, g),
    ])
    x0 = np.stack([hover_state(starts[0]), hover_state(starts[1])])
    return Scenario(x0=x0, refs=refs, controllers=(sc.upper_controller, controller), dd=dd,
                    duration=sc.duration, dt=mpc.dt, horizon=mpc.horizon,
                    seed=0 if seed is None else int(seed), lower=1)


def hover_scenario(cfg: RunConfig, controller: str, position=(0.0, 0.0, 0.5),
                   duration: float | None = None) -> Scenario:
    """Single drone holding ``position``."""
    mpc = cfg.mpc
    duration = cfg.scenario.duration if duration is None else duration
    steps = int(round(duration / mpc.dt))
    ref = np.tile(hover_state(position), (steps + mpc.horizon + 1, 1))
    return Scenario(x0=hover_state(position)[None], refs=ref[None], controllers=(controller,),
                    dd=1.0, duration=duration, dt=mpc.dt, horizon=mpc.horizon)


@dataclass
class SimResult:
    """Traces (drone, step, ...) and the error summary of one episode."""

    t: np.ndarray
    states: np.ndarray
    refs: np.ndarray
    inputs: np.ndarray
    forces: np.ndarray
    fz_pred: np.ndarray
    solve_ns: np.ndarray
    converged: np.ndarray
    offsets: np.ndarray
    measured_fz: np.ndarray
    lower: int
    diverged: bool = False
    summary: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.t)


def tracking_summary(states, refs, converged, solve_ns, lower: int, diverged: bool) -> dict:
    if states.shape[1] == 0:
        return {"avg_z_error": 0.0, "rms_3d_error": 0.0, "max_error": 0.0,
                "converged_fraction": 1.0, "mean_solve_ns": 0.0, "diverged": diverged}
    err = states[lower, :, 0:3] - refs[lower, :, 0:3]
    norm = np.linalg.norm(err, axis=1)
    return {
        "avg_z_error": float(np.mean(np.abs(err[:, 2]))),
        "rms_3d_error": float(np.sqrt(np.mean(norm**2))),
        "max_error": float(np.max(norm)),
        "converged_fraction": float(np.mean(converged[lower])),
        "mean_solve_ns": float(np.mean(solve_ns[lower])),
        "diverged": bool(diverged),
    }


def run_scenario(scenario: Scenario, cfg: RunConfig, gp=None, noise_rng=None,
                 controllers=None, noise_std: float | None = None) -> SimResult:
    """Lock-step closed-loop simulation.

    Both controllers see the current states; the truth model then steps each
    drone, applying the downwash field to whichever drone is lower (and to the
    upper one as well when ``downwash.disturb_upper`` is set).  The z force on
    the scored drone is recovered from its acceleration and, when
    ``noise_rng`` is given, corrupted with Gaussian noise of std ``noise_std``
    (default ``downwash.noise_std``).
    The episode stops early if any drone strays more than
    ``bo.divergence_limit`` from its reference.
    """
    quad, dw, dt = cfg.quadrotor, cfg.downwash, scenario.dt
    nd, K, N = scenario.n_drones, scenario.steps, scenario.horizon
    if controllers is None:
        controllers = [make_controller(name, cfg, gp if i == scenario.lower else None)
                       for i, name in enumerate(scenario.controllers)]
    x = scenario.x0.copy()
    states = np.zeros((nd, K, NX))
    inputs = np.zeros((nd, K, 4))
    forces = np.zeros((nd, K, 3))
    fz_pred = np.zeros((nd, K))
    solve_ns = np.zeros((nd, K), dtype=np.int64)
    conv = np.zeros((nd, K), dtype=bool)
    offsets = np.zeros((K, 3))
    measured = np.zeros(K)
    limit = cfg.bo.divergence_limit
    sigma = dw.noise_std if noise_std is None else float(noise_std)
    if noise_rng is None:
        sigma = 0.0
    diverged = False
    k_done = 0
    for k in range(K):
        states[:, k] = x
        if np.any(np.linalg.norm(x[:, 0:3] - scenario.refs[:, k, 0:3], axis=1) > limit):
            diverged = True
            break
        u = np.zeros((nd, 4))
        try:
            for i, ctrl in enumerate(controllers):
                other = x[1 - i] if nd == 2 else None
                u[i] = ctrl.step(x[i], scenario.refs[i, k:k + N + 1], other)
                info = ctrl.last_info
                fz_pred[i, k] = info.get("fz_pred", 0.0)
                solve_ns[i, k] = info.get("solve_ns", 0)
                conv[i, k] = info.get("converged", True)
        except SingularAttitudeError:
            diverged = True
            break
        f = np.zeros((nd, 3))
        if nd == 2:
            lo = 0 if x[0, 2] < x[1, 2] else 1
            hi = 1 - lo
            f[lo] = true_force(x[hi, 0:3] - x[lo, 0:3], dw)
            if dw.disturb_upper:
                f[hi] = f[lo]
            offsets[k] = x[1 - scenario.lower, 0:3] - x[scenario.lower, 0:3]
        inputs[:, k] = u
        forces[:, k] = f
        s = scenario.lower
        try:
            acc = nonlinear_derivative(x[s], u[s], quad, f[s])[6:9]
            measured[k] = measure_force(x[s], u[s], acc, quad, sigma, noise_rng)
            x = np.stack([step_truth(x[i], u[i], quad, dt, f_ext=f[i]) for i in range(nd)])
        except SingularAttitudeError:
            diverged = True
            k_done = k + 1
            break
        if not np.all(np.isfinite(x)):
            diverged = True
            k_done = k + 1
            break
        k_done = k + 1
    n = k_done
    refs = scenario.refs[:, :n].copy()
    res = SimResult(
        t=np.arange(n) * dt, states=states[:, :n], refs=refs, inputs=inputs[:, :n],
        forces=forces[:, :n], fz_pred=fz_pred[:, :n], solve_ns=solve_ns[:, :n],
        converged=conv[:, :n], offsets=offsets[:n], measured_fz=measured[:n],
        lower=scenario.lower, diverged=diverged,
    )
    res.summary = tracking_summary(res.states, refs, res.converged, res.solve_ns,
                                   scenario.lower, diverged)
    res.summary["steps"] = n
    return res


def trace_rows(result: SimResult, drone: int):
    for k in range(result.steps):
        p = result.states[drone, k, 0:3]
        r = result.refs[drone, k, 0:3]
        yield (repr(float(result.t[k])), *(repr(float(v)) for v in p), *(repr(float(v)) for v in r),
               repr(float(result.forces[drone, k, 2])), repr(float(result.fz_pred[drone, k])),
               str(int(result.solve_ns[drone, k])), str(int(bool(result.converged[drone, k]))))


def write_trace_csv(result: SimResult, drone: int, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        w.writerows(trace_rows(result, drone))


@dataclass
class BenchmarkTable:
    """Mean error and per-step wall time per ``(controller, dd)`` cell."""

    controllers: tuple
    dd_list: tuple
    error: dict
    time_s: dict
    failures: dict
    per_seed: dict

    def row_time(self, controller) -> float:
        vals = [self.time_s[(controller, dd)] for dd in self.dd_list
                if np.isfinite(self.time_s[(controller, dd)])]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["controller", *(f"dd={dd:g}" for dd in self.dd_list), "time_s"])
        for c in self.controllers:
            w.writerow([c, *(repr(self.error[(c, dd)]) for dd in self.dd_list),
                        repr(self.row_time(c))])
        return buf.getvalue()

    def format(self) -> str:
        head = f"{'controller':<14}" + "".join(f"{'dd=' + format(dd, 'g'):>11}"
                                               for dd in self.dd_list) + f"{'time (s)':>12}"
        lines = [head, "-" * len(head)]
        for c in self.controllers:
            cells = "".join(f"{self.error[(c, dd)]:>11.5f}" for dd in self.dd_list)
            lines.append(f"{c:<14}{cells}{self.row_time(c):>12.2e}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "controllers": list(self.controllers),
            "dd_list": list(self.dd_list),
            "cells": [{"controller": c, "dd": dd, "error": self.error[(c, dd)],
                       "time_s": self.time_s[(c, dd)], "failures": self.failures[(c, dd)],
                       "per_seed": self.per_seed[(c, dd)]}
                      for c in self.controllers for dd in self.dd_list],
        }


def _run_cell(args):
    controller, dd, seed, cfg, gp = args
    try:
        res = run_scenario(swap_scenario(dd, cfg, controller, seed=seed), cfg, gp)
    except Exception as exc:  # a failed cell must not abort the grid
        log.warning("cell %s dd=%g seed=%d failed: %s", controller, dd, seed, exc)
        return (controller, dd, seed), None
    s = res.summary
    if s["diverged"]:
        err = cfg.bo.divergence_penalty
    else:
        err = s["avg_z_error"]
    return (controller, dd, seed), (err, s["mean_solve_ns"] * 1e-9, s["diverged"])


def benchmark_grid(cfg: RunConfig, gp=None, controllers=None, dd_list=None, seeds=None,
                   workers: int = 1) -> BenchmarkTable:
    """Mean average-z-error and per-step controller time over the grid.

    Diverged runs count with the divergence penalty and as failures.
    """
    bc = cfg.benchmark
    controllers = tuple(bc.controllers if controllers is None else controllers)
    dd_list = tuple(float(d) for d in (bc.dd_list if dd_list is None else dd_list))
    seeds = bc.seeds if seeds is None else int(seeds)
    jobs = [(c, dd, s, cfg, gp) for c in controllers for dd in dd_list for s in range(seeds)]
    if workers > 1 and jobs:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_cell, jobs))
    else:
        results = dict(map(_run_cell, jobs))
    error, time_s, failures, per_seed = {}, {}, {}, {}
    for c in controllers:
        for dd in dd_list:
            cell = [results[(c, dd, s)] for s in range(seeds)]
            ok = [v for v in cell if v is not None]
            failures[(c, dd)] = sum(1 for v in cell if v is None or v[2])
            per_seed[(c, dd)] = [None if v is None else v[0] for v in cell]
            error[(c, dd)] = float(np.mean([v[0] for v in ok])) if ok else float("nan")
            time_s[(c, dd)] = float(np.mean([v[1] for v in ok])) if ok else float("nan")
    return BenchmarkTable(controllers, dd_list, error, time_s, failures, per_seed)
