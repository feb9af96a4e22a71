"""Comparison controllers: cascaded PID and two relinearizing MPC variants.

All controllers expose ``step(x, ref_window, other=None) -> u`` and a
``last_info`` dict, so the simulator can drive them interchangeably.

``mpc-lingp`` and ``mpc-fullgp`` share a core that relinearizes the nonlinear
quadrotor model along the previous plan (RK4 rollout plus finite-difference
Jacobians).  They differ in the disturbance forecast: the LinGP tangent along a
constant-relative-velocity stack, or the full GP mean re-evaluated along the
predicted trajectory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import CONTROLLERS, MPCConfig, PIDConfig, QuadrotorParams, RunConfig
from .dynamics import NU, NX, discrete_jacobians, step_truth, wrench_to_motor
from .gp import GatedForceModel, ZeroForceModel
from .mpc.condensed import assemble, constraint_rows, ltv_input_matrix, predict_relative_stack
from .mpc.controller import LinMPCController, cancelling_input, relative_state
from .mpc.qp import QPSolution


@dataclass(frozen=True)
class PIDGains:
    """Cascaded loop gains; position loops are ``(kp, ki, kd)``, attitude ``(kp, kd)``."""

    xy: tuple
    z: tuple
    attitude: tuple
    yaw: tuple
    integrator_limit: float
    max_tilt: float

    def __post_init__(self):
        for g in (self.xy, self.z, self.attitude, self.yaw):
            if min(g) < 0:
                raise ValueError("gains must be >= 0")
        if self.integrator_limit <= 0:
            raise ValueError("integrator limit must be > 0")

    @classmethod
    def from_config(cls, cfg: PIDConfig) -> "PIDGains":
        return cls(cfg.xy_gains, cfg.z_gains, cfg.attitude_gains, cfg.yaw_gains,
                   cfg.integrator_limit, cfg.max_tilt)


class PIDController:
    """Position PID -> desired tilt and thrust -> attitude PD -> motor mixing.

    The reference acceleration is taken from the difference of the first two
    reference velocities and used as feedforward.  The integrator is clamped
    per axis (anti-windup).
    """

    name = "pid"

    def __init__(self, params: QuadrotorParams, cfg: PIDConfig, dt: float, record_timing=True):
        self.params = params
        self.gains = PIDGains.from_config(cfg)
        self.dt = float(dt)
        self.record_timing = record_timing
        self.reset()

    def reset(self):
        self.integral = np.zeros(3)
        self.last_info = {}

    def step(self, x, ref_window, other=None) -> np.ndarray:
        t0 = time.perf_counter_ns()
        u = pid_step(x, ref_window, self.dt, self, self.params)
        self.last_info = {
            "fz_pred": 0.0, "converged": True, "iterations": 0,
            "solve_ns": int(time.perf_counter_ns() - t0) if self.record_timing else 0,
        }
        return u


def pid_step(x, ref, dt: float, state: PIDController, params: QuadrotorParams) -> np.ndarray:
    """One PID update; ``ref`` is a reference window with at least one row.

    Mutates ``state.integral``.
    """
    g = state.gains
    x = np.asarray(x, dtype=float)
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    r0 = ref[0]
    a_ff = (ref[1, 6:9] - r0[6:9]) / dt if ref.shape[0] > 1 else np.zeros(3)

    e = r0[0:3] - x[0:3]
    ev = r0[6:9] - x[6:9]
    lim = g.integrator_limit
    state.integral = np.clip(state.integral + e * dt, -lim, lim)
    kp = np.array([g.xy[0], g.xy[0], g.z[0]])
    ki = np.array([g.xy[1], g.xy[1], g.z[1]])
    kd = np.array([g.xy[2], g.xy[2], g.z[2]])
    a = a_ff + kp * e + ki * state.integral + kd * ev

    grav = params.gravity
    az = max(grav + a[2], 0.1 * grav)
    yaw = x[5]
    c, s = np.cos(yaw), np.sin(yaw)
    ax_h = c * a[0] + s * a[1]
    ay_h = -s * a[0] + c * a[1]
    pitch_d = np.clip(np.arctan2(ax_h, az), -g.max_tilt, g.max_tilt)
    roll_d = np.clip(np.arctan2(-ay_h * np.cos(pitch_d), az), -g.max_tilt, g.max_tilt)

    roll, pitch = x[3], x[4]
    thrust = params.mass * az / (np.cos(roll) * np.cos(pitch))
    att_err = np.array([roll_d - roll, pitch_d - pitch,
                        np.angle(np.exp(1j * (r0[5] - yaw)))])
    kpa = np.array([g.attitude[0], g.attitude[0], g.yaw[0]])
    kda = np.array([g.attitude[1], g.attitude[1], g.yaw[1]])
    torque = params.J * (kpa * att_err - kda * x[9:12])
    u = wrench_to_motor(np.concatenate([[thrust], torque]), params)
    return np.clip(u, params.u_min, params.u_max)


class _RelinearizedMPC(LinMPCController):
    """Shared machinery for the relinearizing MPC baselines."""

    def reset(self):
        super().reset()
        self._plan = None  # absolute inputs (N, 4) of the last accepted plan
        self._lam = None

    def _nominal(self, u_ref):
        if self._plan is None:
            return np.broadcast_to(u_ref, (self.N, NU)).copy()
        return np.vstack([self._plan[1:], self._plan[-1:]])

    def _solve_around(self, x, ubar, forces, ref, u_ref):
        """Relinearize around the rollout of ``ubar`` and solve one QP.

        Returns the QP, its solution and the rolled-out nominal states.
        """
        N, dt = self.N, self.cfg.dt
        xs = np.empty((N + 1, NX))
        xs[0] = x
        for k in range(N):
            xs[k + 1] = step_truth(xs[k], ubar[k], self.params, dt, f_ext=forces[k])
        A, B, _ = discrete_jacobians(xs[:-1], ubar, self.params, dt)
        Bbar = ltv_input_matrix(A, B)
        H, idx = constraint_rows(Bbar, self.constraints, N)
        qp = assemble(Bbar, xs[1:].ravel(), ref.ravel(), ubar.ravel(),
                      np.broadcast_to(u_ref, (N, NU)).ravel(), self.builder.Qbar, self.builder.Rbar,
                      self.constraints, N, H, idx)
        warm = None
        if self._lam is not None and self._lam.shape == qp.b.shape:
            warm = QPSolution(u=np.zeros(N * NU), z=None, lam=self._lam, stats=None)
        sol = self.solver.solve(qp.P, qp.q, qp.H, qp.b, warm)
        self._lam = sol.lam
        return qp, sol, xs

    def _iterate(self, x, ref, other, ubar):
        raise NotImplementedError

    def step(self, x, ref_window, other=None) -> np.ndarray:
        t0 = time.perf_counter_ns()
        x = np.asarray(x, dtype=float)
        ref = np.asarray(ref_window, dtype=float)[1:self.N + 1]
        rel = relative_state(x, other)
        fz0 = 0.0 if rel is None else float(self.gp.predict_mean(rel[0]))
        ubar = self._nominal(cancelling_input(self.params, fz0))
        ubar, iters, ok, fz_stack = self._iterate(x, ref, other, ubar)
        if ok or self._plan is None:
            u = ubar[0]
            self._plan = ubar
        else:
            u = self._last_u
        u = np.clip(u, self.params.u_min, self.params.u_max)
        self._last_u = u
        wall = time.perf_counter_ns() - t0
        self.last_info = {
            "fz_pred": fz0,
            "converged": bool(ok),
            "iterations": int(iters),
            "solve_ns": int(wall) if self.record_timing else 0,
            "plan": ubar,
            "forces": fz_stack,
        }
        return u


class MPCLinGPController(_RelinearizedMPC):
    """Sequential-linearization MPC with the LinGP disturbance forecast."""

    name = "mpc-lingp"

    def _iterate(self, x, ref, other, ubar):
        forces, _, _ = self._forecast(x, other)
        u_ref = cancelling_input(self.params, forces[:, 2:3])
        iters, ok = 0, True
        for _ in range(self.cfg.relinearize_iters):
            qp, sol, _ = self._solve_around(x, ubar, forces, ref, u_ref)
            ubar = ubar + sol.u.reshape(self.N, NU)
            iters += sol.stats.iterations
            ok = ok and sol.stats.converged
        return ubar, iters, ok, forces[:, 2]


class MPCFullGPController(_RelinearizedMPC):
    """Relinearizing MPC with the full GP mean along the predicted path.

    The first pass evaluates the GP on the constant-relative-velocity stack;
    later passes use the drone's own predicted positions against the other
    drone's constant-velocity path.  Stops after ``fullgp_outer_iters``
    passes or when the plan changes by less than ``fullgp_input_tol``.
    """

    name = "mpc-fullgp"

    def _gp_forces(self, rel_stack):
        F = np.zeros((self.N, 3))
        if rel_stack is not None:
            F[:, 2] = self.gp.predict_mean(rel_stack)
        return F

    def _iterate(self, x, ref, other, ubar):
        N, dt = self.N, self.cfg.dt
        rel = relative_state(x, other)
        rel_stack = None
        other_path = None
        if rel is not None:
            rel_stack = predict_relative_stack(rel[0], rel[1], N, dt)
            other = np.asarray(other, dtype=float)
            other_path = predict_relative_stack(other[0:3], other[6:9], N, dt)
        forces = self._gp_forces(rel_stack)
        iters, ok = 0, True
        for _ in range(self.cfg.fullgp_outer_iters):
            u_ref = cancelling_input(self.params, forces[:, 2:3])
            qp, sol, _ = self._solve_around(x, ubar, forces, ref, u_ref)
            dU = sol.u.reshape(N, NU)
            ubar = ubar + dU
            iters += sol.stats.iterations
            ok = ok and sol.stats.converged
            if np.max(np.abs(dU)) < self.cfg.fullgp_input_tol or other_path is None:
                break
            pred = qp.predicted_states(sol.u)
            own = np.vstack([x[None, 0:3], pred[:-1, 0:3]])
            forces = self._gp_forces(other_path - own)
        return ubar, iters, ok, forces[:, 2]


def mpc_lingp_step(x, ref_window, other_state, controller: MPCLinGPController) -> np.ndarray:
    return controller.step(x, ref_window, other_state)


def mpc_fullgp_step(x, ref_window, other_state, controller: MPCFullGPController) -> np.ndarray:
    return controller.step(x, ref_window, other_state)


def gated_model(gp, cfg: RunConfig) -> GatedForceModel:
    """Wrap ``gp`` so it is only used within ``gp.region_margin`` of the BO region."""
    m, b = cfg.gp.region_margin, cfg.bo
    lo = np.array([-b.region_xy - m, -b.region_xy - m, b.region_z[0] - m])
    hi = np.array([b.region_xy + m, b.region_xy + m, b.region_z[1] + m])
    return GatedForceModel(gp, lo, hi)


def make_controller(name: str, cfg: RunConfig, gp=None):
    """Controller instance by name.  ``linmpc`` is LinMPC with the GP disabled."""
    if name not in CONTROLLERS:
        raise ValueError(f"unknown controller {name!r}; expected one of {CONTROLLERS}")
    timing = cfg.record_timing
    if name == "pid":
        return PIDController(cfg.quadrotor, cfg.pid, cfg.mpc.dt, timing)
    if name == "linmpc":
        return LinMPCController(cfg.quadrotor, cfg.mpc, ZeroForceModel(), timing)
    if gp is None:
        gp = ZeroForceModel()
    elif not isinstance(gp, ZeroForceModel):
        gp = gated_model(gp, cfg)
    cls = {"linmpc-lingp": LinMPCController, "mpc-lingp": MPCLinGPController,
           "mpc-fullgp": MPCFullGPController}[name]
    ctrl = cls(cfg.quadrotor, cfg.mpc, gp, timing)
    return ctrl


__all__ = ["PIDGains", "PIDController", "pid_step", "MPCLinGPController", "MPCFullGPController",
           "mpc_lingp_step", "mpc_fullgp_step", "make_controller", "gated_model", "MPCConfig"]
