"""Adaptive linear MPC with a linearized-GP disturbance channel (LinMPC-LinGP)."""

from __future__ import annotations

import time

import numpy as np

from ..config import MPCConfig, QuadrotorParams
from ..dynamics import NU, NX, linearize_hover
from ..gp import ZeroForceModel
from .condensed import BoxConstraints, CondensedBuilder, forces_from_lingp, predict_relative_stack
from .qp import ADMMSolver
from .riccati import CostSpec, dare_terminal_cost


def default_cost(model, cfg: MPCConfig) -> CostSpec:
    w = np.repeat([cfg.q_position, cfg.q_attitude, cfg.q_velocity, cfg.q_rates], 3)
    Q = np.diag(w)
    R = cfg.r_input * np.eye(NU)
    Q_f = dare_terminal_cost(model.A, model.B, Q, R)
    return CostSpec(Q=Q, R=R, Q_f=Q_f, N=cfg.horizon)


def default_constraints(params: QuadrotorParams, cfg: MPCConfig) -> BoxConstraints:
    return BoxConstraints.loose(params.u_min, params.u_max, cfg.position_bound, cfg.attitude_bound)


def cancelling_input(params: QuadrotorParams, fz: float) -> np.ndarray:
    """Motor command whose extra collective thrust offsets a vertical force ``fz``.

    ``fz`` may be a column of forces, giving one command row per entry.
    """
    return params.u_hover - np.asarray(fz, dtype=float) / (4.0 * params.thrust_coefficient)


def relative_state(x, other):
    """``(p_other - p, v_other - v)`` or ``None`` when there is no other drone."""
    if other is None:
        return None
    other = np.asarray(other, dtype=float)
    return other[0:3] - x[0:3], other[6:9] - x[6:9]


class LinMPCController:
    """Hover-linear MPC whose prediction model includes the LinGP force.

    Each step the GP mean is linearized at the current relative position, the
    relative position is propagated at constant relative velocity over the
    horizon, and the resulting affine force forecast enters the condensed QP.
    The input reference at each stage is the hover command plus the thrust
    that cancels the force forecast for that stage, so a known disturbance is
    rejected without steady-state error and the input penalty does not fight
    the feedforward.

    One instance per drone; it owns the solver warm start.
    """

    name = "linmpc-lingp"

    def __init__(self, params: QuadrotorParams, cfg: MPCConfig, gp=None, record_timing=True):
        self.params = params
        self.cfg = cfg
        self.gp = gp if gp is not None else ZeroForceModel()
        self.record_timing = record_timing
        self.model = linearize_hover(params, cfg.dt)
        self.cost = default_cost(self.model, cfg)
        self.constraints = default_constraints(params, cfg)
        self.builder = CondensedBuilder(self.model, self.cost, self.constraints)
        self.solver = ADMMSolver(cfg.rho, cfg.sigma, cfg.relaxation, cfg.max_iters, cfg.tol)
        self.N = cfg.horizon
        self.reset()

    def reset(self):
        self._warm = None
        self._last_u = self.params.u_hover.copy()
        self.last_info = {}

    def _forecast(self, x, other):
        rel = relative_state(x, other)
        if rel is None:
            return np.zeros((self.N, 3)), None, 0.0
        rel_stack = predict_relative_stack(rel[0], rel[1], self.N, self.cfg.dt)
        lingp = self.gp.linearize(rel[0])
        forces = forces_from_lingp(lingp, rel_stack)
        return forces, rel_stack, lingp.value_at_d0

    def _shift_warm(self):
        w = self._warm
        if w is None:
            return None
        u = w.u.reshape(self.N, NU)
        w.u = np.vstack([u[1:], u[-1:]]).ravel()
        return w

    def step(self, x, ref_window, other=None) -> np.ndarray:
        """Motor command for state ``x``.

        ``ref_window`` holds reference states for the current step and the
        next ``N`` steps, shape ``(N + 1, 12)``.
        """
        t0 = time.perf_counter_ns()
        x = np.asarray(x, dtype=float)
        forces, rel_stack, fz0 = self._forecast(x, other)
        u_ref = cancelling_input(self.params, forces[:, 2:3])
        qp = self.builder.build(x, np.asarray(ref_window)[1:self.N + 1], forces=forces,
                                u_ref=u_ref, rel_stack=rel_stack)
        sol = self.solver.solve(qp.P, qp.q, qp.H, qp.b, self._shift_warm())
        if sol.stats.converged or self._warm is None:
            u = qp.u_offset[:NU] + sol.u[:NU]
        else:
            u = self._last_u  # fail-safe: previous command
        u = np.clip(u, self.params.u_min, self.params.u_max)
        self._warm = sol
        self._last_u = u
        wall = time.perf_counter_ns() - t0
        self.last_info = {
            "fz_pred": float(fz0),
            "converged": bool(sol.stats.converged),
            "iterations": sol.stats.iterations,
            "solve_ns": int(wall) if self.record_timing else 0,
            "plan": sol.u,
            "qp": qp,
        }
        return u


def mpc_step(x, ref_window, other_state, controller: LinMPCController) -> np.ndarray:
    return controller.step(x, ref_window, other_state)


__all__ = ["LinMPCController", "mpc_step", "default_cost", "default_constraints",
           "cancelling_input", "relative_state", "NX"]
