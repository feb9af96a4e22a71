"""Quadrotor rigid-body model, hover linearization and motor/wrench conversion.

State layout (12): position p, ZYX Euler angles (roll, pitch, yaw), world-frame
velocity v, body angular velocity omega.  Inputs (4) are squared motor speeds.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import QuadrotorParams

POS = slice(0, 3)
ATT = slice(3, 6)
VEL = slice(6, 9)
RATE = slice(9, 12)
NX = 12
NU = 4

PITCH_LIMIT = np.pi / 2 - 1e-6


class SingularAttitudeError(ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map."""


@dataclass(frozen=True)
class DiscreteLinearModel:
    """Hover-linearized discrete model ``x+ = A x + B (u - u_hover) + D f``.

    ``D`` maps a world-frame force (N) held over one step into the state.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    u_hover: np.ndarray
    dt: float
    A_c: np.ndarray | None = None
    B_c: np.ndarray | None = None


def hover_state(position=(0.0, 0.0, 0.0)) -> np.ndarray:
    x = np.zeros(NX)
    x[POS] = position
    return x


def mixing_matrix(params: QuadrotorParams) -> np.ndarray:
    """4x4 map from squared motor speeds to ``[T, tau_x, tau_y, tau_z]``.

    X configuration; motors at (+,-), (-,-), (-,+), (+,+) in body x/y, spinning
    alternately so that yaw torque is ``k_M (-u1 + u2 - u3 + u4)``.
    """
    return _mixing(params).copy()


@functools.lru_cache(maxsize=32)
def _mixing(params: QuadrotorParams) -> np.ndarray:
    l = params.arm_length / np.sqrt(2.0)
    kt, km = params.thrust_coefficient, params.torque_coefficient
    mx = np.array([1.0, -1.0, -1.0, 1.0])
    my = np.array([-1.0, -1.0, 1.0, 1.0])
    spin = np.array([-1.0, 1.0, -1.0, 1.0])
    M = np.vstack([kt * np.ones(4), kt * l * my, -kt * l * mx, km * spin])
    M.flags.writeable = False
    return M


def motor_to_wrench(u, params: QuadrotorParams) -> np.ndarray:
    """Return the wrench ``[T, tau_x, tau_y, tau_z]`` for squared motor speeds ``u``."""
    return np.asarray(u, dtype=float) @ _mixing(params).T


def wrench_to_motor(wrench, params: QuadrotorParams) -> np.ndarray:
    return np.linalg.solve(_mixing(params), np.asarray(wrench, dtype=float))


def rotation_matrix(att) -> np.ndarray:
    """ZYX rotation ``Rz(yaw) Ry(pitch) Rx(roll)``; supports leading batch dims."""
    att = np.asarray(att, dtype=float)
    cr, sr = np.cos(att[..., 0]), np.sin(att[..., 0])
    cp, sp = np.cos(att[..., 1]), np.sin(att[..., 1])
    cy, sy = np.cos(att[..., 2]), np.sin(att[..., 2])
    R = np.empty(att.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def nonlinear_derivative(x, u, params: QuadrotorParams, f_ext=None, tau_ext=None) -> np.ndarray:
    """Time derivative of the 12-state under motor input ``u`` and external loads.

    Works on single states or stacks with matching leading dimensions.

    Raises
    ------
    SingularAttitudeError
        If any pitch angle is within 1e-6 of +-pi/2.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    att = x[..., ATT]
    pitch = att[..., 1]
    if np.any(np.abs(pitch) >= PITCH_LIMIT):
        raise SingularAttitudeError("pitch at Euler singularity")
    omega = x[..., RATE]
    wrench = u @ _mixing(params).T
    thrust = wrench[..., 0]
    torque = wrench[..., 1:]
    if tau_ext is not None:
        torque = torque + tau_ext

    cr, sr = np.cos(att[..., 0]), np.sin(att[..., 0])
    cp, sp, tp = np.cos(pitch), np.sin(pitch), np.tan(pitch)
    cy, sy = np.cos(att[..., 2]), np.sin(att[..., 2])
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (NX,)))
    out[..., POS] = x[..., VEL]

    # thrust acts along the body z axis, the third column of R
    a = thrust / params.mass
    out[..., 6] = a * (cy * sp * cr + sy * sr)
    out[..., 7] = a * (sy * sp * cr - cy * sr)
    out[..., 8] = a * cp * cr - params.gravity
    if f_ext is not None:
        out[..., VEL] += np.asarray(f_ext, dtype=float) / params.mass

    wx, wy, wz = omega[..., 0], omega[..., 1], omega[..., 2]
    out[..., 3] = wx + sr * tp * wy + cr * tp * wz
    out[..., 4] = cr * wy - sr * wz
    out[..., 5] = (sr * wy + cr * wz) / cp

    J = params.J
    # conventional gyroscopic term -omega x (J omega)
    Jw = J * omega
    out[..., 9] = (torque[..., 0] - (wy * Jw[..., 2] - wz * Jw[..., 1])) / J[0]
    out[..., 10] = (torque[..., 1] - (wz * Jw[..., 0] - wx * Jw[..., 2])) / J[1]
    out[..., 11] = (torque[..., 2] - (wx * Jw[..., 1] - wy * Jw[..., 0])) / J[2]
    return out


def wrap_angles(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    x[..., ATT] = np.pi - np.mod(np.pi - x[..., ATT], 2 * np.pi)
    return x


def step_truth(x, u, params: QuadrotorParams, dt: float, f_ext=None, tau_ext=None) -> np.ndarray:
    """One RK4 step with external loads held constant over the step."""
    if dt <= 0:
        raise ValueError("dt must be > 0")

    def f(s):
        return nonlinear_derivative(s, u, params, f_ext, tau_ext)

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return wrap_angles(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def hover_jacobians(params: QuadrotorParams) -> tuple[np.ndarray, np.ndarray]:
    """Analytic continuous-time Jacobians at hover (zero yaw)."""
    g = params.gravity
    A = np.zeros((NX, NX))
    A[POS, VEL] = np.eye(3)
    A[ATT, RATE] = np.eye(3)
    A[6, 4] = g  # v_x from pitch
    A[7, 3] = -g  # v_y from roll
    M = mixing_matrix(params)
    B = np.zeros((NX, NU))
    B[8] = M[0] / params.mass
    B[RATE] = M[1:] / params.J[:, None]
    return A, B


def force_input_matrix(params: QuadrotorParams) -> np.ndarray:
    """Continuous-time map from world force (N) to the state derivative."""
    G = np.zeros((NX, 3))
    G[VEL] = np.eye(3) / params.mass
    return G


def linearize_hover(params: QuadrotorParams, dt: float) -> DiscreteLinearModel:
    """Zero-order-hold discretization of the hover Jacobians.

    Motor inputs and the external force are both held over the step, so the
    force channel is discretized the same way as the inputs.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    A_c, B_c = hover_jacobians(params)
    G = force_input_matrix(params)
    n, m = NX, NU + 3
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:n + NU] = B_c
    M[:n, n + NU:] = G
    E = scipy.linalg.expm(M * dt)
    return DiscreteLinearModel(
        A=E[:n, :n], B=E[:n, n:n + NU], D=E[:n, n + NU:],
        u_hover=params.u_hover, dt=dt, A_c=A_c, B_c=B_c,
    )


def numerical_jacobians(x, u, params: QuadrotorParams, eps: float = 1e-6, f_ext=None):
    """Central-difference Jacobians of :func:`nonlinear_derivative`."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    dx = eps * np.eye(NX)
    du = eps * np.eye(NU)
    fx = (nonlinear_derivative(x + dx, np.broadcast_to(u, (NX, NU)), params, f_ext)
          - nonlinear_derivative(x - dx, np.broadcast_to(u, (NX, NU)), params, f_ext))
    fu = (nonlinear_derivative(np.broadcast_to(x, (NU, NX)), u + du, params, f_ext)
          - nonlinear_derivative(np.broadcast_to(x, (NU, NX)), u - du, params, f_ext))
    return fx.T / (2 * eps), fu.T / (2 * eps)


def discrete_jacobians(xs, us, params: QuadrotorParams, dt: float, eps: float = 1e-6):
    """Affine discrete models of the RK4 step around each ``(xs[k], us[k])``.

    Returns ``(A, B, x_next)`` with shapes ``(K,12,12)``, ``(K,12,4)``, ``(K,12)``
    such that ``step(x, u) ~ x_next + A (x - xs) + B (u - us)``.  All
    perturbations are propagated in one batched RK4 call.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    us = np.atleast_2d(np.asarray(us, dtype=float))
    K = xs.shape[0]
    nz = NX + NU
    pert = np.concatenate([np.eye(nz), -np.eye(nz), np.zeros((1, nz))]) * eps
    z = np.concatenate([xs, us], axis=1)[:, None, :] + pert[None]
    zx, zu = z[..., :NX], z[..., NX:]

    def f(s):
        return nonlinear_derivative(s, zu, params)

    k1 = f(zx)
    k2 = f(zx + 0.5 * dt * k1)
    k3 = f(zx + 0.5 * dt * k2)
    k4 = f(zx + dt * k3)
    nxt = zx + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    jac = (nxt[:, :nz] - nxt[:, nz:2 * nz]) / (2 * eps)
    jac = np.swapaxes(jac, 1, 2)
    x_next = wrap_angles(nxt[:, -1])
    assert x_next.shape == (K, NX)
    return jac[:, :, :NX], jac[:, :, NX:], x_next
