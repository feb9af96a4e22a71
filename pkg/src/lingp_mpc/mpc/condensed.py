"""Condensed (input-only) QP for linear MPC with a predicted-force channel.

Predicted states over the horizon are ``X = Abar x0 + Bbar U + E F`` with
``F`` the stacked force predictions.  The force term does not depend on the
decision variable, so it only shifts the linear cost and the constraint
right-hand side; the QP stays ``min 1/2 U'PU + q'U  s.t.  HU <= b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..dynamics import DiscreteLinearModel
from ..gp import LinGPModel
from .riccati import CostSpec


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class BoxConstraints:
    """Absolute state and motor bounds; infinite entries are unconstrained."""

    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        for name in ("x_min", "x_max", "u_min", "u_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.x_min.shape != (12,) or self.x_max.shape != (12,):
            raise DimensionError("state bounds need 12 entries")
        if self.u_min.shape != (4,) or self.u_max.shape != (4,):
            raise DimensionError("input bounds need 4 entries")
        if np.any(self.x_min >= self.x_max) or np.any(self.u_min >= self.u_max):
            raise ValueError("bounds must satisfy min < max")

    @classmethod
    def loose(cls, u_min, u_max, position_bound=2.0, attitude_bound=0.5):
        x_max = np.full(12, np.inf)
        x_max[0:3] = position_bound
        x_max[3:6] = attitude_bound
        return cls(-x_max, x_max, np.full(4, u_min), np.full(4, u_max))

    @classmethod
    def unbounded(cls):
        inf = np.full(12, np.inf)
        return cls(-inf, inf, np.full(4, -np.inf), np.full(4, np.inf))


@dataclass
class CondensedQP:
    """``min 1/2 U'PU + q'U`` s.t. ``HU <= b`` over stacked input deviations.

    ``E`` and ``y`` are the force map and predicted relative-position stack;
    ``x_free`` is the state stack at zero decision variable.
    """

    P: np.ndarray
    q: np.ndarray
    H: np.ndarray
    b: np.ndarray
    Bbar: np.ndarray
    x_free: np.ndarray
    u_offset: np.ndarray
    E: np.ndarray | None = None
    y: np.ndarray | None = None
    forces: np.ndarray | None = None
    n_input_rows: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_var(self) -> int:
        return self.P.shape[0]

    def predicted_states(self, U) -> np.ndarray:
        """Predicted ``x_1..x_N`` as an ``(N, 12)`` array."""
        return (self.x_free + self.Bbar @ U).reshape(-1, 12)

    def inputs(self, U) -> np.ndarray:
        """Absolute motor inputs ``(N, 4)`` for decision vector ``U``."""
        return (self.u_offset + U).reshape(-1, 4)

    def objective(self, U) -> float:
        return float(0.5 * U @ self.P @ U + self.q @ U)


def prediction_matrices(A, B, N: int):
    """``Abar = [A; A^2; ...; A^N]`` and lower block-triangular ``Bbar`` with
    block ``(i, j) = A^(i-j) B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    Abar = np.vstack(powers[1:])
    Bbar = np.zeros((N * n, N * m))
    for i in range(N):
        for j in range(i + 1):
            Bbar[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - j] @ B
    return Abar, Bbar


def ltv_input_matrix(As, Bs):
    """``Bbar`` for ``x_{k+1} = A_k x_k + B_k u_k`` with ``x_0`` fixed."""
    N = len(As)
    n, m = Bs[0].shape
    Bbar = np.zeros((N * n, N * m))
    for j in range(N):
        blk = Bs[j]
        for i in range(j, N):
            if i > j:
                blk = As[i] @ blk
            Bbar[i * n:(i + 1) * n, j * m:(j + 1) * m] = blk
    return Bbar


def predict_relative_stack(rel_pos0, rel_vel0, N: int, dt: float) -> np.ndarray:
    """Constant-relative-velocity forecast ``d_k = d_0 + k dt v_rel`` for k < N."""
    k = np.arange(N)[:, None]
    return np.asarray(rel_pos0, dtype=float)[None] + k * dt * np.asarray(rel_vel0, dtype=float)[None]


def forces_from_lingp(lingp: LinGPModel, rel_stack) -> np.ndarray:
    """World-force stack ``(N, 3)``; the GP only models the z component."""
    rel_stack = np.atleast_2d(rel_stack)
    F = np.zeros((rel_stack.shape[0], 3))
    F[:, 2] = lingp.predict(rel_stack)
    return F


def stage_weights(cost: CostSpec):
    N = cost.N
    Qbar = scipy.linalg.block_diag(*([cost.Q] * (N - 1) + [cost.Q_f]))
    Rbar = np.kron(np.eye(N), cost.R)
    return Qbar, Rbar


def constraint_rows(Bbar, constraints: BoxConstraints, N: int):
    """Constraint matrix rows plus the bookkeeping needed to refresh ``b``.

    Order: input upper, input lower, state upper, state lower; only finite
    bounds produce rows.
    """
    m = 4
    nu = N * m
    u_hi = np.tile(constraints.u_max, N)
    u_lo = np.tile(constraints.u_min, N)
    x_hi = np.tile(constraints.x_max, N)
    x_lo = np.tile(constraints.x_min, N)
    iu_hi = np.flatnonzero(np.isfinite(u_hi))
    iu_lo = np.flatnonzero(np.isfinite(u_lo))
    ix_hi = np.flatnonzero(np.isfinite(x_hi))
    ix_lo = np.flatnonzero(np.isfinite(x_lo))
    I = np.eye(nu)
    H = np.vstack([I[iu_hi], -I[iu_lo], Bbar[ix_hi], -Bbar[ix_lo]])
    idx = dict(u_hi=iu_hi, u_lo=iu_lo, x_hi=ix_hi, x_lo=ix_lo,
               u_hi_val=u_hi[iu_hi], u_lo_val=u_lo[iu_lo],
               x_hi_val=x_hi[ix_hi], x_lo_val=x_lo[ix_lo])
    return H, idx


def constraint_rhs(idx, x_free, u_offset) -> np.ndarray:
    return np.concatenate([
        idx["u_hi_val"] - u_offset[idx["u_hi"]],
        -(idx["u_lo_val"] - u_offset[idx["u_lo"]]),
        idx["x_hi_val"] - x_free[idx["x_hi"]],
        -(idx["x_lo_val"] - x_free[idx["x_lo"]]),
    ])


def assemble(Bbar, x_free, r_stack, u_offset, u_ref, Qbar, Rbar, constraints, N,
             H=None, idx=None, cache=None) -> CondensedQP:
    """QP in ``U = u - u_offset`` for cost ``sum |x_k - r_k|_Q^2 + |u_k - u_ref_k|_R^2``.

    The Hessian uses the ``2 (B'QB + R)`` scaling, so the matching linear term
    carries the same factor of two.
    """
    BtQ = Bbar.T @ Qbar if cache is None else cache["BtQ"]
    P = 2.0 * (BtQ @ Bbar + Rbar) if cache is None else cache["P"]
    q = 2.0 * BtQ @ (x_free - r_stack) - 2.0 * Rbar @ (u_ref - u_offset)
    if H is None:
        H, idx = constraint_rows(Bbar, constraints, N)
    b = constraint_rhs(idx, x_free, u_offset)
    n_in = len(idx["u_hi"]) + len(idx["u_lo"])
    return CondensedQP(P=P, q=q, H=H, b=b, Bbar=Bbar, x_free=x_free, u_offset=u_offset,
                       n_input_rows=n_in)


class CondensedBuilder:
    """Precomputed prediction and cost matrices for a fixed linear model.

    Only the linear term and constraint right-hand side change per call, so the
    returned QPs share ``P`` and ``H`` (which lets the solver reuse its
    factorization).
    """

    def __init__(self, model: DiscreteLinearModel, cost: CostSpec, constraints: BoxConstraints):
        self.model = model
        self.cost = cost
        self.constraints = constraints
        N = cost.N
        self.N = N
        self.Abar, self.Bbar = prediction_matrices(model.A, model.B, N)
        _, self.E = prediction_matrices(model.A, model.D, N)
        self.Qbar, self.Rbar = stage_weights(cost)
        BtQ = self.Bbar.T @ self.Qbar
        P = 2.0 * (BtQ @ self.Bbar + self.Rbar)
        self._cache = {"BtQ": BtQ, "P": 0.5 * (P + P.T)}
        self.H, self.idx = constraint_rows(self.Bbar, constraints, N)
        self.u_offset = np.tile(model.u_hover, N)

    def build(self, x0, reference, forces=None, u_ref=None, rel_stack=None) -> CondensedQP:
        N = self.N
        reference = np.asarray(reference, dtype=float)
        if reference.shape != (N, 12):
            raise DimensionError(f"reference must be ({N}, 12), got {reference.shape}")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (12,):
            raise DimensionError("x0 must have 12 entries")
        x_free = self.Abar @ x0
        if forces is not None:
            forces = np.asarray(forces, dtype=float)
            if forces.shape != (N, 3):
                raise DimensionError(f"force stack must be ({N}, 3)")
            x_free = x_free + self.E @ forces.ravel()
        if u_ref is None:
            u_ref_stack = self.u_offset
        else:
            u_ref_stack = np.broadcast_to(np.asarray(u_ref, dtype=float), (N, 4)).ravel()
        qp = assemble(self.Bbar, x_free, reference.ravel(), self.u_offset, u_ref_stack,
                      self.Qbar, self.Rbar, self.constraints, N, self.H, self.idx, self._cache)
        qp.E = self.E
        qp.y = rel_stack
        qp.forces = forces
        return qp


def build_condensed(model: DiscreteLinearModel, cost: CostSpec, constraints: BoxConstraints,
                    x0, reference, rel_stack=None, lingp: LinGPModel | None = None,
                    forces=None, u_ref=None) -> CondensedQP:
    """One-shot condensed QP.

    The disturbance is given either as a relative-position stack with its
    linearized GP (``rel_stack`` + ``lingp``) or directly as ``forces``.
    """
    if rel_stack is not None and lingp is not None:
        if forces is not None:
            raise ValueError("give either forces or rel_stack + lingp")
        rel_stack = np.asarray(rel_stack, dtype=float)
        if rel_stack.shape != (cost.N, 3):
            raise DimensionError(f"relative stack must be ({cost.N}, 3)")
        forces = forces_from_lingp(lingp, rel_stack)
    return CondensedBuilder(model, cost, constraints).build(
        x0, reference, forces=forces, u_ref=u_ref, rel_stack=rel_stack)
