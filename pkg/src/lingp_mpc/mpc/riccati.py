"""Finite-horizon LQR by backward Riccati recursion, with affine terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class CostSpec:
    """Stage/terminal weights ``Q``, ``R``, ``Q_f`` and horizon ``N``."""

    Q: np.ndarray
    R: np.ndarray
    Q_f: np.ndarray
    N: int

    def __post_init__(self):
        for name in ("Q", "R", "Q_f"):
            M = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, M)
            if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        for name in ("Q", "Q_f"):
            M = getattr(self, name)
            if np.linalg.eigvalsh(M).min() < -1e-10 * max(1.0, np.abs(M).max()):
                raise ValueError(f"{name} must be positive semidefinite")
        if self.N < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class RiccatiSolution:
    K: np.ndarray  # (N, m, n)
    d: np.ndarray  # (N, m)
    P: np.ndarray  # (N+1, n, n) cost-to-go Hessians
    p: np.ndarray  # (N+1, n) cost-to-go gradients

    def control(self, k: int, x) -> np.ndarray:
        return -self.K[k] @ x - self.d[k]

    def rollout(self, x0, A, B, c=None):
        """Closed-loop states ``x_0..x_N`` and inputs ``u_0..u_{N-1}``."""
        N = self.K.shape[0]
        xs = [np.asarray(x0, dtype=float)]
        us = []
        for k in range(N):
            u = self.control(k, xs[-1])
            x = A @ xs[-1] + B @ u
            if c is not None:
                x = x + c[k]
            us.append(u)
            xs.append(x)
        return np.array(xs), np.array(us)


def riccati_lqr(A, B, cost: CostSpec, q=None, r=None, c=None, q_f=None) -> RiccatiSolution:
    """Minimize ``sum_k 1/2 x'Qx + q_k'x + 1/2 u'Ru + r_k'u + 1/2 x_N'Q_f x_N + q_f'x_N``
    subject to ``x_{k+1} = A x_k + B u_k + c_k``.

    Returns gains for ``u_k = -K_k x_k - d_k``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    N = cost.N
    q = np.zeros((N, n)) if q is None else np.asarray(q, dtype=float)
    r = np.zeros((N, m)) if r is None else np.asarray(r, dtype=float)
    c = np.zeros((N, n)) if c is None else np.asarray(c, dtype=float)
    q_f = np.zeros(n) if q_f is None else np.asarray(q_f, dtype=float)

    P = np.empty((N + 1, n, n))
    p = np.empty((N + 1, n))
    K = np.empty((N, m, n))
    d = np.empty((N, m))
    P[N], p[N] = cost.Q_f, q_f
    for k in range(N - 1, -1, -1):
        Pn = P[k + 1]
        S = cost.R + B.T @ Pn @ B
        try:
            cf = scipy.linalg.cho_factor(S)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("R + B'PB not positive definite; ill-posed cost") from None
        pc = p[k + 1] + Pn @ c[k]
        K[k] = scipy.linalg.cho_solve(cf, B.T @ Pn @ A)
        d[k] = scipy.linalg.cho_solve(cf, B.T @ pc + r[k])
        Pk = cost.Q + A.T @ Pn @ A - K[k].T @ S @ K[k]
        P[k] = 0.5 * (Pk + Pk.T)
        p[k] = q[k] + (A - B @ K[k]).T @ pc - K[k].T @ r[k]
    return RiccatiSolution(K, d, P, p)


def dare_terminal_cost(A, B, Q, R) -> np.ndarray:
    """Infinite-horizon cost-to-go; used as the default terminal weight."""
    P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    return 0.5 * (P + P.T)
