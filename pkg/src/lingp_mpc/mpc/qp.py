"""QP solvers for ``min 1/2 u'Pu + q'u  s.t.  Hu <= b``.

:class:`ADMMSolver` is the operator-splitting solver used in the control loop.
:func:`solve_qp_dense` is a slow exact reference (least-distance programming
through NNLS) used to check it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize


@dataclass
class SolveStats:
    iterations: int
    wall_ns: int
    converged: bool
    primal_residual: float
    dual_residual: float


@dataclass
class QPSolution:
    u: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    stats: SolveStats


def kkt_residuals(P, q, H, b, u, lam):
    """Primal infeasibility, stationarity and complementarity (inf-norms)."""
    slack = H @ u - b
    primal = float(np.max(np.maximum(slack, 0.0), initial=0.0))
    stat = float(np.max(np.abs(P @ u + q + H.T @ lam), initial=0.0))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    return primal, stat, comp


class ADMMSolver:
    """ADMM on the split ``z = Hu, z <= b`` with a fixed penalty.

    The iteration runs in whitened variables ``w = L'u`` (``P = LL'``), where the
    Hessian is the identity, with constraint rows normalized to unit length.
    Both transforms are cached and reused while the same ``P`` and ``H`` arrays
    are passed in, as happens for a time-invariant MPC.
    """

    def __init__(self, rho=0.1, sigma=1e-6, alpha=1.6, max_iters=200, tol=1e-5):
        self.rho = float(rho)
        self.sigma = float(sigma)
        self.alpha = float(alpha)
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self._key = None
        self._prep = None

    def _prepare(self, P, H):
        if self._key is not None and self._key[0] is P and self._key[1] is H:
            return self._prep
        n = P.shape[0]
        L = scipy.linalg.cholesky(P, lower=True)
        Linv = scipy.linalg.solve_triangular(L, np.eye(n), lower=True)
        HL = H @ Linv.T
        norms = np.linalg.norm(HL, axis=1)
        scale = 1.0 / np.where(norms > 0, norms, 1.0)
        Hs = HL * scale[:, None]
        M = (1.0 + self.sigma) * np.eye(n) + self.rho * Hs.T @ Hs
        Minv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), np.eye(n))
        self._key = (P, H)
        self._prep = (Hs, scale, Minv, Linv)
        return self._prep

    def solve(self, P, q, H, b, warm_start: QPSolution | None = None) -> QPSolution:
        t0 = time.perf_counter_ns()
        finite = np.isfinite(b)
        if not np.all(finite):
            H, b = H[finite], b[finite]
            self._key = None
        Hs, scale, Minv, Linv = self._prepare(P, H)
        bs = b * scale
        qs = Linv @ q
        rho, sigma, alpha, tol = self.rho, self.sigma, self.alpha, self.tol

        y = np.zeros_like(bs)
        if warm_start is not None and warm_start.u.shape == q.shape:
            w = _whiten(P, Linv, warm_start.u)
            if (warm_start.lam is not None and warm_start.lam.shape == b.shape
                    and np.all(finite)):
                y = warm_start.lam / scale
        else:
            w = np.zeros_like(q)
        z = np.minimum(Hs @ w, bs)
        if (warm_start is not None and warm_start.z is not None
                and warm_start.z.shape == b.shape and np.all(finite)):
            z = np.minimum(warm_start.z * scale, bs)

        HsT = Hs.T
        converged = False
        prim = dual = np.inf
        it = 0
        for it in range(1, self.max_iters + 1):
            w = Minv @ (sigma * w - qs + HsT @ (rho * z - y))
            Hw = Hs @ w
            zr = alpha * Hw + (1.0 - alpha) * z
            z_new = np.minimum(zr + y / rho, bs)
            y = y + rho * (zr - z_new)
            z = z_new
            # residuals in the original (unscaled) row units
            prim = float(np.max(np.abs(Hw - z) / scale, initial=0.0))
            if prim <= tol:
                u = Linv.T @ w
                dual = float(np.max(np.abs(P @ u + q + H.T @ (y * scale)), initial=0.0))
                if dual <= tol:
                    converged = True
                    break
        u = Linv.T @ w
        if not converged:
            dual = float(np.max(np.abs(P @ u + q + H.T @ (y * scale)), initial=0.0))
        stats = SolveStats(iterations=it, wall_ns=time.perf_counter_ns() - t0,
                           converged=converged, primal_residual=prim, dual_residual=dual)
        return QPSolution(u=u, z=z / scale, lam=y * scale, stats=stats)


def _whiten(P, Linv, u):
    # w = L'u  with  L' = (L^-1)^-T ;  L^-1 P = L'
    return Linv @ (P @ u)


def solve_qp(qp, warm_start=None, max_iters=200, tol=1e-5, rho=0.1, sigma=1e-6, alpha=1.6):
    """Solve a :class:`~lingp_mpc.mpc.condensed.CondensedQP`; returns ``(u, stats)``."""
    solver = ADMMSolver(rho=rho, sigma=sigma, alpha=alpha, max_iters=max_iters, tol=tol)
    sol = solver.solve(qp.P, qp.q, qp.H, qp.b, warm_start)
    return sol.u, sol.stats


class InfeasibleQPError(ValueError):
    pass


def solve_qp_dense(P, q, H, b):
    """Exact solution via least-distance programming and NNLS.

    With ``P = L L'`` and ``w = L'u + L^-1 q`` the QP becomes
    ``min |w|  s.t.  G w >= h``; its solution follows from one NNLS problem.
    Returns ``(u, lam)``.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    keep = np.isfinite(b)
    Hf, bf = np.asarray(H, dtype=float)[keep], np.asarray(b, dtype=float)[keep]
    L = np.linalg.cholesky(P)
    u_free = -scipy.linalg.cho_solve((L, True), q)
    if Hf.shape[0] == 0 or np.all(Hf @ u_free <= bf):
        return u_free, np.zeros(len(b))
    Linv_q = scipy.linalg.solve_triangular(L, q, lower=True)
    # H u = H L^-T (w - L^-1 q) <= b   ->   G w >= h
    HLt = scipy.linalg.solve_triangular(L, Hf.T, lower=True).T
    G = -HLt
    h = -(bf + HLt @ Linv_q)
    n = G.shape[1]
    Emat = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    zsol, _ = scipy.optimize.nnls(Emat, f, maxiter=50 * Emat.shape[1])
    res = Emat @ zsol - f
    if abs(res[-1]) < 1e-14:
        raise InfeasibleQPError("constraints are infeasible")
    w = -res[:n] / res[-1]
    u = scipy.linalg.solve_triangular(L.T, w - Linv_q, lower=False)
    lam_f = zsol / (-res[-1])
    lam = np.zeros(len(b))
    lam[keep] = lam_f
    return u, lam
