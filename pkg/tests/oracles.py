"""Brute-force reference implementations used only by the tests."""

import numpy as np


def rq_kernel(x, xp, variance, ell, alpha):
    r2 = sum((x[i] - xp[i]) ** 2 / ell[i] ** 2 for i in range(len(x)))
    return variance * (1.0 + r2 / (2.0 * alpha)) ** (-alpha)


def se_kernel(x, xp, variance, ell):
    r2 = sum((x[i] - xp[i]) ** 2 / ell[i] ** 2 for i in range(len(x)))
    return variance * np.exp(-0.5 * r2)


def gauss_solve(A, b):
    """Gaussian elimination with partial pivoting; ``b`` may be a matrix."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    n = len(A)
    M = np.hstack([A, b])
    for c in range(n):
        p = c + int(np.argmax(np.abs(M[c:, c])))
        M[[c, p]] = M[[p, c]]
        for r in range(c + 1, n):
            M[r] -= M[r, c] / M[c, c] * M[c]
    x = np.zeros_like(b)
    for r in range(n - 1, -1, -1):
        x[r] = (M[r, n:] - M[r, r + 1:n] @ x[r + 1:]) / M[r, r]
    return x[:, 0] if vec else x


def dense_gp(X, y, Xs, kfun, noise_var):
    """Posterior mean and variance by forming and solving the full system."""
    n = len(X)
    K = np.array([[kfun(X[i], X[j]) for j in range(n)] for i in range(n)]) + noise_var * np.eye(n)
    Ks = np.array([[kfun(X[i], xs) for xs in Xs] for i in range(n)])
    w = gauss_solve(K, y)
    V = gauss_solve(K, Ks)
    mean = Ks.T @ w
    var = np.array([kfun(xs, xs) for xs in Xs]) - np.sum(Ks * V, axis=0)
    return mean, var, w


def central_gradient(f, x, h):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def lqr_dense_qp(A, B, Q, R, Qf, N, x0):
    """Unconstrained condensed QP for ``sum x'Qx + u'Ru + x_N'Qf x_N`` (halved),
    built stage by stage without the library helpers."""
    n, m = B.shape
    # x_k = A^k x0 + sum_j A^(k-1-j) B u_j
    G = np.zeros((N * n, N * m))
    F = np.zeros((N * n, n))
    Ak = np.eye(n)
    for k in range(1, N + 1):
        Ak = A @ Ak
        F[(k - 1) * n:k * n] = Ak
        for j in range(k):
            G[(k - 1) * n:k * n, j * m:(j + 1) * m] = np.linalg.matrix_power(A, k - 1 - j) @ B
    W = np.zeros((N * n, N * n))
    for k in range(N):
        W[k * n:(k + 1) * n, k * n:(k + 1) * n] = Q if k < N - 1 else Qf
    Rb = np.kron(np.eye(N), R)
    H = G.T @ W @ G + Rb
    g = G.T @ W @ F @ x0
    u = gauss_solve(H, -g)
    return u, H, g, G, F
