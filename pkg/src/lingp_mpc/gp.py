"""Exact GP regression, the rational quadratic kernel, GP-mean linearization and
additive-GP component posteriors."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.spatial.distance

log = logging.getLogger(__name__)

RATIONAL_QUADRATIC = "rational_quadratic"
SQUARED_EXPONENTIAL = "squared_exponential"

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Kernel matrix could not be factored even with jitter."""


@dataclass(frozen=True)
class Kernel:
    """Stationary kernel with per-dimension length scales.

    ``variance`` is the signal variance; ``alpha`` is only used by the rational
    quadratic kind.
    """

    kind: str = RATIONAL_QUADRATIC
    variance: float = 0.05**2
    lengthscales: tuple = (0.1, 0.1, 0.15)
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        if self.kind not in (RATIONAL_QUADRATIC, SQUARED_EXPONENTIAL):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.variance <= 0 or min(self.lengthscales) <= 0 or self.alpha <= 0:
            raise ValueError("kernel hyperparameters must be positive")

    @property
    def ell(self) -> np.ndarray:
        return np.asarray(self.lengthscales)

    def _scaled_sq_dist(self, X1, X2):
        A = np.atleast_2d(X1) / self.ell
        B = np.atleast_2d(X2) / self.ell
        return scipy.spatial.distance.cdist(A, B, "sqeuclidean")

    def _profile(self, r2):
        if self.kind == RATIONAL_QUADRATIC:
            return self.variance * (1.0 + r2 / (2.0 * self.alpha)) ** (-self.alpha)
        return self.variance * np.exp(-0.5 * r2)

    def _profile_slope(self, r2):
        """d k / d (r^2 / 2)."""
        if self.kind == RATIONAL_QUADRATIC:
            return -self.variance * (1.0 + r2 / (2.0 * self.alpha)) ** (-self.alpha - 1.0)
        return -self.variance * np.exp(-0.5 * r2)

    def __call__(self, X1, X2) -> np.ndarray:
        """Kernel matrix between row-stacked inputs."""
        return self._profile(self._scaled_sq_dist(X1, X2))

    def diag(self, X) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], self.variance)

    def grad(self, X, d) -> np.ndarray:
        """Gradient of ``k(X[i], d)`` with respect to ``d``; shape ``(n, dim)``."""
        X = np.atleast_2d(X)
        d = np.asarray(d, dtype=float)
        diff = (d[None, :] - X) / self.ell**2
        r2 = np.sum(diff * (d[None, :] - X), axis=1)
        return self._profile_slope(r2)[:, None] * diff


def kernel_eval(k: Kernel, x, x_prime) -> float:
    return float(k(np.asarray(x, dtype=float)[None], np.asarray(x_prime, dtype=float)[None])[0, 0])


def kernel_from_config(cfg) -> Kernel:
    return Kernel(kind=cfg.kernel, variance=cfg.signal_std**2,
                  lengthscales=cfg.lengthscales, alpha=cfg.alpha)


@dataclass
class ForceDataset:
    """Relative positions ``X`` (n, 3) with measured z forces ``y`` (n,)."""

    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 3)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if len(self.X) != len(self.y):
            raise ValueError("inputs and targets differ in length")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return len(self.y)

    def extend(self, X, y) -> "ForceDataset":
        return ForceDataset(np.vstack([self.X, np.reshape(X, (-1, 3))]),
                            np.concatenate([self.y, np.ravel(y)]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dx", "dy", "dz", "fz"])
            for xi, yi in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in (*xi, yi)])

    @classmethod
    def from_csv(cls, path) -> "ForceDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["dx", "dy", "dz", "fz"]:
            raise ValueError(f"{path}: expected header dx,dy,dz,fz")
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 4)
        return cls(data[:, :3], data[:, 3])


def _factor(K: np.ndarray, noise_var: float):
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in _JITTERS:
        try:
            L = scipy.linalg.cholesky(K + (noise_var + jitter * scale) * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
        if jitter:
            log.warning("kernel matrix needed jitter %.1e to factor", jitter)
        return L, jitter * scale
    raise NotPositiveDefiniteError("kernel matrix is not positive definite (check "
                                   "hyperparameters or use a positive noise variance)")


@dataclass(frozen=True, eq=False)
class GPModel:
    """Fitted zero-mean GP; immutable after :func:`fit`."""

    kernel: Kernel
    X: np.ndarray
    y: np.ndarray
    noise_var: float
    L: np.ndarray
    w: np.ndarray
    jitter: float = 0.0

    def predict_mean(self, d) -> np.ndarray | float:
        d = np.asarray(d, dtype=float)
        single = d.ndim == 1
        mu = self.kernel(np.atleast_2d(d), self.X) @ self.w
        return float(mu[0]) if single else mu

    def predict_var(self, d) -> np.ndarray | float:
        d = np.asarray(d, dtype=float)
        single = d.ndim == 1
        D = np.atleast_2d(d)
        Ks = self.kernel(self.X, D)
        v = scipy.linalg.solve_triangular(self.L, Ks, lower=True)
        var = np.maximum(self.kernel.diag(D) - np.sum(v * v, axis=0), 0.0)
        return float(var[0]) if single else var

    def predict(self, d):
        return self.predict_mean(d), self.predict_var(d)

    def linearize(self, d0) -> "LinGPModel":
        return linearize(self, d0)


def fit(X, y, kernel: Kernel, noise_var: float) -> GPModel:
    """Factor ``K + noise_var I`` and solve for the weight vector.

    Raises
    ------
    NotPositiveDefiniteError
        If factorization fails after jitter escalation up to 1e-6.
    """
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0:
        raise ValueError("cannot fit a GP to an empty dataset")
    if noise_var < 0:
        raise ValueError("noise variance must be >= 0")
    L, jitter = _factor(kernel(X, X), noise_var)
    w = scipy.linalg.cho_solve((L, True), y)
    return GPModel(kernel, X, y, noise_var, L, w, jitter)


def fit_dataset(data: ForceDataset, kernel: Kernel, noise_var: float) -> GPModel:
    return fit(data.X, data.y, kernel, noise_var)


def predict_mean(gp: GPModel, d):
    return gp.predict_mean(d)


def predict_var(gp: GPModel, d):
    return gp.predict_var(d)


@dataclass(frozen=True)
class LinGPModel:
    """Tangent-plane model ``f(d) ~ gradient . d + offset`` of a GP mean at ``d0``."""

    d0: np.ndarray
    offset: float
    gradient: np.ndarray
    radius: float = 0.0

    def predict(self, d):
        return np.asarray(d, dtype=float) @ self.gradient + self.offset

    @property
    def value_at_d0(self) -> float:
        return float(self.d0 @ self.gradient + self.offset)


def linearize(gp: GPModel, d0) -> LinGPModel:
    """First-order expansion of the posterior mean about ``d0``.

    The offset is chosen so that the affine map reproduces the mean exactly at
    ``d0``.  ``radius`` reports the smallest length scale as a rough validity
    range.
    """
    d0 = np.asarray(d0, dtype=float)
    mu0 = float(gp.kernel(d0[None], gp.X)[0] @ gp.w)
    grad = gp.w @ gp.kernel.grad(gp.X, d0)
    return LinGPModel(d0=d0.copy(), offset=mu0 - float(grad @ d0), gradient=grad,
                      radius=float(min(gp.kernel.lengthscales)))


class ZeroForceModel:
    """Stand-in GP predicting no disturbance anywhere."""

    def predict_mean(self, d):
        d = np.asarray(d, dtype=float)
        return 0.0 if d.ndim == 1 else np.zeros(d.shape[0])

    def linearize(self, d0):
        d0 = np.asarray(d0, dtype=float)
        return LinGPModel(d0=d0.copy(), offset=0.0, gradient=np.zeros_like(d0))


class GatedForceModel:
    """Force model trusted only inside an offset box; zero force outside.

    Guards the controllers against GP extrapolation beyond the sampled
    interaction region, where the posterior mean can swing by tens of mN.
    """

    def __init__(self, model, lo, hi):
        self.model = model
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def inside(self, d) -> np.ndarray | bool:
        d = np.asarray(d, dtype=float)
        ok = np.all((d >= self.lo) & (d <= self.hi), axis=-1)
        return bool(ok) if d.ndim == 1 else ok

    def predict_mean(self, d):
        d = np.asarray(d, dtype=float)
        if d.ndim == 1:
            return float(self.model.predict_mean(d)) if self.inside(d) else 0.0
        out = np.zeros(d.shape[0])
        ok = self.inside(d)
        if ok.any():
            out[ok] = self.model.predict_mean(d[ok])
        return out

    def linearize(self, d0):
        if self.inside(d0):
            return self.model.linearize(d0)
        return ZeroForceModel().linearize(d0)


class AdditiveGP:
    """GP whose kernel is a sum of component kernels on disjoint input groups.

    Component posteriors share the joint ``(K + noise I)^-1``.
    """

    def __init__(self, X, y, kernels: Sequence[Kernel], groups: Sequence[Sequence[int]],
                 noise_var: float):
        groups = [tuple(int(i) for i in g) for g in groups]
        if len(groups) != len(kernels):
            raise ValueError("need one kernel per group")
        seen = set()
        for g in groups:
            if seen.intersection(g):
                raise ValueError(f"additive groups overlap: {groups}")
            seen.update(g)
        self.kernels = list(kernels)
        self.groups = groups
        self.noise_var = float(noise_var)
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        if len(self.y) == 0:
            raise ValueError("cannot fit an additive GP to an empty dataset")
        if max(seen) >= self.X.shape[1]:
            raise ValueError("group index exceeds input dimension")
        K = sum(self._component_matrix(m, self.X, self.X) for m in range(len(groups)))
        self.L, self.jitter = _factor(K, self.noise_var)
        self.w = scipy.linalg.cho_solve((self.L, True), self.y)

    @property
    def n_components(self) -> int:
        return len(self.groups)

    def _component_matrix(self, m, X1, X2):
        g = list(self.groups[m])
        return self.kernels[m](np.atleast_2d(X1)[:, g], np.atleast_2d(X2)[:, g])

    def component_mean(self, m: int, x):
        x = np.asarray(x, dtype=float)
        mu = self._component_matrix(m, np.atleast_2d(x), self.X) @ self.w
        return float(mu[0]) if x.ndim == 1 else mu

    def component_var(self, m: int, x):
        x = np.asarray(x, dtype=float)
        D = np.atleast_2d(x)
        v = scipy.linalg.solve_triangular(self.L, self._component_matrix(m, self.X, D), lower=True)
        var = np.maximum(self.kernels[m].diag(D) - np.sum(v * v, axis=0), 0.0)
        return float(var[0]) if x.ndim == 1 else var

    def mean(self, x):
        return sum(self.component_mean(m, x) for m in range(self.n_components))

    def var(self, x):
        """Posterior variance of the summed function."""
        x = np.asarray(x, dtype=float)
        D = np.atleast_2d(x)
        Ks = sum(self._component_matrix(m, self.X, D) for m in range(self.n_components))
        prior = sum(k.diag(D) for k in self.kernels)
        v = scipy.linalg.solve_triangular(self.L, Ks, lower=True)
        var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
        return float(var[0]) if x.ndim == 1 else var


def additive_fit(X, y, kernels, groups, noise_var) -> AdditiveGP:
    return AdditiveGP(X, y, kernels, groups, noise_var)


def additive_component_mean(agp: AdditiveGP, m: int, x):
    return agp.component_mean(m, x)


def additive_component_var(agp: AdditiveGP, m: int, x):
    return agp.component_var(m, x)


def grid_search(data: ForceDataset, base: Kernel, noise_var: float,
                scales=(0.5, 1.0, 2.0)) -> Kernel:
    """Pick length scales and signal variance maximizing the log marginal likelihood
    over a small multiplicative grid around ``base``."""
    best, best_ll = base, -np.inf
    for s_ell in scales:
        for s_var in scales:
            k = Kernel(base.kind, base.variance * s_var**2,
                       tuple(np.asarray(base.lengthscales) * s_ell), base.alpha)
            try:
                gp = fit_dataset(data, k, noise_var)
            except NotPositiveDefiniteError:
                continue
            ll = -0.5 * data.y @ gp.w - np.sum(np.log(np.diag(gp.L)))
            if ll > best_ll:
                best, best_ll = k, ll
    return best
