"""Synthetic ground-truth downwash field and the force measurement model.

The field is a Gaussian in horizontal offset times an exponential decay in
vertical separation, calibrated so that a drone 0.30 m directly below another
feels 0.0883 N (9 gram-force) pushing down.
"""

from __future__ import annotations

import numpy as np

from .config import DownwashParams, QuadrotorParams
from .dynamics import motor_to_wrench, rotation_matrix


def true_force(dp, params: DownwashParams) -> np.ndarray:
    """World-frame force on the lower drone for offset ``dp = p_upper - p_lower``.

    Accepts a single offset ``(3,)`` or a stack ``(..., 3)``.  Zero unless the
    other drone is more than ``activation_dz`` above.
    """
    dp = np.asarray(dp, dtype=float)
    r2 = dp[..., 0] ** 2 + dp[..., 1] ** 2
    dz = dp[..., 2]
    radial = np.exp(-r2 / (2.0 * params.radial_width**2))
    # guard exp overflow on inactive (dz <= threshold) entries before masking
    vertical = np.exp(-(np.maximum(dz, params.activation_dz) - params.reference_separation)
                      / params.vertical_decay)
    fz = np.minimum(params.peak_force * radial * vertical, params.clamp_factor * params.peak_force)
    fz = np.where(dz > params.activation_dz, -fz, 0.0)
    out = np.zeros(dp.shape)
    out[..., 2] = fz
    return out


def true_force_z(dp, params: DownwashParams):
    return true_force(dp, params)[..., 2]


def measure_force(state, u, accel, quad: QuadrotorParams, noise_std: float = 0.0,
                  rng: np.random.Generator | None = None) -> float:
    """Recover the z external force from an observed acceleration.

    Inverts ``m a = m g + R [0, 0, T] + f`` for ``f_z``; optionally adds
    Gaussian noise drawn from ``rng``.
    """
    state = np.asarray(state, dtype=float)
    thrust = motor_to_wrench(u, quad)[0]
    R = rotation_matrix(state[3:6])
    f = quad.mass * np.asarray(accel, dtype=float) - thrust * R[:, 2]
    f[2] += quad.mass * quad.gravity
    fz = float(f[2])
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requested without a random generator")
        fz += float(rng.normal(0.0, noise_std))
    return fz


def truth_grid(params: DownwashParams, xy_extent: float = 0.3, z_range=(0.15, 0.5),
               n: int = 21) -> np.ndarray:
    """Truth field sampled on a regular grid; rows ``(dx, dy, dz, fz)``."""
    xs = np.linspace(-xy_extent, xy_extent, n)
    zs = np.linspace(z_range[0], z_range[1], n)
    X, Y, Z = np.meshgrid(xs, xs, zs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return np.column_stack([pts, true_force_z(pts, params)])
