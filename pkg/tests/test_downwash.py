import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lingp_mpc.bo import Region
from lingp_mpc.config import rng_for
from lingp_mpc.downwash import measure_force, true_force, true_force_z, truth_grid
from lingp_mpc.dynamics import hover_state, nonlinear_derivative
from lingp_mpc.simulator import run_scenario, swap_scenario

coord = st.floats(-0.5, 0.5, allow_nan=False)


def test_anchor_nine_gram_force(cfg):
    f = true_force([0.0, 0.0, 0.30], cfg.downwash)
    assert f[2] == pytest.approx(-0.0883, abs=1e-6)
    assert f[0] == 0.0 and f[1] == 0.0


@given(coord, coord, st.floats(-1.0, 0.05))
def test_inactive_when_other_drone_not_above(dx, dy, dz):
    from lingp_mpc.config import default_config
    np.testing.assert_array_equal(true_force([dx, dy, dz], default_config().downwash), 0.0)


@given(coord, coord, st.floats(0.06, 1.0))
def test_radial_symmetry(dx, dy, dz):
    from lingp_mpc.config import default_config
    p = default_config().downwash
    f = true_force_z(np.array([dx, dy, dz]), p)
    assert true_force_z(np.array([-dx, dy, dz]), p) == f
    assert true_force_z(np.array([dy, dx, dz]), p) == f


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.floats(0.06, 1.0))
def test_magnitude_nonincreasing_in_radius(r1, r2, dz):
    from lingp_mpc.config import default_config
    p = default_config().downwash
    lo, hi = sorted((r1, r2))
    assert abs(true_force_z(np.array([hi, 0, dz]), p)) <= abs(true_force_z(np.array([lo, 0, dz]), p))


def test_clamped_at_three_peak(cfg):
    f = true_force_z(np.array([0.0, 0.0, 0.06]), cfg.downwash)
    assert abs(f) <= 3 * cfg.downwash.peak_force + 1e-15


def test_stacked_input(cfg):
    pts = np.array([[0, 0, 0.3], [0, 0, -0.3], [0.1, 0.0, 0.3]])
    f = true_force(pts, cfg.downwash)
    assert f.shape == (3, 3)
    np.testing.assert_array_equal(f[1], 0.0)
    assert f[2, 2] == pytest.approx(-0.0883 * np.exp(-0.5))


def test_measure_inverts_known_force(quad):
    x = hover_state((0, 0, 0.5))
    f = np.array([0.0, 0.0, -0.05])
    acc = nonlinear_derivative(x, quad.u_hover, quad, f)[6:9]
    assert measure_force(x, quad.u_hover, acc, quad) == pytest.approx(-0.05, abs=1e-12)


def test_measure_zero_force(quad):
    x = hover_state()
    acc = nonlinear_derivative(x, quad.u_hover, quad)[6:9]
    assert measure_force(x, quad.u_hover, acc, quad) == pytest.approx(0.0, abs=1e-15)


def test_measure_tilted_state(quad):
    x = hover_state()
    x[3:6] = [0.2, -0.15, 0.4]
    u = quad.u_hover * 1.1
    f = np.array([0.01, -0.02, -0.07])
    acc = nonlinear_derivative(x, u, quad, f)[6:9]
    assert measure_force(x, u, acc, quad) == pytest.approx(-0.07, abs=1e-12)


def test_noise_requires_rng(quad):
    with pytest.raises(ValueError):
        measure_force(hover_state(), quad.u_hover, np.zeros(3), quad, noise_std=0.1)


def _pass(cfg, noise_std):
    sc = swap_scenario(0.3, cfg, "linmpc", seed=0)
    return run_scenario(sc, cfg, None, noise_rng=rng_for(0, "noise", 0), noise_std=noise_std)


def test_noiseless_measurement_inverts_injected_force(cfg):
    res = _pass(cfg, 0.0)
    np.testing.assert_allclose(res.measured_fz, res.forces[res.lower, :, 2], atol=1e-9)
    assert np.min(res.measured_fz) < -0.05  # the pass does go through the wake


def test_noisy_measurements_within_three_sigma(cfg):
    res = _pass(cfg, cfg.downwash.noise_std)
    inside = Region.from_config(cfg.bo).contains(res.offsets, tol=0.0)
    err = (res.measured_fz - true_force_z(res.offsets, cfg.downwash))[inside]
    assert inside.sum() >= 30
    assert np.max(np.abs(err)) <= 3 * cfg.downwash.noise_std
    # and the noise is actually present
    assert np.std(err) == pytest.approx(cfg.downwash.noise_std, rel=0.2)


def test_truth_grid_layout(cfg):
    g = truth_grid(cfg.downwash, n=5)
    assert g.shape == (125, 4)
    np.testing.assert_allclose(g[:, 3], true_force_z(g[:, :3], cfg.downwash))
