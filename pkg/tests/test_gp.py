import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lingp_mpc.gp import (
    RATIONAL_QUADRATIC,
    SQUARED_EXPONENTIAL,
    AdditiveGP,
    ForceDataset,
    Kernel,
    NotPositiveDefiniteError,
    additive_component_mean,
    additive_fit,
    fit,
    kernel_eval,
    linearize,
)

from oracles import central_gradient, dense_gp, rq_kernel, se_kernel

K0 = Kernel(RATIONAL_QUADRATIC, 0.05**2, (0.1, 0.1, 0.15), 1.0)


def _random_dataset(rng, n):
    X = rng.uniform([-0.3, -0.3, 0.15], [0.3, 0.3, 0.5], size=(n, 3))
    y = -0.08 * np.exp(-(X[:, 0] ** 2 + X[:, 1] ** 2) / 0.02) + rng.normal(0, 0.01, n)
    return X, y


def _random_kernel(rng):
    return Kernel(RATIONAL_QUADRATIC, float(rng.uniform(0.5, 2.0)) * 0.05**2,
                  tuple(rng.uniform(0.08, 0.3, 3)), float(rng.uniform(0.5, 3.0)))


def test_kernel_self_is_variance():
    x = np.array([0.1, -0.2, 0.3])
    assert kernel_eval(K0, x, x) == K0.variance


@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_kernel_symmetric(v):
    a, b = np.array(v[:3]), np.array(v[3:])
    assert kernel_eval(K0, a, b) == kernel_eval(K0, b, a)


def test_kernel_matches_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        expect = rq_kernel(a, b, K0.variance, K0.lengthscales, K0.alpha)
        assert kernel_eval(K0, a, b) == pytest.approx(expect, rel=1e-13)


def test_rq_approaches_se_for_large_alpha():
    rq = Kernel(RATIONAL_QUADRATIC, 1.0, (0.1, 0.2, 0.3), 1e6)
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(0, 0.2, 3), rng.normal(0, 0.2, 3)
        assert abs(kernel_eval(rq, a, b) - se_kernel(a, b, 1.0, (0.1, 0.2, 0.3))) < 1e-3


def test_se_kernel_kind():
    se = Kernel(SQUARED_EXPONENTIAL, 2.0, (0.5, 0.5, 0.5))
    a, b = np.zeros(3), np.array([0.5, 0.0, 0.0])
    assert kernel_eval(se, a, b) == pytest.approx(2.0 * np.exp(-0.5))


def test_kernel_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        Kernel(RATIONAL_QUADRATIC, -1.0)
    with pytest.raises(ValueError):
        Kernel(RATIONAL_QUADRATIC, 1.0, (0.1, 0.0, 0.1))


def test_single_point_posterior():
    x0, y0, nv = np.array([[0.0, 0.1, 0.3]]), np.array([0.7]), 0.01
    gp = fit(x0, y0, K0, nv)
    assert gp.predict_mean(x0[0]) == pytest.approx(0.7 * K0.variance / (K0.variance + nv))


def test_noiseless_interpolation():
    rng = np.random.default_rng(2)
    X, y = _random_dataset(rng, 25)
    gp = fit(X, y, K0, 1e-8)
    assert np.max(np.abs(gp.predict_mean(X) - y)) < 1e-4 * np.max(np.abs(y))


def test_weights_match_gauss_elimination():
    rng = np.random.default_rng(3)
    X, y = _random_dataset(rng, 30)
    gp = fit(X, y, K0, 1e-4)
    kf = lambda a, b: rq_kernel(a, b, K0.variance, K0.lengthscales, K0.alpha)
    _, _, w = dense_gp(X, y, X[:1], kf, 1e-4)
    np.testing.assert_allclose(gp.w, w, rtol=1e-8)


def test_weight_residual():
    rng = np.random.default_rng(4)
    X, y = _random_dataset(rng, 40)
    gp = fit(X, y, K0, 4e-6)
    K = K0(X, X) + 4e-6 * np.eye(40)
    assert np.linalg.norm(K @ gp.w - y) / np.linalg.norm(y) < 1e-10


def test_far_field_recovers_prior():
    rng = np.random.default_rng(5)
    X, y = _random_dataset(rng, 20)
    gp = fit(X, y, Kernel(SQUARED_EXPONENTIAL, K0.variance, K0.lengthscales), 4e-6)
    far = np.array([50.0, 50.0, 50.0])
    assert abs(gp.predict_mean(far)) < 1e-12
    assert gp.predict_var(far) == pytest.approx(K0.variance, rel=1e-9)


def test_variance_reduced_at_training_inputs():
    rng = np.random.default_rng(6)
    X, y = _random_dataset(rng, 20)
    gp = fit(X, y, K0, 4e-6)
    var = gp.predict_var(X)
    assert np.all(var >= 0) and np.all(var < K0.variance)


def test_mean_linear_in_targets_and_variance_independent():
    rng = np.random.default_rng(7)
    X, y = _random_dataset(rng, 20)
    Xs = rng.uniform(-0.3, 0.5, (15, 3))
    g1, g2 = fit(X, y, K0, 4e-6), fit(X, 2 * y, K0, 4e-6)
    g3 = fit(X, rng.normal(size=20), K0, 4e-6)
    np.testing.assert_allclose(g2.predict_mean(Xs), 2 * g1.predict_mean(Xs), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(g1.predict_var(Xs), g3.predict_var(Xs), rtol=1e-12, atol=0)


def test_duplicate_inputs_without_noise_escalate_jitter_then_succeed():
    X = np.array([[0.0, 0.0, 0.3], [0.0, 0.0, 0.3]])
    gp = fit(X, np.array([1.0, 1.0]), K0, 0.0)
    assert gp.jitter > 0


class _IndefiniteKernel(Kernel):
    def __call__(self, X1, X2):
        n = len(np.atleast_2d(X1))
        return -np.eye(n)


def test_non_pd_reported():
    X = np.array([[0.0, 0.0, 0.3], [0.1, 0.0, 0.3]])
    with pytest.raises(NotPositiveDefiniteError):
        fit(X, np.array([1.0, 2.0]), _IndefiniteKernel(), 0.0)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        fit(np.zeros((0, 3)), np.zeros(0), K0, 1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linearize_tangent_and_gradient(seed):
    rng = np.random.default_rng(seed)
    X, y = _random_dataset(rng, int(rng.integers(3, 40)))
    k = _random_kernel(rng)
    gp = fit(X, y, k, 4e-6)
    d0 = rng.uniform([-0.3, -0.3, 0.15], [0.3, 0.3, 0.5])
    lin = linearize(gp, d0)
    mu0 = gp.predict_mean(d0)
    assert abs(lin.predict(d0) - mu0) <= 1e-10 * max(1.0, abs(mu0))
    fd = central_gradient(gp.predict_mean, d0, 1e-5)
    scale = max(np.max(np.abs(fd)), 1e-12)
    assert np.max(np.abs(lin.gradient - fd)) <= 1e-4 * scale


def test_gradient_zero_at_single_training_point():
    x0 = np.array([0.05, -0.1, 0.3])
    gp = fit(x0[None], np.array([-0.08]), K0, 4e-6)
    lin = linearize(gp, x0)
    np.testing.assert_array_equal(lin.gradient, np.zeros(3))


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    X, y = _random_dataset(rng, 12)
    ForceDataset(X, y).to_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "dx,dy,dz,fz"
    back = ForceDataset.from_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.X, X)
    np.testing.assert_array_equal(back.y, y)


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        ForceDataset(np.array([[0.0, np.nan, 0.1]]), np.array([0.0]))


# additive GP ---------------------------------------------------------------

def _additive_case(seed=9):
    rng = np.random.default_rng(seed)
    X, y = _random_dataset(rng, 25)
    kernels = [Kernel(RATIONAL_QUADRATIC, 0.5, (0.2, 0.2)), Kernel(RATIONAL_QUADRATIC, 0.3, (0.1,))]
    groups = [(0, 1), (2,)]
    return rng, X, y, kernels, groups


def test_additive_single_component_equals_plain_gp():
    rng = np.random.default_rng(10)
    X, y = _random_dataset(rng, 20)
    agp = additive_fit(X, y, [K0], [(0, 1, 2)], 4e-6)
    gp = fit(X, y, K0, 4e-6)
    Xs = rng.uniform(-0.3, 0.5, (10, 3))
    np.testing.assert_allclose(agp.mean(Xs), gp.predict_mean(Xs), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(agp.var(Xs), gp.predict_var(Xs), rtol=1e-10, atol=1e-15)


def test_additive_components_sum_to_joint_mean():
    rng, X, y, kernels, groups = _additive_case()
    agp = additive_fit(X, y, kernels, groups, 1e-4)
    Xs = rng.uniform(-0.3, 0.5, (10, 3))
    # joint posterior mean from the summed kernel, computed densely
    kf = lambda a, b: (rq_kernel(a[:2], b[:2], 0.5, (0.2, 0.2), 1.0)
                       + rq_kernel(a[2:], b[2:], 0.3, (0.1,), 1.0))
    mean, var, _ = dense_gp(X, y, Xs, kf, 1e-4)
    total = agp.component_mean(0, Xs) + agp.component_mean(1, Xs)
    np.testing.assert_allclose(total, mean, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(agp.var(Xs), var, rtol=1e-8, atol=1e-12)


def test_additive_component_mean_matches_dense_oracle():
    rng, X, y, kernels, groups = _additive_case(11)
    agp = additive_fit(X, y, kernels, groups, 1e-4)
    Xs = rng.uniform(-0.3, 0.5, (10, 3))
    kf = lambda a, b: (rq_kernel(a[:2], b[:2], 0.5, (0.2, 0.2), 1.0)
                       + rq_kernel(a[2:], b[2:], 0.3, (0.1,), 1.0))
    _, _, w = dense_gp(X, y, Xs[:1], kf, 1e-4)
    k1 = np.array([[rq_kernel(xs[:2], xi[:2], 0.5, (0.2, 0.2), 1.0) for xi in X] for xs in Xs])
    np.testing.assert_allclose(additive_component_mean(agp, 0, Xs), k1 @ w, rtol=1e-8, atol=1e-12)
    kv = np.array([[rq_kernel(xs[:2], xi[:2], 0.5, (0.2, 0.2), 1.0) for xi in X] for xs in Xs])
    Kj = np.array([[kf(a, b) for b in X] for a in X]) + 1e-4 * np.eye(len(X))
    var0 = 0.5 - np.sum(kv * np.linalg.solve(Kj, kv.T).T, axis=1)
    np.testing.assert_allclose(agp.component_var(0, Xs), var0, rtol=1e-8, atol=1e-12)


def test_additive_overlapping_groups_rejected():
    with pytest.raises(ValueError, match="overlap"):
        AdditiveGP(np.zeros((2, 3)), np.zeros(2), [K0, K0], [(0, 1), (1, 2)], 1e-4)
