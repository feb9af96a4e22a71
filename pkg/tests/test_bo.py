import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lingp_mpc.bo import (
    BOState, Region, RegionError, acquire, acquisition_surface, bo_loop, build_surrogates,
    fit_force_gp, learning_curve_csv, most_informative, plan_swap_through, random_target,
    run_episode, update_datasets,
)
from lingp_mpc.gp import ForceDataset, ZeroForceModel

from oracles import dense_gp, rq_kernel


def _std(y):
    y = np.asarray(y, float)
    sd = y.std()
    return (y - y.mean()) / (sd if sd > 1e-12 else 1.0)


def _oracle_surface(state, cfg, X, beta):
    """Acquisition surface from dense solves of each component GP."""
    gp, bo = cfg.gp, cfg.bo
    total = np.zeros(len(X))
    if len(state.force):
        scale = state.force.y.std()
        k = lambda a, b: rq_kernel(a, b, gp.signal_std**2 / scale**2, gp.lengthscales, gp.alpha)
        mu, _, _ = dense_gp(state.force.X, _std(-state.force.y), X, k, (gp.noise_std / scale) ** 2)
        total += bo.force_weight * mu
    groups = bo.perf_groups
    ell = bo.perf_lengthscales

    def kp(a, b):
        return sum(rq_kernel(a[list(g)], b[list(g)], bo.perf_signal_std**2 / len(groups),
                             [ell[i] for i in g], gp.alpha) for g in groups)

    mu, var, _ = dense_gp(state.perf_X, _std(-state.perf_y), X, kp, bo.perf_noise_std**2)
    return total + mu + beta * np.sqrt(var)


def _toy_state(rng, n_force=25, n_perf=4):
    region = Region(0.3, 0.15, 0.5)
    Xf = np.array([region.sample(rng) for _ in range(n_force)]).reshape(-1, 3)
    Xp = np.array([region.sample(rng) for _ in range(n_perf)])
    st_ = BOState(seed=0)
    st_.force = ForceDataset(Xf, -0.1 * np.exp(-Xf[:, 2] / 0.2) + 0.001 * rng.normal(size=n_force))
    st_.perf_X = Xp
    st_.perf_y = rng.uniform(1e-4, 1e-2, size=n_perf)
    st_.curve = [(i + 1, float(J), *x) for i, (J, x) in enumerate(zip(st_.perf_y, Xp))]
    return st_


def test_region_box_and_grid(cfg):
    r = Region.from_config(cfg.bo)
    np.testing.assert_allclose(r.center, [0.0, 0.0, 0.325])
    g = r.grid(21)
    assert g.shape == (21**3, 3)
    assert r.contains(g).all()
    # lexicographic (dx, dy, dz) order
    assert np.all(np.diff(g[:, 0]) >= 0)
    assert not r.contains(np.array([0.31, 0.0, 0.3]))
    assert not r.contains(np.array([0.0, 0.0, 0.14]))


def test_beta_schedule_positive(cfg):
    for t in range(1, 20):
        assert cfg.bo.beta(t) == pytest.approx(2 * np.log(t**2 * np.pi**2 / 0.6))
        assert cfg.bo.beta(t) > 0


def test_cold_start_returns_region_centre(cfg):
    np.testing.assert_array_equal(acquire(BOState(seed=0), cfg), [0.0, 0.0, 0.325])


def test_beta_zero_single_observation_matches_grid_oracle(cfg):
    rng = np.random.default_rng(3)
    state = _toy_state(rng, n_force=20, n_perf=1)
    cfg = cfg.override("bo", grid_resolution=7)
    X = Region.from_config(cfg.bo).grid(7)
    oracle = _oracle_surface(state, cfg, X, beta=0.0)
    got = acquire(state, cfg, beta=0.0)
    np.testing.assert_array_equal(got, X[int(np.argmax(oracle))])


def test_large_beta_maximizes_perf_std(cfg):
    rng = np.random.default_rng(4)
    state = _toy_state(rng, n_force=0, n_perf=1)
    state.force = ForceDataset(np.zeros((0, 3)), np.zeros(0))
    cfg = cfg.override("bo", grid_resolution=9)
    X = Region.from_config(cfg.bo).grid(9)
    got = acquire(state, cfg, beta=1e9)
    kp = lambda a, b: rq_kernel(a, b, 1.0, cfg.bo.perf_lengthscales, cfg.gp.alpha)
    _, var, _ = dense_gp(state.perf_X, np.zeros(1), np.vstack([X, got]), kp,
                         cfg.bo.perf_noise_std**2)
    assert np.sqrt(var[-1]) >= np.sqrt(var[:-1]).max() - 1e-12
    # and it is far from the lone observation
    assert np.linalg.norm((got - state.perf_X[0]) / cfg.bo.perf_lengthscales) > 2.0


def test_additive_surface_equals_component_sum(cfg):
    rng = np.random.default_rng(5)
    for groups in (((0, 1, 2),), ((0, 1), (2,))):
        c = cfg.override("bo", perf_groups=groups)
        state = _toy_state(rng)
        X = Region.from_config(c.bo).grid(21)[rng.choice(21**3, 10, replace=False)]
        beta = c.bo.beta(state.episode + 1)
        got = acquisition_surface(build_surrogates(state, c), X, beta, c.bo)
        np.testing.assert_allclose(got, _oracle_surface(state, c, X, beta), rtol=0, atol=1e-8)


def test_acquisition_deterministic(cfg):
    state = _toy_state(np.random.default_rng(6))
    a = acquire(state, cfg)
    b = acquire(BOState.from_dict(state.to_dict()), cfg)
    np.testing.assert_array_equal(a, b)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 50.0))
def test_region_safety(cfg, seed, beta):
    state = _toy_state(np.random.default_rng(seed), n_force=10, n_perf=3)
    c = cfg.override("bo", grid_resolution=7)
    assert Region.from_config(c.bo).contains(acquire(state, c, beta=beta))


def test_plan_swap_mid_offset(cfg):
    target = np.array([0.12, -0.07, 0.27])
    sc = plan_swap_through(target, cfg)
    mid = int(round(3.0 / cfg.mpc.dt))
    upper = 1 - sc.lower
    rel = sc.refs[upper, mid, 0:3] - sc.refs[sc.lower, mid, 0:3]
    np.testing.assert_allclose(rel, target, atol=1e-9)
    # zero velocity, and zero acceleration (level attitude) at both ends
    for k in (0, sc.steps):
        np.testing.assert_allclose(sc.refs[:, k, 6:9], 0.0, atol=1e-12)
        np.testing.assert_allclose(sc.refs[:, k, 3:5], 0.0, atol=1e-12)
    assert sc.duration == 6.0


def test_plan_swap_overhead_at_04(cfg):
    sc = plan_swap_through([0.0, 0.0, 0.4], cfg)
    mid = int(round(3.0 / cfg.mpc.dt))
    np.testing.assert_allclose(sc.refs[1 - sc.lower, mid, 0:3] - sc.refs[sc.lower, mid, 0:3],
                               [0.0, 0.0, 0.4], atol=1e-12)


@pytest.mark.parametrize("target", [[0.4, 0, 0.3], [0, 0, 0.1], [0, 0, 0.6], [0, -0.35, 0.2]])
def test_plan_swap_rejects_outside_region(cfg, target):
    with pytest.raises(RegionError):
        plan_swap_through(target, cfg)


def test_solo_episode_is_near_zero_cost(cfg):
    ep = run_episode([0, 0, 0.3], ZeroForceModel(), cfg, seed=0, episode=1, solo=True)
    assert ep.J < 1e-3
    assert len(ep.X) == 0


def test_force_samples_equal_in_region_steps(cfg):
    ep = run_episode([0.05, 0.0, 0.3], ZeroForceModel(), cfg, seed=0, episode=1)
    res = ep.result
    up, lo = 1 - res.lower, res.lower
    rel = res.states[up, :res.steps, 0:3] - res.states[lo, :res.steps, 0:3]
    inside = ((np.abs(rel[:, 0]) <= 0.3) & (np.abs(rel[:, 1]) <= 0.3)
              & (rel[:, 2] >= 0.15) & (rel[:, 2] <= 0.5))
    assert len(ep.X) == inside.sum() > 0
    np.testing.assert_array_equal(ep.X, rel[inside])


def test_trained_gp_lowers_episode_cost(cfg, trained_gp):
    untrained = run_episode([0, 0, 0.2], ZeroForceModel(), cfg, seed=0, episode=1)
    trained = run_episode([0, 0, 0.2], trained_gp, cfg, seed=0, episode=1)
    assert trained.J < untrained.J


def test_first_perf_point_is_lexicographic_smallest(cfg):
    state = BOState(seed=0)
    ep = run_episode([0.1, 0.0, 0.3], ZeroForceModel(), cfg, seed=0, episode=1)
    update_datasets(state, ep, cfg)
    smallest = ep.X[np.lexsort((ep.X[:, 2], ep.X[:, 1], ep.X[:, 0]))[0]]
    np.testing.assert_array_equal(state.perf_X[0], smallest)
    assert len(state.force) == len(ep.X) and len(state.perf_y) == 1


def test_most_informative_uses_pre_update_posterior(cfg):
    state = _toy_state(np.random.default_rng(7), n_perf=2)
    cand = np.array([state.perf_X[0], state.perf_X[0] + [0.2, 0.0, 0.0]])
    cand[1] = np.clip(cand[1], [-0.3, -0.3, 0.15], [0.3, 0.3, 0.5])
    # the already-observed point has the smaller std, so the other wins
    np.testing.assert_array_equal(most_informative(state, cfg, cand), cand[1])


def test_refit_force_gp_interpolates_new_samples(cfg):
    state = BOState(seed=0)
    ep = run_episode([0.0, 0.0, 0.25], ZeroForceModel(), cfg, seed=0, episode=1, noise_std=0.0)
    update_datasets(state, ep, cfg)
    gp = fit_force_gp(state.force, cfg)
    assert np.abs(gp.predict_mean(ep.X) - ep.y).max() < 1e-3


def test_single_episode_is_cold_start(cfg):
    out = bo_loop(cfg, seed=0, episodes=1)
    assert out.state.episode == 1
    np.testing.assert_array_equal(out.state.curve[0][2:], [0.0, 0.0, 0.325])


def test_loop_bookkeeping_and_determinism(cfg):
    a = bo_loop(cfg, seed=1, episodes=3).state
    b = bo_loop(cfg, seed=1, episodes=3).state
    assert a.to_dict() == b.to_dict()
    assert len(a.perf_y) == 3
    sizes = []
    for t in range(1, 4):
        part = bo_loop(cfg, seed=1, episodes=t).state
        sizes.append((len(part.force), len(part.perf_y)))
    assert all(n1 < n2 and p1 < p2 for (n1, p1), (n2, p2) in zip(sizes, sizes[1:]))
    assert all(Region.from_config(cfg.bo).contains(np.array(row[2:])) for row in a.curve)


def test_checkpoint_resume_matches_uninterrupted(cfg, tmp_path):
    path = tmp_path / "state.json"
    bo_loop(cfg, seed=2, episodes=2, checkpoint=path)
    resumed = bo_loop(cfg, seed=2, episodes=3, state=BOState.load(path)).state
    straight = bo_loop(cfg, seed=2, episodes=3).state
    assert resumed.to_dict() == straight.to_dict()


def test_checkpoint_mismatch_rejected(cfg):
    state = BOState(seed=5)
    with pytest.raises(ValueError):
        bo_loop(cfg, seed=6, episodes=1, state=state)
    with pytest.raises(ValueError):
        bo_loop(cfg, seed=0, episodes=0)


def test_random_strategy_uses_target_stream(cfg):
    out = bo_loop(cfg, seed=3, strategy="random", episodes=2).state
    for ep, *_ in out.curve:
        np.testing.assert_array_equal(out.curve[ep - 1][2:], random_target(cfg, 3, ep))


def test_learning_curve_csv(cfg):
    state = _toy_state(np.random.default_rng(8), n_perf=2)
    lines = learning_curve_csv(state).splitlines()
    assert lines[0] == "episode,J,target_dx,target_dy,target_dz"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_learning_curve_trailing_median_non_increasing(cfg):
    J = np.array([row[1] for row in bo_loop(cfg).state.curve])
    med = np.array([np.median(J[t - 2:t + 1]) for t in range(2, len(J))])
    assert np.all(np.diff(med) <= 0), np.round(med, 6)
