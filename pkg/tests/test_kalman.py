import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_discrete_are

from rcsslab.kalman import (
    CSV_COLUMNS,
    AxisState,
    FilterConfig,
    FilterState,
    LengthMismatch,
    NoObservations,
    filter_samples,
    iter_filter,
    predict,
    process_noise,
    read_series_csv,
    rmse,
    run_filter,
    simulate,
    steady_state_gain,
    step,
    transition_matrix,
    update,
    write_series_csv,
)
from rcsslab.model import Vec2

C = FilterConfig()


def dare_gain(c: FilterConfig) -> float:
    """Steady-state position gain from scipy's Riccati solver (prior covariance fixpoint)."""
    F, Q = transition_matrix(c), process_noise(c)
    H = np.array([[1.0, 0.0, 0.0]])
    P = solve_discrete_are(F.T, H.T, Q, np.array([[c.sigma_z ** 2]]))
    return P[0, 0] / (P[0, 0] + c.sigma_z ** 2)


def matrix_update(mean, cov, z, r):
    H = np.array([[1.0, 0.0, 0.0]])
    S = H @ cov @ H.T + r
    K = cov @ H.T @ np.linalg.inv(S)
    return mean + (K @ (np.array([z]) - H @ mean)), K[:, 0]


# ---------------------------------------------------------------- predict / update

def test_predict_zero_dynamics():
    c = FilterConfig(sigma_a=0.0)
    cov = np.diag([1.0, 2.0, 3.0])
    s = predict(AxisState(np.zeros(3), cov), c)
    F = transition_matrix(c)
    assert np.array_equal(s.mean, np.zeros(3))
    assert np.allclose(s.cov, F @ cov @ F.T, atol=0)


@pytest.mark.parametrize("mean, expected", [([0, 1, 0], [1, 1, 0]), ([0, 0, 2], [1, 2, 2])])
def test_predict_mean_follows_transition(mean, expected):
    s = predict(AxisState(np.array(mean, float), np.eye(3)), C)
    assert s.mean.tolist() == expected


def test_update_no_information_limit():
    s = AxisState(np.array([3.0, 1.0, 0.0]), np.eye(3))
    post, gain = update(s, 50.0, FilterConfig(sigma_z=1e12))
    assert np.allclose(post.mean, s.mean, atol=1e-6)
    assert gain == pytest.approx(0, abs=1e-6)


def test_update_no_prior_limit():
    s = AxisState(np.zeros(3), 1e12 * np.eye(3))
    post, _ = update(s, 7.5, FilterConfig(sigma_z=0.3))
    assert post.position == pytest.approx(7.5, abs=1e-6)


def test_update_unit_case_against_matrix_oracle():
    s = AxisState(np.zeros(3), np.eye(3))
    post, gain = update(s, 2.0, FilterConfig(sigma_z=1.0))
    mean, K = matrix_update(s.mean, s.cov, 2.0, 1.0)
    assert gain == K[0] == 0.5
    assert post.position == mean[0] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(-20, 20),
       st.floats(0.01, 5), st.integers(0, 2**31))
def test_update_matches_matrix_oracle(mean, z, sigma_z, seed):
    A = np.random.default_rng(seed).normal(size=(3, 3))
    cov = A @ A.T + 1e-3 * np.eye(3)
    s = AxisState(np.array(mean), cov)
    post, gain = update(s, z, FilterConfig(sigma_z=sigma_z))
    m2, K = matrix_update(s.mean, cov, z, sigma_z ** 2)
    assert np.allclose(post.mean, m2, rtol=1e-9, atol=1e-9)
    assert gain == pytest.approx(K[0], rel=1e-12)
    assert 0.0 <= gain <= 1.0
    assert np.allclose(post.cov, post.cov.T, atol=1e-9)
    assert np.linalg.eigvalsh(post.cov).min() >= -1e-9


# ---------------------------------------------------------------- step

def test_step_without_observation_is_pure_prediction():
    fs = FilterState(AxisState(np.array([1.0, 0.5, 0.1]), np.eye(3)), AxisState(np.array([2.0, -1, 0]), np.eye(3)))
    nxt = step(fs, None, C)
    F = transition_matrix(C)
    assert np.allclose(nxt.x_axis.mean, F @ fs.x_axis.mean, atol=0)
    assert nxt.time == 1 and nxt.last_gain_pos == fs.last_gain_pos


def test_step_zero_innovation_keeps_predicted_position():
    fs = FilterState(AxisState(np.array([1.0, 0.5, 0.0]), np.eye(3)), AxisState(np.array([2.0, 0, 0]), np.eye(3)))
    nxt = step(fs, (1.5, 2.0), C)
    assert nxt.position == Vec2(1.5, 2.0)


def test_three_steps_equal_composed_predict_update():
    fs = FilterState.initial((0.0, 0.0), C)
    ax = fs.x_axis
    for z in (1.0, 2.0, 3.0):
        fs = step(fs, (z, -z), C)
        ax, g = update(predict(ax, C), z, C)
        assert fs.last_gain_pos[0] == pytest.approx(g, rel=1e-12)
    assert np.allclose(fs.x_axis.mean, ax.mean, rtol=1e-12)
    assert np.allclose(fs.x_axis.cov, ax.cov, rtol=1e-12)


# ---------------------------------------------------------------- run_filter

def test_constant_observations_converge():
    est, _ = run_filter([(5.0, 5.0)] * 101)
    assert all(abs(e.x - 5) < 1e-3 and abs(e.y - 5) < 1e-3 for e in est[100:])


def test_all_missing_raises():
    with pytest.raises(NoObservations):
        run_filter([None, None])
    with pytest.raises(NoObservations):
        run_filter([])


def test_gamma_settles():
    _, gamma = run_filter([(0.0, 0.0)] * 400)
    assert all(abs(gamma[t] - gamma[t - 1]) < 1e-10 for t in range(300, 400))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 0.6), st.floats(0.001, 0.5), st.floats(0.05, 2))
def test_unrolled_filter_matches_matrix_filter(seed, dropout, sigma_a, sigma_z):
    c = FilterConfig(sigma_a=sigma_a, sigma_z=sigma_z)
    rng = np.random.default_rng(seed)
    obs = [None if rng.random() < dropout else tuple(rng.normal(0, 20, 2)) for _ in range(120)]
    if all(o is None for o in obs):
        obs[0] = (0.0, 0.0)
    run = run_filter(obs, c)
    states = list(iter_filter(obs, c))
    for e, s, g in zip(run.estimates, states, run.gamma):
        assert e.x == pytest.approx(s.position.x, rel=1e-9, abs=1e-9)
        assert e.y == pytest.approx(s.position.y, rel=1e-9, abs=1e-9)
        assert g == pytest.approx(s.last_gain_pos[0], rel=1e-9, abs=1e-12)


def test_missing_cycles_follow_closed_form_propagation():
    c = FilterConfig()
    obs = [(0.0, 0.0), (1.0, 0.5), (2.1, 1.0), (3.3, 1.4)] + [None] * 15
    states = list(iter_filter(obs, c))
    F = transition_matrix(c)
    base = states[3]
    for k in range(1, 16):
        Fk = np.linalg.matrix_power(F, k)
        assert np.allclose(states[3 + k].x_axis.mean, Fk @ base.x_axis.mean, rtol=1e-12, atol=1e-12)
    run = run_filter(obs, c)
    assert run.gamma[-1] == run.gamma[3]  # gain holds through gaps


# ---------------------------------------------------------------- steady state

def test_default_gain_matches_riccati_oracle():
    g = steady_state_gain(C)
    assert 0 < g < 1
    assert g == pytest.approx(dare_gain(C), abs=1e-9)
    assert g == pytest.approx(0.6673, abs=1e-4)


@pytest.mark.parametrize("sigma_a, sigma_z", [(0.01, 0.3), (0.2, 0.1), (0.05, 2.0), (1.0, 0.5)])
def test_gain_matches_oracle_on_other_configs(sigma_a, sigma_z):
    c = FilterConfig(sigma_a=sigma_a, sigma_z=sigma_z)
    assert steady_state_gain(c) == pytest.approx(dare_gain(c), abs=1e-9)


def test_gain_limits():
    assert steady_state_gain(FilterConfig(sigma_a=0.0, sigma_z=0.3)) == 0.0
    # the gain vanishes like (sigma_a / sigma_z) ** (1/3) for this model
    gains = [steady_state_gain(FilterConfig(sigma_a=a, sigma_z=1.0)) for a in (1e-2, 1e-4, 1e-6, 1e-8)]
    assert gains == sorted(gains, reverse=True) and gains[-1] < 0.01
    assert steady_state_gain(FilterConfig(sigma_a=0.05, sigma_z=1e-6)) > 0.999


def test_gain_monotone_on_grid():
    sa = [0.01, 0.03, 0.1, 0.3]
    sz = [0.1, 0.3, 1.0, 3.0]
    grid = np.array([[steady_state_gain(FilterConfig(sigma_a=a, sigma_z=z)) for z in sz] for a in sa])
    assert np.all(np.diff(grid, axis=0) > 0)  # increasing in sigma_a
    assert np.all(np.diff(grid, axis=1) < 0)  # decreasing in sigma_z


def test_config_validation():
    for bad in ({"dt": 0}, {"sigma_a": -1}, {"sigma_z": 0}, {"initial_P_scale": 0}):
        with pytest.raises(ValueError):
            FilterConfig(**bad)


# ---------------------------------------------------------------- simulation, rmse, csv

def test_simulate_observes_every_cycle_without_dropout():
    s = simulate(C, cycles=300, seed=1)
    assert len(s) == 300 and all(x.observed is not None for x in s)
    assert [x.time for x in s] == list(range(300))
    with pytest.raises(ValueError):
        simulate(C, dropout=1.0)


def test_simulate_tiny_noise_observes_truth():
    s = simulate(FilterConfig(sigma_z=1e-12), cycles=200, seed=3, dropout=0.3)
    present = [x for x in s if x.observed is not None]
    assert 0 < len(present) < 200
    assert all(math.dist(x.observed, x.truth) < 1e-9 for x in present)


def test_simulate_is_deterministic_and_bounded():
    a, b = simulate(C, seed=9), simulate(C, seed=9)
    assert a == b and a != simulate(C, seed=10)
    assert all(abs(x.truth.x) <= 52.5 and abs(x.truth.y) <= 34 for x in a)
    steps = [math.dist(p.truth, q.truth) for p, q in zip(a, a[1:])]
    assert max(steps) <= 1.05 * math.sqrt(2) + 0.01


def test_rmse_examples():
    a = [Vec2(0, 0), Vec2(1, 1)]
    assert rmse(a, a) == 0
    assert rmse(a, [Vec2(1, 0), Vec2(2, 1)]) == 1.0
    assert rmse([Vec2(0, 0), Vec2(0, 0)], [Vec2(3, 4), Vec2(0, 0)]) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(LengthMismatch):
        rmse(a, a[:1])


def test_csv_round_trip_with_missing_cells():
    samples, gamma = filter_samples(simulate(C, cycles=50, seed=2, dropout=0.3), C)
    buf = io.StringIO()
    write_series_csv(samples, gamma, buf)
    text = buf.getvalue()
    header, first = text.splitlines()[:2]
    assert header == ",".join(CSV_COLUMNS)
    missing = next(s for s in samples if s.observed is None)
    row = text.splitlines()[missing.time + 1].split(",")
    assert row[3] == row[4] == ""
    back, g2 = read_series_csv(io.StringIO(text))
    assert back == samples and g2 == gamma


def test_estimates_beat_observations_for_seed_42():
    samples, _ = filter_samples(simulate(C, cycles=1000, seed=42), C)
    obs = [(s.observed, s.truth) for s in samples]
    r_obs = rmse([o for o, _ in obs], [t for _, t in obs])
    r_est = rmse([s.estimated for s in samples], [s.truth for s in samples])
    assert r_est < r_obs
