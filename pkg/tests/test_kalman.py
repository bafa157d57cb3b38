import numpy as np
import pytest

from conftest import AR1_TRUTH, SMOOTHING_PARAMS
from fixedlag.kalman import VARIANCE_FLOOR, exact_statistics, kalman_filter, kalman_smooth, log_likelihood
from fixedlag.models import Ar1Params, ar1_statistics, simulate
from oracles import dense_ar1_loglik, dense_ar1_posterior, grid_ar1_moments


def test_one_step_hand_example():
    post = kalman_filter(Ar1Params(0.8, 0.5, 1.0), np.array([1.0, 0.0]))
    assert post.pred_mean[1] == pytest.approx(0.8)
    assert post.pred_var[1] == pytest.approx(0.89)
    assert post.filt_mean[1] == pytest.approx(0.8 * (1 - 0.89 / 1.89), abs=1e-12)
    assert post.filt_mean[1] == pytest.approx(0.42328, abs=1e-5)
    assert post.filt_var[1] == pytest.approx(0.47090, abs=1e-5)


def test_constant_state_is_conjugate_mean_estimation():
    post = kalman_filter(Ar1Params(1.0, 0.0, 2.0), np.full(20, 0.7))
    np.testing.assert_allclose(post.filt_var, 4.0 / (np.arange(20) + 1), rtol=1e-9)
    np.testing.assert_allclose(post.filt_mean, 0.7, rtol=1e-12)


def test_uninformative_observations_keep_prediction():
    # a = 0 so the prediction does not inherit the diffuse (sigma_v-wide) start
    y = np.array([1.0, 50.0, -50.0, 20.0])
    post = kalman_filter(Ar1Params(0.0, 0.5, 1e6), y)
    np.testing.assert_allclose(post.filt_mean[1:], post.pred_mean[1:], atol=1e-9 * 50)


def test_smoothed_equals_filtered_at_end_and_shrinks_variance():
    _, y = simulate(AR1_TRUTH, 200, seed=1)
    post = kalman_smooth(kalman_filter(SMOOTHING_PARAMS, y))
    assert post.smooth_mean[-1] == post.filt_mean[-1]
    assert post.smooth_var[-1] == post.filt_var[-1]
    assert np.all(post.smooth_var <= post.filt_var + 1e-15)


def test_lag_one_covariance_cauchy_schwarz():
    _, y = simulate(AR1_TRUTH, 200, seed=2)
    post = kalman_smooth(kalman_filter(SMOOTHING_PARAMS, y))
    C, P = post.lag_one_cov, post.smooth_var
    assert np.all(C**2 <= P[:-1] * P[1:] * (1 + 1e-12))


def test_zero_state_noise_smoothed_means_on_one_trajectory():
    _, y = simulate(AR1_TRUTH, 15, seed=3)
    post = kalman_smooth(kalman_filter(Ar1Params(0.9, 0.0, 1.0), y))
    m = post.smooth_mean
    np.testing.assert_allclose(m, m[0] * 0.9 ** np.arange(16), rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_smoother_matches_dense_posterior(seed):
    _, y = simulate(AR1_TRUTH, 12, seed=seed)
    post = kalman_smooth(kalman_filter(SMOOTHING_PARAMS, y))
    mean, cov = dense_ar1_posterior(SMOOTHING_PARAMS, y)
    np.testing.assert_allclose(post.smooth_mean, mean, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(post.smooth_var, np.diag(cov), rtol=1e-9)
    np.testing.assert_allclose(post.lag_one_cov, np.diag(cov, 1), rtol=1e-9, atol=1e-12)


def test_smoother_matches_grid_integration_n3():
    params = Ar1Params(0.8, 0.5, 1.0)
    y = np.array([0.4, -0.3, 1.1, 0.2])
    post = kalman_smooth(kalman_filter(params, y))
    mean, var, cross = grid_ar1_moments(params, y)
    np.testing.assert_allclose(post.smooth_mean, mean, atol=1e-4)
    np.testing.assert_allclose(post.smooth_var, var, atol=1e-4)
    np.testing.assert_allclose(post.lag_one_cov, cross, atol=1e-4)


@pytest.mark.parametrize("convention", ["interior", "complete"])
def test_exact_statistics_match_grid_integration_n3(convention):
    params = Ar1Params(0.8, 0.5, 1.0)
    y = np.array([0.4, -0.3, 1.1, 0.2])
    got = exact_statistics(kalman_smooth(kalman_filter(params, y)), y, convention)
    m, v, c = grid_ar1_moments(params, y)
    second = m * m + v
    s1 = second[1:-1].sum() if convention == "interior" else second[:-1].sum()
    s3 = second.sum() if convention == "interior" else second[1:].sum()
    want = [s1, np.sum(m[:-1] * m[1:] + c), s3, np.sum((y - m) ** 2 + v)]
    np.testing.assert_allclose(got, want, atol=1e-4)


def test_exact_statistics_degenerate_limit():
    x, y = simulate(Ar1Params(0.9, 0.0, 0.0), 6, seed=1, x0=1.5)
    got = exact_statistics(kalman_smooth(kalman_filter(Ar1Params(0.9, 0.0, 0.0), y)), y)
    np.testing.assert_allclose(got, ar1_statistics().evaluate_path(x, y), atol=1e-6)


def test_variance_floor_is_applied():
    post = kalman_filter(Ar1Params(0.9, 0.0, 0.0), np.ones(3))
    assert np.all(post.filt_var > 0)
    assert np.all(post.filt_var <= 2 * VARIANCE_FLOOR)


def test_negative_noise_rejected():
    with pytest.raises(ValueError):
        kalman_filter(Ar1Params(0.9, -0.1, 1.0), np.ones(3))


@pytest.mark.parametrize("params", [SMOOTHING_PARAMS, AR1_TRUTH, Ar1Params(-0.5, 1.3, 0.4)])
def test_loglik_matches_dense_gaussian(params):
    _, y = simulate(AR1_TRUTH, 15, seed=4)
    assert log_likelihood(params, y) == pytest.approx(dense_ar1_loglik(params, y), rel=1e-10)
    assert kalman_filter(params, y).loglik_increments[0] == 0.0
