import math

import numpy as np
import pytest
from scipy import optimize

from conftest import AR1_TRUTH, SV_TRUTH
from fixedlag.core import SmcError
from fixedlag.em import (
    AR1_FAMILY,
    SV_FAMILY,
    DegenerateStatisticsError,
    FlooredVarianceWarning,
    McemSchedule,
    ar1_mstep,
    exact_em_ar1,
    family_for,
    mcem_schedule,
    smcem,
    sv_mstep,
)
from fixedlag.kalman import exact_statistics, kalman_filter, kalman_smooth, log_likelihood
from fixedlag.models import Ar1Params, SvParams, simulate


# --- M-steps -------------------------------------------------------------------


def test_ar1_mstep_example():
    p = ar1_mstep([2, 1, 4, 6], 2)
    assert p.a == pytest.approx(0.5)
    assert p.sigma_w**2 == pytest.approx(1.75)
    assert p.sigma_v**2 == pytest.approx(2.0)


def test_sv_mstep_example():
    p = sv_mstep([2, 1, 1, 8], 2)
    assert p.alpha == pytest.approx(0.5)
    assert p.sigma**2 == pytest.approx(0.25)
    assert p.beta**2 == pytest.approx(8 / 3)


def test_zero_cross_moment_gives_zero_coefficient():
    assert ar1_mstep([2, 0, 4, 6], 2).a == 0.0
    assert sv_mstep([2, 1, 0, 8], 2).alpha == 0.0


def test_nonpositive_s1_rejected():
    with pytest.raises(DegenerateStatisticsError):
        ar1_mstep([0, 1, 4, 6], 2)
    with pytest.raises(DegenerateStatisticsError):
        sv_mstep([-1, 1, 1, 1], 2)


def test_variance_floor_warns():
    with pytest.warns(FlooredVarianceWarning):
        p = ar1_mstep([1, 1, 1, 3], 2)  # S3 - a S2 = 0
    assert p.sigma_w > 0


def _random_statistics(family, rng, n):
    """Statistics of a random path, so they are jointly valid."""
    x = rng.normal(scale=rng.uniform(0.3, 2.0), size=n + 1)
    y = x + rng.normal(size=n + 1) if family is AR1_FAMILY else rng.normal(size=n + 1)
    return family.statistics.evaluate_path(x, y)


def _perturbed(params, rng, scale):
    vals = np.array(list(params.as_dict().values()))
    bumped = vals + rng.normal(scale=scale, size=vals.size) * np.maximum(np.abs(vals), 1e-3)
    bumped[[i for i, k in enumerate(params.as_dict()) if k != "a" and k != "alpha"]] = np.abs(
        bumped[[i for i, k in enumerate(params.as_dict()) if k != "a" and k != "alpha"]]
    )
    return type(params)(*bumped)


@pytest.mark.parametrize("family", [AR1_FAMILY, SV_FAMILY], ids=["ar1", "sv"])
@pytest.mark.parametrize("seed", range(5))
def test_mstep_maximises_q(family, seed):
    rng = np.random.default_rng(seed)
    n = 30
    S = _random_statistics(family, rng, n)
    best = family.mstep(S, n)
    top = family.q_hat(best, S, n)
    for scale in (1e-3, 1e-2, 0.1):
        for _ in range(100 if scale == 1e-3 else 20):
            assert family.q_hat(_perturbed(best, rng, scale), S, n) <= top + 1e-9


@pytest.mark.parametrize("family, params", [(AR1_FAMILY, AR1_TRUTH), (SV_FAMILY, SV_TRUTH)])
def test_q_equals_complete_data_loglik(family, params):
    """<psi, S> - c differs from log p(x, y) by a parameter-free constant."""
    rng = np.random.default_rng(1)
    x, y = simulate(params, 25, seed=3)
    S = family.statistics.evaluate_path(x, y)
    model = family.model(params)

    def loglik(p):
        m = family.model(p)
        lq = np.sum(m.log_transition_density(x[:-1], x[1:]))
        lg = np.sum(m.log_measurement_density(x, y))
        return lq + lg

    others = [_perturbed(params, rng, 0.1) for _ in range(5)]
    diffs = [family.q_hat(p, S, 25) - loglik(p) for p in [params, *others]]
    # the SV likelihood has an extra -x_k/2 from the scale beta e^{x/2}; it is
    # parameter-free, so differences still agree
    np.testing.assert_allclose(diffs, diffs[0], rtol=0, atol=1e-8)
    assert model is not None


def test_family_lookup():
    assert family_for(AR1_TRUTH) is AR1_FAMILY
    assert family_for(SV_TRUTH) is SV_FAMILY
    with pytest.raises(TypeError):
        family_for(object())


# --- schedule ------------------------------------------------------------------


def test_default_schedule_endpoints_and_total():
    sch = mcem_schedule()
    assert sch.particles(1) == 100
    assert sch.particles(150) == 100
    assert sch.particles(151) > 100
    assert sch.particles(250) == 1600
    sizes = sch.sizes()
    assert all(b >= a for a, b in zip(sizes, sizes[1:]))
    assert abs(sch.cumulative() - 75_000) / 75_000 < 0.02


def test_schedule_single_growth_step():
    sch = McemSchedule(total_iters=10, warm_iters=9, warm_N=50, final_N=400)
    assert sch.sizes() == [50] * 9 + [400]


def test_schedule_rejects_bad_shapes():
    with pytest.raises(ValueError):
        McemSchedule(10, 10, 50, 400)
    with pytest.raises(ValueError):
        McemSchedule(10, 2, 500, 400)
    with pytest.raises(IndexError):
        mcem_schedule().particles(251)


# --- exact EM ------------------------------------------------------------------


@pytest.fixture(scope="module")
def em_data():
    return simulate(AR1_TRUTH, 400, seed=21)[1]


def test_exact_em_monotone(em_data):
    trace = exact_em_ar1(em_data, Ar1Params(0.5, 1.0, 2.0), 60)
    ll = np.array(trace.loglik)
    assert np.all(np.diff(ll) >= -1e-8)
    assert ll[-1] > ll[0]


def test_exact_em_one_step_from_truth_is_bounded(em_data):
    trace = exact_em_ar1(em_data, AR1_TRUTH, 1)
    p = trace.final
    assert all(math.isfinite(v) for v in p.as_dict().values())
    assert abs(p.a - AR1_TRUTH.a) < 0.2


def _numerical_mle(y, start):
    def nll(z):
        return -log_likelihood(Ar1Params(z[0], math.exp(z[1]), math.exp(z[2])), y)

    z0 = [start.a, math.log(start.sigma_w), math.log(start.sigma_v)]
    res = optimize.minimize(nll, z0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000})
    return Ar1Params(res.x[0], math.exp(res.x[1]), math.exp(res.x[2]))


def test_exact_em_fixed_point_is_the_mle(em_data):
    trace = exact_em_ar1(em_data, AR1_TRUTH, 5000, tol=1e-11)
    theta = trace.final
    mle = _numerical_mle(em_data, theta)
    for k in ("a", "sigma_w", "sigma_v"):
        assert getattr(theta, k) == pytest.approx(getattr(mle, k), abs=1e-3)
    # one more M-step at the fixed point returns it
    S = exact_statistics(kalman_smooth(kalman_filter(theta, em_data)), em_data, "complete")
    again = ar1_mstep(S, len(em_data) - 1)
    for k in ("a", "sigma_w", "sigma_v"):
        assert getattr(again, k) == pytest.approx(getattr(theta, k), abs=1e-8)


# --- SMCEM ---------------------------------------------------------------------


def test_oracle_mode_reproduces_exact_em(em_data):
    theta0 = Ar1Params(0.5, 1.0, 2.0)
    sch = McemSchedule(12, 4, 10, 50)
    mc = smcem(AR1_FAMILY, em_data, theta0, sch, estep="exact")
    ex = exact_em_ar1(em_data, theta0, 12)
    for p, q in zip(mc.params, ex.params):
        assert p == q


def test_smcem_deterministic_and_seed_dependent():
    _, y = simulate(SV_TRUTH, 150, seed=5)
    sch = McemSchedule(4, 2, 30, 60)
    a = smcem(SV_FAMILY, y, SvParams(0.8, 0.9, 0.3), sch, seed=9)
    b = smcem(SV_FAMILY, y, SvParams(0.8, 0.9, 0.3), sch, seed=9)
    c = smcem(SV_FAMILY, y, SvParams(0.8, 0.9, 0.3), sch, seed=10)
    assert a.params == b.params
    assert a.params != c.params
    assert a.particles == [None, 30, 30, 38, 60]  # 30 + ceil(30 * 1/4)
    assert len(a.rows()) == 5


def test_smcem_gap_to_exact_em_shrinks_with_N(em_data):
    theta0 = Ar1Params(0.5, 1.0, 2.0)
    ex = exact_em_ar1(em_data, theta0, 5)

    def gap(N):
        tr = smcem(AR1_FAMILY, em_data, theta0, McemSchedule(5, 4, N, N), "fixed_lag_weighted", 40, seed=1)
        return max(abs(p.a - q.a) + abs(p.sigma_w - q.sigma_w) + abs(p.sigma_v - q.sigma_v)
                   for p, q in zip(tr.params[1:], ex.params[1:]))

    assert gap(8000) < 0.5 * gap(100)


def test_smcem_rejects_bad_options(em_data):
    sch = McemSchedule(2, 1, 10, 10)
    with pytest.raises(ValueError):
        smcem(SV_FAMILY, em_data, SV_TRUTH, sch, estep="exact")
    with pytest.raises(ValueError):
        smcem(AR1_FAMILY, em_data, AR1_TRUTH, sch, kind="nope")


def test_smcem_wraps_numerical_failures():
    y = np.array([0.0, np.inf, 0.0])
    with pytest.raises(SmcError, match="iteration 1"):
        smcem(AR1_FAMILY, y, AR1_TRUTH, McemSchedule(2, 1, 5, 5), policy=1)
