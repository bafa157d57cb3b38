"""Exact filtering and smoothing for the scalar AR(1)-plus-noise model.

The filter starts from the flat-prior posterior ``N(y_0, sigma_v^2)`` at
time 0, so the log-likelihood increments cover ``y_1..y_n`` only
(``p(y_0)`` is the improper constant of the flat prior and is recorded as
zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .models import Ar1Params

__all__ = [
    "VARIANCE_FLOOR",
    "GaussianPosterior",
    "kalman_filter",
    "kalman_smooth",
    "exact_statistics",
    "log_likelihood",
]

VARIANCE_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianPosterior:
    """Filtered/predicted/smoothed moments; smoothed fields are ``None``
    until :func:`kalman_smooth` has run.

    ``pred_mean[k]``/``pred_var[k]`` are the one-step predictions for time
    ``k`` (``k >= 1``; entry 0 repeats the time-0 filter).  ``lag_one_cov[k]``
    is ``Cov(X_k, X_{k+1} | y_{0:n})``.
    """

    params: Ar1Params
    filt_mean: np.ndarray
    filt_var: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    loglik_increments: np.ndarray
    smooth_mean: np.ndarray | None = None
    smooth_var: np.ndarray | None = None
    lag_one_cov: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.filt_mean) - 1

    @property
    def loglik(self) -> float:
        return float(np.sum(self.loglik_increments))


def _variances(params: Ar1Params):
    if not (params.sigma_w >= 0 and params.sigma_v >= 0):
        raise ValueError("noise standard deviations must be nonnegative")
    if not math.isfinite(params.a):
        raise ValueError("AR(1) coefficient must be finite")
    return max(params.sigma_w**2, VARIANCE_FLOOR), max(params.sigma_v**2, VARIANCE_FLOOR)


def kalman_filter(params: Ar1Params, y) -> GaussianPosterior:
    """Forward recursion from the time-0 posterior ``N(y_0, sigma_v^2)``."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) < 1:
        raise ValueError("need at least one observation")
    q, r = _variances(params)
    a = params.a
    n = len(y) - 1
    yl = y.tolist()
    fm = [0.0] * (n + 1)
    fv = [0.0] * (n + 1)
    pm = [0.0] * (n + 1)
    pv = [0.0] * (n + 1)
    ll = [0.0] * (n + 1)
    m, P = yl[0], r
    fm[0] = pm[0] = m
    fv[0] = pv[0] = P
    for k in range(1, n + 1):
        mp = a * m
        Pp = a * a * P + q
        S = Pp + r
        innov = yl[k] - mp
        K = Pp / S
        m = mp + K * innov
        P = Pp * r / S  # == (1 - K) Pp, but stays positive
        pm[k], pv[k], fm[k], fv[k] = mp, Pp, m, P
        ll[k] = -0.5 * (_LOG_2PI + math.log(S) + innov * innov / S)
    return GaussianPosterior(
        params, np.array(fm), np.array(fv), np.array(pm), np.array(pv), np.array(ll)
    )


def kalman_smooth(post: GaussianPosterior) -> GaussianPosterior:
    """Rauch-Tung-Striebel pass with lag-one covariances ``J_k P_{k+1|n}``."""
    a = post.params.a
    n = post.n
    fm, fv = post.filt_mean.tolist(), post.filt_var.tolist()
    pm, pv = post.pred_mean.tolist(), post.pred_var.tolist()
    sm = [0.0] * (n + 1)
    sv = [0.0] * (n + 1)
    cov = [0.0] * n
    sm[n], sv[n] = fm[n], fv[n]
    for k in range(n - 1, -1, -1):
        J = fv[k] * a / pv[k + 1]
        sm[k] = fm[k] + J * (sm[k + 1] - pm[k + 1])
        sv[k] = fv[k] + J * J * (sv[k + 1] - pv[k + 1])
        cov[k] = J * sv[k + 1]
    return replace(
        post, smooth_mean=np.array(sm), smooth_var=np.array(sv), lag_one_cov=np.array(cov)
    )


def exact_statistics(post: GaussianPosterior, y, convention: str = "interior") -> np.ndarray:
    """``E[S_n | y_{0:n}]`` for the AR(1) statistics (see
    :func:`fixedlag.models.ar1_statistics` for the conventions)."""
    if post.smooth_mean is None:
        post = kalman_smooth(post)
    y = np.asarray(y, dtype=float)
    m, P, C = post.smooth_mean, post.smooth_var, post.lag_one_cov
    second = m * m + P
    cross = float(np.sum(m[:-1] * m[1:] + C))
    resid = float(np.sum((y - m) ** 2 + P))
    if convention == "interior":
        s1, s3 = float(np.sum(second[1:-1])), float(np.sum(second))
    elif convention == "complete":
        s1, s3 = float(np.sum(second[:-1])), float(np.sum(second[1:]))
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return np.array([s1, cross, s3, resid])


def log_likelihood(params: Ar1Params, y) -> float:
    """``log p(y_{1:n} | y_0)`` under the flat prior on ``X_0``."""
    return kalman_filter(params, y).loglik
