"""Independent reference computations used by the tests.

Everything here is written with explicit loops over particles and times so
that it shares no code path with the vectorised estimators.
"""

import numpy as np


def trace_path(history, m, i):
    """Full ancestral path ``x_{0:m}`` of particle ``i`` of the time-``m`` cloud."""
    path = [0.0] * (m + 1)
    idx = i
    path[m] = float(history[m]["cloud"].positions[idx])
    for t in range(m - 1, -1, -1):
        anc = history[t]["ancestors"]
        if anc is not None:
            idx = int(anc[idx])
        path[t] = float(history[t]["cloud"].positions[idx])
    return path


def _weights(cloud):
    lw = [float(v) for v in cloud.log_weights]
    top = max(lw)
    w = [np.exp(v - top) for v in lw]
    total = sum(w)
    return [v / total for v in w]


def _average(history, m, kind, per_particle):
    """Average of ``per_particle(i)`` over the time-``m`` cloud, either with
    its normalised weights or over the particles selected from it."""
    cloud = history[m]["cloud"]
    anc = history[m]["ancestors"]
    if kind.endswith("weighted") or anc is None:
        w = _weights(cloud)
        return sum(w[i] * np.asarray(per_particle(i)) for i in range(cloud.size))
    return sum(np.asarray(per_particle(int(j))) for j in anc) / len(anc)


def replay_trajectory(history, s, y, kind):
    """Path-space estimate of ``E[sum_k s_k(x_k, x_{k+1})]``."""
    n = len(history) - 1

    def total(i):
        path = trace_path(history, n, i)
        return sum(np.asarray(s(k, path[k], path[k + 1], y)) for k in range(n))

    return _average(history, n, kind, total)


def replay_fixed_lag(history, s, y, lag, kind):
    """Fixed-lag estimate: term ``k`` averaged over the cloud at ``min(k + lag, n)``."""
    n = len(history) - 1
    out = 0.0
    for k in range(n):
        m = min(k + lag, n)

        def term(i, k=k, m=m):
            path = trace_path(history, m, i)
            return s(k, path[k], path[k + 1], y)

        out = out + _average(history, m, kind, term)
    return out


def dense_ar1_posterior(params, y):
    """Joint Gaussian posterior of ``x_{0:n}`` from its precision matrix.

    The prior on ``x_0`` is flat, so the only information about it comes from
    ``y_0``.  Returns ``(mean, covariance)``.
    """
    a, q, r = params.a, params.sigma_w**2, params.sigma_v**2
    n = len(y) - 1
    L = np.zeros((n + 1, n + 1))
    b = np.zeros(n + 1)
    for k in range(n + 1):
        L[k, k] += 1 / r
        b[k] += y[k] / r
    for k in range(n):
        # (x_{k+1} - a x_k)^2 / q
        L[k, k] += a * a / q
        L[k + 1, k + 1] += 1 / q
        L[k, k + 1] -= a / q
        L[k + 1, k] -= a / q
    cov = np.linalg.inv(L)
    return cov @ b, cov


def dense_ar1_loglik(params, y):
    """``log p(y_{1:n} | y_0)`` with ``x_0 ~ N(y_0, sigma_v^2)``, by direct
    construction of the joint Gaussian of ``y_{1:n}``."""
    a, q, r = params.a, params.sigma_w**2, params.sigma_v**2
    n = len(y) - 1
    # x_k = a^k x_0 + sum_{j=1}^k a^{k-j} w_j
    cov_x = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(n + 1):
            c = a ** (i + j) * r
            for t in range(1, min(i, j) + 1):
                c += a ** (i - t) * a ** (j - t) * q
            cov_x[i, j] = c
    mean = np.array([a**k * y[0] for k in range(1, n + 1)])
    cov = cov_x[1:, 1:] + r * np.eye(n)
    d = y[1:] - mean
    sign, logdet = np.linalg.slogdet(cov)
    return -0.5 * (n * np.log(2 * np.pi) + logdet + d @ np.linalg.solve(cov, d))


def grid_ar1_moments(params, y, half_width=8.0, points=1201):
    """Smoothed means, variances and lag-one covariances of ``x_{0:n}``
    by summing the joint density over a regular grid in every coordinate.

    The sum over the ``(n+1)``-dimensional grid is organised as a chain of
    matrix products (the joint density factorises along time), which gives
    the same number as the brute-force sum.
    """
    a, sw, sv = params.a, params.sigma_w, params.sigma_v
    n = len(y) - 1
    centre = float(np.mean(y))
    spread = half_width * max(sv, np.std(y) + sv)
    g = np.linspace(centre - spread, centre + spread, points)

    def gauss(z, sd):
        return np.exp(-0.5 * (z / sd) ** 2)

    lik = [gauss(y[k] - g, sv) for k in range(n + 1)]
    T = gauss(g[None, :] - a * g[:, None], sw)  # T[i, j] = q(g_i -> g_j)
    fwd = [lik[0]]
    for k in range(1, n + 1):
        f = (fwd[-1] @ T) * lik[k]
        fwd.append(f / f.sum())
    bwd = [None] * (n + 1)
    bwd[n] = np.ones(points)
    for k in range(n - 1, -1, -1):
        b = T @ (lik[k + 1] * bwd[k + 1])
        bwd[k] = b / b.sum()
    mean, var, cross = np.zeros(n + 1), np.zeros(n + 1), np.zeros(n)
    for k in range(n + 1):
        p = fwd[k] * bwd[k]
        p /= p.sum()
        mean[k] = p @ g
        var[k] = p @ (g - mean[k]) ** 2
    for k in range(n):
        joint = fwd[k][:, None] * T * (lik[k + 1] * bwd[k + 1])[None, :]
        joint /= joint.sum()
        cross[k] = (g - mean[k]) @ joint @ (g - mean[k + 1])
    return mean, var, cross
