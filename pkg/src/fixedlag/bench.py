"""Replicated experiments: lag sweeps, particle-count scaling, ancestry
collapse and multi-seed SMCEM.

Replicate ``r`` always uses ``RngContract(seed).child("replicate", r)``,
so results do not depend on how replicates are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LagPolicy, resolve_lag
from .em import McemSchedule, family_for, smcem
from .engine import init_cloud, mutate, resample
from .kalman import exact_statistics, kalman_filter, kalman_smooth
from .models import Ar1Params, ar1_statistics, make_model, sv_statistics
from .rng import RngContract
from .smoother import run_smoother

__all__ = [
    "replicate_rng",
    "statistics_for",
    "exact_target",
    "LagSummary",
    "bench_lags",
    "bench_scaling",
    "degeneracy_profile",
    "bench_degeneracy",
    "first_collapse",
    "log_rate_table",
    "mcem_replicates",
]


def replicate_rng(seed: int, r: int) -> RngContract:
    return RngContract(int(seed)).child("replicate", r)


def statistics_for(params):
    return ar1_statistics() if isinstance(params, Ar1Params) else sv_statistics()


def exact_target(params, y):
    """Kalman value of ``E[S_n | y]`` for AR(1); ``None`` otherwise."""
    if not isinstance(params, Ar1Params):
        return None
    return exact_statistics(kalman_smooth(kalman_filter(params, y)), y)


@dataclass(frozen=True)
class LagSummary:
    lag: int
    mean: float
    bias: float | None
    std: float | None
    mse: float | None


def _summary(lag, values, exact):
    values = np.asarray(values)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if len(values) > 1 else None
    if exact is None:
        return LagSummary(lag, mean, None, std, None)
    return LagSummary(lag, mean, mean - exact, std, float(np.mean((values - exact) ** 2)))


def bench_lags(
    params,
    y,
    N: int,
    lags,
    replicates: int,
    seed: int,
    component: int = 0,
    kind: str = "fixed_lag_weighted",
    resampler: str = "systematic",
    proposal: str = "bootstrap",
):
    """Replicated fixed-lag estimates of ``S_{n,component}/n`` for each lag.

    All lags of one replicate share a particle system.  Returns
    ``(rows, summaries, exact)`` where rows are
    ``(lag, replicate, estimate)`` tuples.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    lags = list(dict.fromkeys(resolve_lag(LagPolicy.parse(lag), n) for lag in lags))
    model = make_model(params, proposal)
    functional = statistics_for(params)
    target = exact_target(params, y)
    exact = None if target is None else float(target[component] / n)
    per_lag = {lag: [] for lag in lags}
    for r in range(replicates):
        run = run_smoother(model, y, functional, N, lags, replicate_rng(seed, r), resampler)
        for lag in lags:
            per_lag[lag].append(float(run.get(kind, lag).value[component] / n))
    rows = [(lag, r, per_lag[lag][r]) for lag in lags for r in range(replicates)]
    summaries = [_summary(lag, per_lag[lag], exact) for lag in lags]
    return rows, summaries, exact


def bench_scaling(
    params,
    y,
    N_grid,
    replicates: int,
    seed: int,
    lag=16,
    component: int = 0,
    kind: str = "fixed_lag_weighted",
    resampler: str = "systematic",
    proposal: str = "bootstrap",
):
    """Replicate spread of one estimator across particle counts.

    Returns ``(rows, stds, slope)`` with ``slope`` the least-squares slope
    of ``log std`` against ``log N`` (``-1/2`` under the square-root rate).
    """
    N_grid = [int(N) for N in N_grid]
    if len(N_grid) < 2:
        raise ValueError("need at least two particle counts")
    if replicates < 2:
        raise ValueError("need at least two replicates to estimate a spread")
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    model = make_model(params, proposal)
    functional = statistics_for(params)
    lags = () if kind.startswith("trajectory") else (lag,)
    resolved = None if not lags else resolve_lag(LagPolicy.parse(lag), n)
    rows, stds = [], {}
    for N in N_grid:
        vals = []
        for r in range(replicates):
            run = run_smoother(
                model, y, functional, N, lags, replicate_rng(seed, r).child("N", N), resampler
            )
            vals.append(float(run.get(kind, resolved).value[component] / n))
        rows.extend((N, r, v) for r, v in enumerate(vals))
        stds[N] = float(np.std(vals, ddof=1))
    logN = np.log(np.array(N_grid, dtype=float))
    logs = np.log(np.array([stds[N] for N in N_grid]))
    slope = float(np.polyfit(logN, logs, 1)[0])
    return rows, stds, slope


def degeneracy_profile(
    params, y, N: int, seed, resampler: str = "multinomial", resample_steps: bool = True
) -> np.ndarray:
    """Distinct time-0 ancestors of the cloud at each time ``0..n``."""
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    rng = seed if isinstance(seed, RngContract) else RngContract(int(seed))
    model = make_model(params)
    cloud = init_cloud(model, y[0], N, rng)
    origin = np.arange(N)
    counts = np.empty(n + 1, dtype=np.int64)
    counts[0] = N
    for k in range(n):
        if resample_steps:
            cloud, anc = resample(cloud, rng, resampler)
            origin = origin[anc]
        cloud = mutate(cloud, model, y[k + 1], rng)
        counts[k + 1] = np.unique(origin).size
    return counts


def bench_degeneracy(params, ys, N: int, seed: int, resampler="multinomial", resample_steps=True):
    """One ancestry profile per dataset in ``ys`` (replicate ``r`` uses
    ``ys[r]``)."""
    return [
        degeneracy_profile(params, y, N, replicate_rng(seed, r), resampler, resample_steps)
        for r, y in enumerate(ys)
    ]


def first_collapse(counts) -> int | None:
    """First time at which a single time-0 ancestor remains."""
    hit = np.flatnonzero(np.asarray(counts) == 1)
    return int(hit[0]) if hit.size else None


def mcem_replicates(
    y,
    theta0,
    schedule: McemSchedule,
    seeds: int,
    seed: int,
    kind="fixed_lag_weighted",
    lag=40,
    proposal="bootstrap",
    resampler="systematic",
    estep="particle",
):
    """Independent SMCEM runs on the same data.

    Returns the traces and a ``{"mean": ..., "std": ...}`` summary of the
    final estimates (std over runs, ``None`` for a single run).
    """
    family = family_for(theta0)
    traces = [
        smcem(
            family,
            y,
            theta0,
            schedule,
            kind,
            lag,
            int(replicate_rng(seed, r).seed),
            proposal,
            resampler,
            estep,
        )
        for r in range(seeds)
    ]
    finals = np.array([[*t.final.as_dict().values()] for t in traces])
    names = list(traces[0].final.as_dict())
    summary = {
        "mean": dict(zip(names, finals.mean(axis=0).tolist())),
        "std": dict(zip(names, finals.std(axis=0, ddof=1).tolist())) if seeds > 1 else None,
    }
    return traces, summary


def log_rate_table(params, N: int, ns, c: float, replicates: int, seed: int, data_params=None):
    """Error of ``S_{n,1}/n`` with lag ``ceil(c log n)`` for several ``n``
    (documentation only; nothing is asserted on it)."""
    from .models import simulate

    out = []
    for n in ns:
        _, y = simulate(data_params or params, n, seed)
        lag = LagPolicy.logarithmic(c)
        _, summaries, exact = bench_lags(params, y, N, [lag], replicates, seed)
        s = summaries[0]
        rmse = None if s.mse is None else math.sqrt(s.mse) * n
        out.append({"n": n, "lag": s.lag, "rmse_total": rmse, "std_total": (s.std or 0.0) * n})
    return out
