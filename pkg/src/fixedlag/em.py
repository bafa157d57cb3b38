"""Exponential-family EM with exact (Kalman) or particle E-steps."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import AdditiveFunctional, LagPolicy, SmcError
from .kalman import exact_statistics, kalman_filter, kalman_smooth
from .models import Ar1Params, SvParams, ar1_statistics, make_model, sv_statistics
from .rng import RngContract
from .smoother import ESTIMATOR_KINDS, smooth

__all__ = [
    "VARIANCE_FLOOR",
    "DegenerateStatisticsError",
    "FlooredVarianceWarning",
    "ExponentialFamily",
    "AR1_FAMILY",
    "SV_FAMILY",
    "family_for",
    "ar1_mstep",
    "sv_mstep",
    "McemSchedule",
    "mcem_schedule",
    "McemTrace",
    "exact_em_ar1",
    "smcem",
]

VARIANCE_FLOOR = 1e-12


class DegenerateStatisticsError(ValueError):
    pass


class FlooredVarianceWarning(RuntimeWarning):
    pass


def _floor(var: float, name: str) -> float:
    if not var > VARIANCE_FLOOR:
        warnings.warn(
            f"M-step variance {name}={var!r} floored at {VARIANCE_FLOOR}",
            FlooredVarianceWarning,
            stacklevel=3,
        )
        return VARIANCE_FLOOR
    return var


def ar1_mstep(S, n: int) -> Ar1Params:
    """``a = S2/S1``, ``sigma_w^2 = (S3 - a S2)/n``, ``sigma_v^2 = S4/(n+1)``."""
    S = np.asarray(S, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not S[0] > 0:
        raise DegenerateStatisticsError(f"S1 must be positive, got {S[0]!r}")
    a = S[1] / S[0]
    var_w = _floor((S[2] - a * S[1]) / n, "sigma_w^2")
    var_v = _floor(S[3] / (n + 1), "sigma_v^2")
    return Ar1Params(float(a), math.sqrt(var_w), math.sqrt(var_v))


def sv_mstep(S, n: int) -> SvParams:
    """``alpha = S3/S1``, ``sigma^2 = (S2 - alpha S3)/n``, ``beta^2 = S4/(n+1)``."""
    S = np.asarray(S, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not S[0] > 0:
        raise DegenerateStatisticsError(f"S1 must be positive, got {S[0]!r}")
    alpha = S[2] / S[0]
    var = _floor((S[1] - alpha * S[2]) / n, "sigma^2")
    beta2 = _floor(S[3] / (n + 1), "beta^2")
    return SvParams(math.sqrt(beta2), float(alpha), math.sqrt(var))


def _ar1_natural(p: Ar1Params) -> np.ndarray:
    vw, vv = p.sigma_w**2, p.sigma_v**2
    return np.array([-(p.a**2) / (2 * vw), p.a / vw, -1 / (2 * vw), -1 / (2 * vv)])


def _ar1_partition(p: Ar1Params, n: int) -> float:
    return n * math.log(p.sigma_w**2) / 2 + (n + 1) * math.log(p.sigma_v**2) / 2


def _sv_natural(p: SvParams) -> np.ndarray:
    v = p.sigma**2
    return np.array([-(p.alpha**2) / (2 * v), -1 / (2 * v), p.alpha / v, -1 / (2 * p.beta**2)])


def _sv_partition(p: SvParams, n: int) -> float:
    return (n + 1) * math.log(p.beta**2) / 2 + n * math.log(p.sigma**2) / 2


@dataclass(frozen=True)
class ExponentialFamily:
    """Complete-data log-likelihood ``<psi(theta), S> - c(theta)``."""

    name: str
    params_type: type
    statistics: AdditiveFunctional
    natural_params: Callable
    log_partition: Callable
    mstep: Callable

    def q_hat(self, params, S, n: int) -> float:
        return float(self.natural_params(params) @ np.asarray(S, dtype=float)) - self.log_partition(
            params, n
        )

    def model(self, params, proposal: str = "bootstrap"):
        return make_model(params, proposal)


AR1_FAMILY = ExponentialFamily(
    "ar1", Ar1Params, ar1_statistics("complete"), _ar1_natural, _ar1_partition, ar1_mstep
)
SV_FAMILY = ExponentialFamily("sv", SvParams, sv_statistics(), _sv_natural, _sv_partition, sv_mstep)


def family_for(params) -> ExponentialFamily:
    if isinstance(params, Ar1Params):
        return AR1_FAMILY
    if isinstance(params, SvParams):
        return SV_FAMILY
    raise TypeError(f"no exponential family for {type(params).__name__}")


@dataclass(frozen=True)
class McemSchedule:
    """Constant ``warm_N`` for ``warm_iters`` iterations, then quadratic growth
    ``warm_N + ceil(g (i - warm_iters)^2)`` reaching ``final_N`` at the last
    iteration.  Iterations are numbered from 1."""

    total_iters: int
    warm_iters: int
    warm_N: int
    final_N: int

    def __post_init__(self):
        if self.total_iters < 1 or self.warm_N < 1:
            raise ValueError("schedule needs at least one iteration and one particle")
        if not 0 <= self.warm_iters < self.total_iters:
            raise ValueError("warm_iters must lie in [0, total_iters)")
        if self.final_N < self.warm_N:
            raise ValueError("final_N must be >= warm_N")

    def particles(self, i: int) -> int:
        if not 1 <= i <= self.total_iters:
            raise IndexError(i)
        j = i - self.warm_iters
        if j <= 0:
            return self.warm_N
        span = self.total_iters - self.warm_iters
        # exact integer ceil so the endpoint is hit exactly
        return self.warm_N + -(-(self.final_N - self.warm_N) * j * j // (span * span))

    def sizes(self) -> list[int]:
        return [self.particles(i) for i in range(1, self.total_iters + 1)]

    def cumulative(self) -> int:
        return sum(self.sizes())


def mcem_schedule(
    warm_iters: int = 150, warm_N: int = 100, total_iters: int = 250, final_N: int = 1600
) -> McemSchedule:
    return McemSchedule(total_iters, warm_iters, warm_N, final_N)


@dataclass
class McemTrace:
    """Per-iteration record; row 0 holds the starting point."""

    family: str
    params: list = field(default_factory=list)
    particles: list = field(default_factory=list)
    statistics: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    loglik: list = field(default_factory=list)

    def __len__(self):
        return len(self.params)

    @property
    def iterations(self) -> int:
        return len(self.params) - 1

    @property
    def final(self):
        return self.params[-1]

    def append(self, params, N, S, seconds, loglik=None):
        self.params.append(params)
        self.particles.append(N)
        self.statistics.append(None if S is None else np.asarray(S, dtype=float))
        self.wall_time.append(seconds)
        self.loglik.append(loglik)

    def rows(self) -> list[dict]:
        out = []
        for i, p in enumerate(self.params):
            row = {"iteration": i, "N": self.particles[i]}
            row.update(p.as_dict())
            S = self.statistics[i]
            for j in range(4):
                row[f"S{j + 1}"] = None if S is None else float(S[j])
            row["loglik"] = self.loglik[i]
            row["wall_time"] = self.wall_time[i]
            out.append(row)
        return out


def _exact_estep(params: Ar1Params, y):
    post = kalman_smooth(kalman_filter(params, y))
    return exact_statistics(post, y, "complete"), post.loglik


def exact_em_ar1(y, theta0: Ar1Params, iterations: int, tol: float | None = None) -> McemTrace:
    """EM with Kalman-smoother E-steps.

    Stops early when every parameter moves by less than ``tol``.  The
    ``loglik`` column is the exact log-likelihood of each row's parameters.
    """
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    trace = McemTrace("ar1")
    theta = theta0.validate()
    S, ll = _exact_estep(theta, y)
    trace.append(theta, None, None, 0.0, ll)
    for _ in range(iterations):
        t0 = time.perf_counter()
        new = ar1_mstep(S, n)
        S_used = S
        S, ll = _exact_estep(new, y)
        trace.append(new, None, S_used, time.perf_counter() - t0, ll)
        moved = max(abs(new.a - theta.a), abs(new.sigma_w - theta.sigma_w), abs(new.sigma_v - theta.sigma_v))
        theta = new
        if tol is not None and moved < tol:
            break
    return trace


def smcem(
    family: ExponentialFamily,
    y,
    theta0,
    schedule: McemSchedule,
    kind: str = "fixed_lag_weighted",
    policy: LagPolicy | int | None = 40,
    seed: int = 0,
    proposal: str = "bootstrap",
    resampler: str = "systematic",
    estep: str = "particle",
) -> McemTrace:
    """Monte Carlo EM whose E-step is a particle smoother.

    Iteration ``i`` smooths under the previous estimate with
    ``schedule.particles(i)`` particles and streams derived from
    ``(seed, "mcem", i)``.  ``estep="exact"`` swaps in the Kalman E-step
    (AR(1) only).
    """
    if kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    if estep not in ("particle", "exact"):
        raise ValueError(f"unknown E-step {estep!r}")
    if estep == "exact" and family.params_type is not Ar1Params:
        raise ValueError("the exact E-step exists only for the AR(1) model")
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    base = RngContract(int(seed))
    theta = theta0.validate()
    trace = McemTrace(family.name)
    trace.append(theta, None, None, 0.0)
    for i in range(1, schedule.total_iters + 1):
        t0 = time.perf_counter()
        N = schedule.particles(i)
        try:
            if estep == "exact":
                S, _ = _exact_estep(theta, y)
            else:
                est = smooth(
                    family.model(theta, proposal),
                    y,
                    family.statistics,
                    N,
                    policy,
                    kind,
                    resampler,
                    base.child("mcem", i),
                )
                S = est.value
            theta = family.mstep(S, n)
        except (SmcError, DegenerateStatisticsError, FloatingPointError) as exc:
            raise SmcError(f"SMCEM iteration {i} failed: {exc}") from exc
        trace.append(theta, None if estep == "exact" else N, S, time.perf_counter() - t0)
    return trace
