"""The noisily observed AR(1) model and the canonical stochastic volatility
model, with their sufficient statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import AdditiveFunctional, StateSpaceModel
from .rng import derive_stream

__all__ = [
    "Ar1Params",
    "SvParams",
    "Ar1Model",
    "SvModel",
    "ar1_model",
    "sv_model",
    "make_model",
    "ar1_statistics",
    "sv_statistics",
    "simulate",
]

_LOG_2PI = math.log(2.0 * math.pi)
# floor on 1 - alpha^2 when drawing SV initial particles from the stationary law
_MIN_STATIONARY_GAP = 1e-2


def _norm_logpdf(z, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (z - mean) ** 2 / var)


@dataclass(frozen=True)
class Ar1Params:
    """``X_{k+1} = a X_k + sigma_w W``, ``Y_k = X_k + sigma_v V``."""

    a: float
    sigma_w: float
    sigma_v: float

    def validate(self) -> "Ar1Params":
        if not (self.sigma_w > 0 and self.sigma_v > 0):
            raise ValueError("AR(1) noise standard deviations must be positive")
        if not math.isfinite(self.a):
            raise ValueError("AR(1) coefficient must be finite")
        return self

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SvParams:
    """``X_{k+1} = alpha X_k + sigma eps``, ``Y_k = beta exp(X_k / 2) eps'``."""

    beta: float
    alpha: float
    sigma: float

    def validate(self) -> "SvParams":
        if not (self.beta > 0 and self.sigma > 0):
            raise ValueError("SV beta and sigma must be positive")
        if not math.isfinite(self.alpha):
            raise ValueError("SV persistence must be finite")
        return self

    def as_dict(self) -> dict:
        return asdict(self)


class Ar1Model(StateSpaceModel):
    """Bootstrap AR(1) model with the diffuse-prior initialisation.

    Initial particles are drawn from ``N(y_0, sigma_v^2)``, which is the
    exact time-0 filter under a flat prior, so ``W_0 = 1``.
    """

    proposal = "bootstrap"

    def __init__(self, params: Ar1Params):
        self.params = params.validate()
        self._var_w = params.sigma_w**2
        self._var_v = params.sigma_v**2

    def log_transition_density(self, x, xp):
        return _norm_logpdf(xp, self.params.a * x, self._var_w)

    def log_measurement_density(self, x, y):
        return _norm_logpdf(y, x, self._var_v)

    def sample_transition(self, x, noise):
        return self.params.a * x + self.params.sigma_w * noise

    def sample_initial(self, y0, noise):
        return y0 + self.params.sigma_v * noise

    def log_initial_weight(self, x, y0):
        return np.zeros(np.shape(x))


class SvModel(StateSpaceModel):
    """Stochastic volatility model.

    ``proposal="optimal"`` uses a Gaussian approximation to the law of
    ``X_{k+1}`` given ``X_k = x`` and ``Y_{k+1} = y``: the log measurement
    density is expanded to second order in ``x'`` around ``mu = alpha x``,
    which gives precision ``1/sigma^2 + c`` and mean
    ``(mu/sigma^2 + c (1 + mu) - 1/2) / precision`` with
    ``c = y^2 exp(-mu) / (2 beta^2)``.
    """

    def __init__(self, params: SvParams, proposal: str = "bootstrap"):
        if proposal not in ("bootstrap", "optimal"):
            raise ValueError(f"unknown proposal {proposal!r}")
        self.params = params.validate()
        self.proposal = proposal
        self._var = params.sigma**2
        self._beta2 = params.beta**2
        gap = max(1.0 - params.alpha**2, _MIN_STATIONARY_GAP)
        self._init_sd = params.sigma / math.sqrt(gap)

    def log_transition_density(self, x, xp):
        return _norm_logpdf(xp, self.params.alpha * x, self._var)

    def log_measurement_density(self, x, y):
        return -0.5 * (_LOG_2PI + math.log(self._beta2) + x + y * y * np.exp(-x) / self._beta2)

    def sample_transition(self, x, noise):
        return self.params.alpha * x + self.params.sigma * noise

    def sample_initial(self, y0, noise):
        return self._init_sd * np.asarray(noise, dtype=float)

    def log_initial_weight(self, x, y0):
        return self.log_measurement_density(x, y0)

    def _proposal_moments(self, x, y_next):
        mu = self.params.alpha * np.asarray(x, dtype=float)
        c = y_next * y_next * np.exp(-mu) / (2.0 * self._beta2)
        var = 1.0 / (1.0 / self._var + c)
        mean = var * (mu / self._var + c * (1.0 + mu) - 0.5)
        return mean, var

    def sample_proposal(self, x, y_next, noise):
        if self.proposal == "bootstrap":
            return self.sample_transition(x, noise)
        mean, var = self._proposal_moments(x, y_next)
        return mean + np.sqrt(var) * noise

    def log_proposal_density(self, x, xp, y_next):
        if self.proposal == "bootstrap":
            return self.log_transition_density(x, xp)
        mean, var = self._proposal_moments(x, y_next)
        return _norm_logpdf(xp, mean, var)


def ar1_model(params: Ar1Params) -> Ar1Model:
    return Ar1Model(params)


def sv_model(params: SvParams, proposal: str = "bootstrap") -> SvModel:
    return SvModel(params, proposal)


def make_model(params, proposal: str = "bootstrap") -> StateSpaceModel:
    if isinstance(params, Ar1Params):
        if proposal != "bootstrap":
            raise ValueError("the AR(1) model only supports the bootstrap proposal")
        return Ar1Model(params)
    if isinstance(params, SvParams):
        return SvModel(params, proposal)
    raise TypeError(f"unsupported parameter type {type(params).__name__}")


def ar1_statistics(convention: str = "interior") -> AdditiveFunctional:
    """Four AR(1) sufficient statistics as an additive functional.

    With ``convention="interior"``::

        S1 = sum_{k=1}^{n-1} x_k^2      S2 = sum_{k=0}^{n-1} x_k x_{k+1}
        S3 = sum_{k=0}^{n}   x_k^2      S4 = sum_{k=0}^{n}   (y_k - x_k)^2

    ``convention="complete"`` uses the ranges under which the M-step is the
    exact complete-data maximiser: ``S1 = sum_{k=0}^{n-1} x_k^2`` and
    ``S3 = sum_{k=1}^{n} x_k^2``.  Terms at time ``n`` are folded into the
    last increment.
    """
    if convention not in ("interior", "complete"):
        raise ValueError(f"unknown convention {convention!r}")
    interior = convention == "interior"

    def increment(k, x, xp, y):
        n = len(y) - 1
        out = np.empty((np.shape(x)[0], 4))
        if interior:
            out[:, 0] = xp * xp if k < n - 1 else 0.0
            out[:, 2] = x * x
        else:
            out[:, 0] = x * x
            out[:, 2] = xp * xp
        out[:, 1] = x * xp
        out[:, 3] = (y[k] - x) ** 2
        if k == n - 1:
            if interior:
                out[:, 2] += xp * xp
            out[:, 3] += (y[n] - xp) ** 2
        return out

    return AdditiveFunctional(4, increment, f"ar1[{convention}]")


def sv_statistics() -> AdditiveFunctional:
    """SV sufficient statistics::

        S1 = sum_{k=0}^{n-1} x_k^2       S2 = sum_{k=1}^{n} x_k^2
        S3 = sum_{k=1}^{n} x_k x_{k-1}   S4 = sum_{k=0}^{n} y_k^2 exp(-x_k)
    """

    def increment(k, x, xp, y):
        n = len(y) - 1
        out = np.empty((np.shape(x)[0], 4))
        out[:, 0] = x * x
        out[:, 1] = xp * xp
        out[:, 2] = x * xp
        out[:, 3] = y[k] ** 2 * np.exp(-x)
        if k == n - 1:
            out[:, 3] += y[n] ** 2 * np.exp(-xp)
        return out

    return AdditiveFunctional(4, increment, "sv")


def simulate(params, n: int, seed: int, x0: float | None = None):
    """Draw ``(x_{0:n}, y_{0:n})`` from the generative model.

    Without ``x0`` the chain starts from its stationary law (or at zero when
    the chain is not stationary).  Zero noise scales are allowed here.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    state_noise = derive_stream(seed, 0, 0, "simulate/state").normals(n + 1)
    obs_noise = derive_stream(seed, 0, 0, "simulate/obs").normals(n + 1)
    if isinstance(params, Ar1Params):
        coef, scale = params.a, params.sigma_w
    elif isinstance(params, SvParams):
        coef, scale = params.alpha, params.sigma
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")

    x = np.empty(n + 1)
    if x0 is None:
        sd0 = scale / math.sqrt(1.0 - coef**2) if abs(coef) < 1 else 0.0
        x[0] = sd0 * state_noise[0]
    else:
        x[0] = x0
    for k in range(n):
        x[k + 1] = coef * x[k] + scale * state_noise[k + 1]

    if isinstance(params, Ar1Params):
        y = x + params.sigma_v * obs_noise
    else:
        y = params.beta * np.exp(x / 2.0) * obs_noise
    return x, y
