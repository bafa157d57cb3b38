"""Shared domain types: model interface, particle clouds, additive
functionals and lag policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "SmcError",
    "DegenerateInitializationError",
    "WeightCollapseError",
    "StateSpaceModel",
    "ParticleCloud",
    "AdditiveFunctional",
    "LagPolicy",
    "resolve_lag",
]


class SmcError(RuntimeError):
    """Base class for numerical failures inside the particle machinery."""

    def __init__(self, message: str, time: int | None = None):
        self.time = time
        if time is not None:
            message = f"{message} (time {time})"
        super().__init__(message)


class DegenerateInitializationError(SmcError):
    pass


class WeightCollapseError(SmcError):
    pass


class StateSpaceModel:
    """Parameterised state space model with a proposal kernel.

    Subclasses work on arrays of particles (shape ``(N,)`` for scalar
    states).  Samplers are driven by standard-normal noise supplied by the
    caller, so a model is a pure function of its inputs.  Everything is
    defined on the log scale; the natural-scale accessors exponentiate.

    The weight function follows the usual convention
    ``W_k(x, x') = g(x', y_k) q(x, x') / r_k(x, x')`` where ``r_k`` is the
    proposal density; ``W_0(x) = g(x, y_0) dnu/dvarsigma(x)``.
    """

    state_dim: int = 1
    proposal: str = "bootstrap"

    # -- densities ---------------------------------------------------------
    def log_transition_density(self, x, xp):
        raise NotImplementedError

    def log_measurement_density(self, x, y):
        raise NotImplementedError

    def log_proposal_density(self, x, xp, y_next):
        """Log density of the proposal; defaults to the transition."""
        return self.log_transition_density(x, xp)

    # -- samplers ----------------------------------------------------------
    def sample_transition(self, x, noise):
        raise NotImplementedError

    def sample_initial(self, y0, noise):
        raise NotImplementedError

    def sample_proposal(self, x, y_next, noise):
        return self.sample_transition(x, noise)

    # -- weights -----------------------------------------------------------
    def log_initial_weight(self, x, y0):
        raise NotImplementedError

    def log_weight(self, x, xp, y):
        """``log W(x, x')`` for a move ``x -> x'`` observed through ``y``."""
        if self.proposal == "bootstrap":
            return self.log_measurement_density(xp, y)
        return (
            self.log_measurement_density(xp, y)
            + self.log_transition_density(x, xp)
            - self.log_proposal_density(x, xp, y)
        )

    # natural scale
    def transition_density(self, x, xp):
        return np.exp(self.log_transition_density(x, xp))

    def measurement_density(self, x, y):
        return np.exp(self.log_measurement_density(x, y))

    def proposal_density(self, x, xp, y_next):
        return np.exp(self.log_proposal_density(x, xp, y_next))

    def weight(self, x, xp, y):
        return np.exp(self.log_weight(x, xp, y))

    def initial_weight(self, x, y0):
        return np.exp(self.log_initial_weight(x, y0))


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particles at one time step.

    Weights are held on the log scale.  ``weights`` rescales them so the
    largest equals one; every estimator is self-normalised so the common
    factor never matters.
    """

    positions: np.ndarray
    log_weights: np.ndarray
    time: int

    def __post_init__(self):
        if self.positions.shape[0] != self.log_weights.shape[0]:
            raise ValueError("positions and weights differ in length")

    @property
    def size(self) -> int:
        return self.log_weights.shape[0]

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights
        top = np.max(lw)
        if not np.isfinite(top):
            return np.zeros_like(lw)
        return np.exp(lw - top)

    @property
    def weight_sum(self) -> float:
        return float(np.sum(self.weights))

    def normalized_weights(self) -> np.ndarray:
        return self._normalized

    @cached_property
    def _normalized(self) -> np.ndarray:
        w = self.weights
        total = w.sum()
        if not (total > 0 and np.isfinite(total)):
            raise WeightCollapseError("all particle weights are zero", self.time)
        return w / total


@dataclass(frozen=True)
class AdditiveFunctional:
    """Additive path functional ``t_n = sum_k s_k(x_k, x_{k+1})``.

    ``increment(k, x, xp, y)`` returns an ``(N, dim)`` array.  ``y`` is the
    full observation record ``y_{0:n}``, so increments may fold boundary
    terms in at ``k = n - 1``.
    """

    dim: int
    increment: Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    name: str = ""

    def evaluate_path(self, x, y) -> np.ndarray:
        """Sum the increments along a single path ``x_{0:n}``."""
        x = np.asarray(x, dtype=float)
        n = len(x) - 1
        total = np.zeros(self.dim)
        for k in range(n):
            total = total + self.increment(k, x[k : k + 1], x[k + 1 : k + 2], y)[0]
        return total


@dataclass(frozen=True)
class LagPolicy:
    """Either a fixed lag or ``ceil(c * log n)``."""

    mode: str = "fixed"
    value: float = 1

    def __post_init__(self):
        if self.mode not in ("fixed", "logarithmic"):
            raise ValueError(f"unknown lag mode {self.mode!r}")
        if self.mode == "fixed" and (int(self.value) != self.value or self.value < 1):
            raise ValueError("a fixed lag must be an integer >= 1")
        if self.mode == "logarithmic" and not self.value > 0:
            raise ValueError("logarithmic lag constant must be positive")

    @classmethod
    def fixed(cls, lag: int) -> "LagPolicy":
        return cls("fixed", int(lag))

    @classmethod
    def logarithmic(cls, c: float) -> "LagPolicy":
        return cls("logarithmic", float(c))

    @classmethod
    def parse(cls, spec) -> "LagPolicy":
        """Accept an int, a LagPolicy or a mapping such as
        ``{"mode": "fixed", "lag": 16}`` / ``{"mode": "logarithmic", "c": 4}``
        (``"value"`` works for either mode)."""
        if isinstance(spec, LagPolicy):
            return spec
        if isinstance(spec, (int, np.integer)):
            return cls.fixed(int(spec))
        if isinstance(spec, dict):
            mode = spec.get("mode", "fixed")
            key = "lag" if mode == "fixed" else "c"
            if key not in spec and "value" not in spec:
                raise ValueError(f"lag specification {spec!r} lacks {key!r}")
            return cls(mode, spec.get(key, spec.get("value")))
        raise ValueError(f"cannot interpret lag specification {spec!r}")

    def resolve(self, n: int) -> int:
        return resolve_lag(self, n)


def resolve_lag(policy: LagPolicy, n: int) -> int:
    """Lag to use for a record of ``n`` transitions, clamped to ``[1, n]``."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    if policy.mode == "fixed":
        lag = int(policy.value)
    else:
        lag = math.ceil(policy.value * math.log(n))
    return max(1, min(lag, n))
