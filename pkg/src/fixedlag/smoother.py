"""Particle estimators of smoothed additive functionals.

Two families are provided:

* the trajectory estimator, which carries the running functional
  ``t_k^i`` of each particle's surviving path and relocates it on
  resampling;
* the fixed-lag estimator, which freezes the contribution of the term
  ``s_k`` once the filter has reached time ``k + lag`` and only keeps the
  recent history of each particle.

Each family has a *weighted* kind (self-normalised weights of the
pre-resampling cloud) and a *resampled* kind (the equally weighted cloud
after selection).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import AdditiveFunctional, LagPolicy, ParticleCloud, StateSpaceModel, resolve_lag
from .engine import effective_sample_size, init_cloud, mutate, resample
from .rng import RngContract

__all__ = [
    "ESTIMATOR_KINDS",
    "SmoothedFunctionalEstimate",
    "TrajectoryAccumulator",
    "trajectory_step",
    "trajectory_finalize",
    "LagWindow",
    "lag_step",
    "lag_finalize",
    "SmootherRun",
    "run_smoother",
    "smooth",
]

ESTIMATOR_KINDS = (
    "trajectory_weighted",
    "trajectory_resampled",
    "fixed_lag_weighted",
    "fixed_lag_resampled",
)


def _check_kind(kind: str) -> str:
    if kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATOR_KINDS}")
    return kind


@dataclass(frozen=True)
class SmoothedFunctionalEstimate:
    value: np.ndarray
    kind: str
    n: int
    N: int
    lag: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.value)):
            raise FloatingPointError(f"non-finite {self.kind} estimate: {self.value}")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "N": self.N,
            "lag": self.lag,
            "value": [float(v) for v in self.value],
        }


def _weighted_average(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    return weights @ values


def _selected_average(values, ancestors, weights) -> np.ndarray:
    """Average over the post-selection cloud.

    Without resampling the selected cloud is the weighted cloud itself.
    """
    if ancestors is None:
        return _weighted_average(weights, values)
    return values[ancestors].mean(axis=0)


# ---------------------------------------------------------------------------
# trajectory estimator


@dataclass(frozen=True)
class TrajectoryAccumulator:
    """Per-particle running functional ``t_k^i`` (shape ``(N, d)``) at time k."""

    values: np.ndarray
    time: int = 0

    @classmethod
    def zeros(cls, N: int, dim: int) -> "TrajectoryAccumulator":
        return cls(np.zeros((N, dim)), 0)


def trajectory_step(
    acc: TrajectoryAccumulator, k: int, increments: np.ndarray, ancestors=None
) -> TrajectoryAccumulator:
    """Advance from time ``k`` to ``k + 1``.

    ``ancestors`` are the indices drawn when the time-``k`` cloud was
    resampled (``None`` if it was not); ``increments[i]`` is
    ``s_k(parent_i, xi_{k+1}^i)``.
    """
    if k != acc.time:
        raise ValueError(f"accumulator is at time {acc.time}, got increments for time {k}")
    base = acc.values if ancestors is None else acc.values[ancestors]
    return TrajectoryAccumulator(base + increments, k + 1)


def trajectory_finalize(
    acc: TrajectoryAccumulator, cloud: ParticleCloud, kind: str, ancestors=None
) -> SmoothedFunctionalEstimate:
    """Weighted (``sum w t / Omega``) or resampled (``mean t``) estimate.

    ``ancestors`` describe the selection applied to the final cloud and are
    only used by the resampled kind.
    """
    _check_kind(kind)
    if acc.time != cloud.time:
        raise ValueError("accumulator and cloud refer to different times")
    w = cloud.normalized_weights()
    if kind.endswith("weighted"):
        value = _weighted_average(w, acc.values)
    else:
        value = _selected_average(acc.values, ancestors, w)
    return SmoothedFunctionalEstimate(value, kind, acc.time, cloud.size, None)


# ---------------------------------------------------------------------------
# fixed-lag estimator


class _MapQueue:
    """Sliding window over ancestor maps with amortised O(N) composition.

    Maps are pushed newest last.  ``compose()`` returns the array sending an
    index of the newest cloud to the index it descends from before the
    oldest map, i.e. ``oldest[...[newest[j]]]``.  Two-stack queue: the back
    stack keeps a running composition, the front stack keeps suffix
    compositions.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._back: list[np.ndarray] = []
        self._back_agg: np.ndarray | None = None
        self._front: list[np.ndarray] = []

    def __len__(self):
        return len(self._back) + len(self._front)

    def push(self, amap: np.ndarray):
        if self.capacity == 0:
            return
        if len(self) == self.capacity:
            self._pop()
        self._back.append(amap)
        self._back_agg = amap if self._back_agg is None else self._back_agg[amap]

    def _pop(self):
        if not self._front:
            agg = None
            for amap in reversed(self._back):
                agg = amap if agg is None else amap[agg]
                self._front.append(agg)
            self._back.clear()
            self._back_agg = None
        self._front.pop()

    def compose(self) -> np.ndarray | None:
        if self._front and self._back_agg is not None:
            return self._front[-1][self._back_agg]
        if self._front:
            return self._front[-1]
        return self._back_agg

    def stored_arrays(self) -> int:
        return len(self._back) + len(self._front) + (self._back_agg is not None)


class LagWindow:
    """State of the fixed-lag estimator for a record of ``horizon`` steps.

    The term ``s_k`` matures at time ``min(k + lag, horizon)``.  Terms with
    ``k + lag < horizon`` are frozen one at a time by :func:`lag_step`;
    instead of copying a window of states on every resampling, each
    increment is stored once (indexed by the particle that produced it) and
    the ancestor maps of the last ``lag - 1`` selections are kept in a
    composable queue.  The remaining terms ``k >= horizon - lag`` are
    accumulated per particle exactly like the trajectory estimator and
    averaged in :func:`lag_finalize`.

    Storage is at most ``lag`` increment arrays plus ``lag`` ancestor maps,
    independent of ``horizon``.
    """

    def __init__(self, lag: int, horizon: int, N: int, dim: int):
        if lag < 1:
            raise ValueError("lag must be >= 1")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.lag = lag
        self.horizon = horizon
        self.N = N
        self.dim = dim
        self.time = 0
        self.tail_start = max(0, horizon - lag)
        self.matured = {"weighted": np.zeros(dim), "resampled": np.zeros(dim)}
        self.matured_terms = 0
        self._tail = np.zeros((N, dim))
        self._pending: deque[np.ndarray] = deque()
        self._maps = _MapQueue(lag - 1)

    def stored_arrays(self) -> int:
        """Number of particle-indexed arrays currently held (memory check)."""
        return len(self._pending) + self._maps.stored_arrays() + 1

    def step(self, k, increments, parent_ancestors, cloud, ancestors):
        """Absorb ``s_k`` and the time-``k+1`` cloud; mature ``k + 1 - lag``.

        ``parent_ancestors`` come from the selection at time ``k`` (the one
        that produced the parents of ``cloud``); ``ancestors`` from the
        selection applied to ``cloud`` itself.
        """
        if k != self.time:
            raise ValueError(f"window is at time {self.time}, got increments for time {k}")
        m = k + 1
        if m > self.horizon:
            raise ValueError("window stepped past its horizon")
        if k >= self.tail_start:
            base = self._tail if parent_ancestors is None else self._tail[parent_ancestors]
            self._tail = base + increments
        else:
            self._pending.append(increments)
        self.time = m

        if m >= self.horizon:
            return self
        if self._maps.capacity and self.tail_start > 0:
            amap = np.arange(self.N) if parent_ancestors is None else parent_ancestors
            self._maps.push(amap)
        if m >= self.lag:
            self._mature(cloud, ancestors)
        return self

    def _mature(self, cloud, ancestors):
        inc = self._pending.popleft()
        route = self._maps.compose()
        values = inc if route is None else inc[route]
        w = cloud.normalized_weights()
        self.matured["weighted"] = self.matured["weighted"] + _weighted_average(w, values)
        self.matured["resampled"] = self.matured["resampled"] + _selected_average(
            values, ancestors, w
        )
        self.matured_terms += 1

    def finalize(self, cloud: ParticleCloud, kind: str, ancestors=None):
        _check_kind(kind)
        if self.time != self.horizon or cloud.time != self.horizon:
            raise ValueError("lag window finalised before reaching its horizon")
        w = cloud.normalized_weights()
        if kind.endswith("weighted"):
            tail = _weighted_average(w, self._tail)
            matured = self.matured["weighted"]
        else:
            tail = _selected_average(self._tail, ancestors, w)
            matured = self.matured["resampled"]
        value = tail if self.matured_terms == 0 else matured + tail
        return SmoothedFunctionalEstimate(value, kind, self.horizon, self.N, self.lag)


def lag_step(win: LagWindow, k, increments, parent_ancestors, cloud, ancestors) -> LagWindow:
    """Functional form of :meth:`LagWindow.step` (updates ``win`` in place)."""
    return win.step(k, increments, parent_ancestors, cloud, ancestors)


def lag_finalize(win: LagWindow, cloud, kind="fixed_lag_weighted", ancestors=None):
    return win.finalize(cloud, kind, ancestors)


# ---------------------------------------------------------------------------
# driver


@dataclass
class SmootherRun:
    """Everything one pass of the particle filter produced.

    ``trajectory`` maps the two trajectory kinds to estimates; ``fixed_lag``
    maps ``(kind, lag)`` to estimates.  ``history`` is filled only when
    recording was requested: one entry per time with the pre-selection
    cloud and the ancestors drawn from it.
    """

    n: int
    N: int
    trajectory: dict = field(default_factory=dict)
    fixed_lag: dict = field(default_factory=dict)
    history: list | None = None
    resample_count: int = 0

    def get(self, kind: str, lag: int | None = None) -> SmoothedFunctionalEstimate:
        _check_kind(kind)
        if kind.startswith("trajectory"):
            return self.trajectory[kind]
        return self.fixed_lag[(kind, lag)]


def _select(cloud, rng, resampler, ess_threshold):
    if ess_threshold is not None and effective_sample_size(cloud) >= ess_threshold * cloud.size:
        return cloud, None
    return resample(cloud, rng, resampler)


def run_smoother(
    model: StateSpaceModel,
    y,
    functional: AdditiveFunctional,
    N: int,
    lags=(),
    seed: int | RngContract = 0,
    resampler: str = "systematic",
    ess_threshold: float | None = None,
    record: bool = False,
) -> SmootherRun:
    """Run one particle filter over ``y_{0:n}`` feeding every estimator.

    All lags share the same particle system.  ``ess_threshold`` (a fraction
    of ``N``) switches to adaptive resampling; by default the cloud is
    resampled at every step, including the last.
    """
    y = np.asarray(y, dtype=float)
    n = len(y) - 1
    if n < 1:
        raise ValueError("need at least one transition (n >= 1)")
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = seed if isinstance(seed, RngContract) else RngContract(int(seed))
    lag_values = sorted({resolve_lag(LagPolicy.parse(lag), n) for lag in lags})

    cloud = init_cloud(model, y[0], N, rng)
    selected, anc = _select(cloud, rng, resampler, ess_threshold)
    history = [] if record else None
    if record:
        history.append({"cloud": cloud, "ancestors": anc})
    resamples = int(anc is not None)

    acc = TrajectoryAccumulator.zeros(N, functional.dim)
    windows = [LagWindow(lag, n, N, functional.dim) for lag in lag_values]

    for k in range(n):
        new = mutate(selected, model, y[k + 1], rng)
        inc = functional.increment(k, selected.positions, new.positions, y)
        new_selected, new_anc = _select(new, rng, resampler, ess_threshold)
        acc = trajectory_step(acc, k, inc, anc)
        for win in windows:
            win.step(k, inc, anc, new, new_anc)
        if record:
            history.append({"cloud": new, "ancestors": new_anc})
        resamples += int(new_anc is not None)
        cloud, selected, anc = new, new_selected, new_anc

    run = SmootherRun(n, N, history=history, resample_count=resamples)
    for kind in ESTIMATOR_KINDS[:2]:
        run.trajectory[kind] = trajectory_finalize(acc, cloud, kind, anc)
    for win in windows:
        for kind in ESTIMATOR_KINDS[2:]:
            run.fixed_lag[(kind, win.lag)] = win.finalize(cloud, kind, anc)
    return run


def smooth(
    model: StateSpaceModel,
    y,
    functional: AdditiveFunctional,
    N: int,
    policy: LagPolicy | int | None = None,
    kind: str = "fixed_lag_weighted",
    resampler: str = "systematic",
    seed: int | RngContract = 0,
    ess_threshold: float | None = None,
) -> SmoothedFunctionalEstimate:
    """Estimate ``E[t_n(X_{0:n}) | y_{0:n}]`` with a single estimator."""
    _check_kind(kind)
    if kind.startswith("fixed_lag"):
        if policy is None:
            raise ValueError("fixed-lag estimators need a lag policy")
        lags = (policy,)
    else:
        lags = ()
    run = run_smoother(
        model, y, functional, N, lags, seed=seed, resampler=resampler, ess_threshold=ess_threshold
    )
    if kind.startswith("trajectory"):
        return run.get(kind)
    return run.get(kind, resolve_lag(LagPolicy.parse(policy), run.n))
