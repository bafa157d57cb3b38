"""One-step particle filter dynamics: initialisation, mutation/weighting and
resampling."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import (
    DegenerateInitializationError,
    ParticleCloud,
    SmcError,
    StateSpaceModel,
    WeightCollapseError,
)
from .rng import RngContract

__all__ = [
    "init_cloud",
    "mutate",
    "multinomial_resample",
    "systematic_resample",
    "resample",
    "RESAMPLERS",
    "effective_sample_size",
    "unique_ancestor_count",
]

TAG_INIT = "init"
TAG_MUTATE = "mutate"
TAG_RESAMPLE = "resample"


def _check_weights(log_weights: np.ndarray, time: int, exc=WeightCollapseError):
    if np.any(np.isnan(log_weights)):
        raise exc("NaN importance weight", time)
    if not np.any(log_weights > -np.inf):
        raise exc("all importance weights are zero", time)


def init_cloud(model: StateSpaceModel, y0: float, N: int, rng: RngContract) -> ParticleCloud:
    """Draw ``N`` particles from the initial sampler and weight them by ``W_0``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    idx = np.arange(N)
    positions = model.sample_initial(y0, rng.normals(0, idx, TAG_INIT))
    logw = np.asarray(model.log_initial_weight(positions, y0), dtype=float)
    _check_weights(logw, 0, DegenerateInitializationError)
    return ParticleCloud(positions, logw, 0)


def mutate(
    cloud: ParticleCloud, model: StateSpaceModel, y_next: float, rng: RngContract
) -> ParticleCloud:
    """Move every particle through the proposal and update its weight.

    Particle ``i`` at time ``k + 1`` is drawn from ``R_k(xi_k^i, .)`` with noise
    from stream ``(k + 1, i, "mutate")``; its log weight becomes
    ``log w_k^i + log W_{k+1}(xi_k^i, xi_{k+1}^i)``.
    """
    k1 = cloud.time + 1
    x = cloud.positions
    noise = rng.normals(k1, np.arange(cloud.size), TAG_MUTATE)
    xp = model.sample_proposal(x, y_next, noise)
    logw = cloud.log_weights + model.log_weight(x, xp, y_next)
    _check_weights(logw, k1)
    return ParticleCloud(xp, logw, k1)


def _normalized(cloud: ParticleCloud) -> np.ndarray:
    try:
        return cloud.normalized_weights()
    except WeightCollapseError:
        raise WeightCollapseError("cannot resample: zero total weight", cloud.time) from None


def _select(cloud: ParticleCloud, ancestors: np.ndarray):
    new = ParticleCloud(cloud.positions[ancestors], np.zeros(cloud.size), cloud.time)
    return new, ancestors


def multinomial_resample(cloud: ParticleCloud, rng: RngContract):
    """I.i.d. ancestor draws with ``P(I = j) = w_j / Omega``.

    All ``N`` uniforms come from the single stream ``(k, 0, "resample")``.
    Returns the equally weighted cloud and the ancestor indices.
    """
    p = _normalized(cloud)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.stream(cloud.time, 0, TAG_RESAMPLE).uniforms(cloud.size)
    ancestors = np.searchsorted(cdf, u, side="right")
    # zero-weight particles sit on flat stretches of the cdf and are never hit
    return _select(cloud, np.minimum(ancestors, cloud.size - 1))


def systematic_offspring(p: np.ndarray, u: float) -> np.ndarray:
    """Offspring counts ``ceil(N C_j - u) - ceil(N C_{j-1} - u)``."""
    N = p.shape[0]
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    edges = np.clip(np.ceil(N * cdf - u), 0, N).astype(np.int64)
    edges[-1] = N
    return np.diff(edges, prepend=0)


def systematic_resample(cloud: ParticleCloud, rng: RngContract):
    """Systematic resampling driven by one uniform from ``(k, 0, "resample")``."""
    p = _normalized(cloud)
    u = float(rng.stream(cloud.time, 0, TAG_RESAMPLE).uniforms(1)[0])
    counts = systematic_offspring(p, u)
    ancestors = np.repeat(np.arange(cloud.size), counts)
    return _select(cloud, ancestors)


RESAMPLERS = {
    "multinomial": multinomial_resample,
    "systematic": systematic_resample,
}


def resample(cloud: ParticleCloud, rng: RngContract, scheme: str = "systematic"):
    try:
        fn = RESAMPLERS[scheme]
    except KeyError:
        raise ValueError(f"unknown resampling scheme {scheme!r}") from None
    return fn(cloud, rng)


def effective_sample_size(cloud: ParticleCloud) -> float:
    """``(sum w)^2 / sum w^2``."""
    w = cloud.weights
    total = w.sum()
    if not total > 0:
        raise SmcError("effective sample size of a zero-weight cloud", cloud.time)
    return float(total * total / np.dot(w, w))


def unique_ancestor_count(ancestry: Sequence[np.ndarray], N: int | None = None) -> int:
    """Number of distinct ancestors, at the start of ``ancestry``, of the
    current cloud.

    ``ancestry`` lists the ancestor arrays of every resampling performed since
    the reference time ``m`` (oldest first); an empty list means no
    resampling happened and all ``N`` particles are their own ancestors.
    """
    if len(ancestry) == 0:
        if N is None:
            raise ValueError("N is required when no ancestry is recorded")
        return N
    idx = np.asarray(ancestry[-1])
    for anc in reversed(ancestry[:-1]):
        idx = np.asarray(anc)[idx]
    return int(np.unique(idx).size)
