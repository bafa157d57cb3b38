"""Fixed-lag sequential Monte Carlo smoothing of additive functionals,
with Monte Carlo EM on top."""

from .core import (
    AdditiveFunctional,
    LagPolicy,
    ParticleCloud,
    SmcError,
    StateSpaceModel,
    WeightCollapseError,
    resolve_lag,
)
from .models import Ar1Params, SvParams, ar1_model, ar1_statistics, simulate, sv_model, sv_statistics
from .rng import RngContract, derive_stream
from .smoother import SmoothedFunctionalEstimate, run_smoother, smooth

__version__ = "0.1.0"
