"""Exact sampling of the stationary single-server queue.

Draws the all-time maximum M_0 of a negatively drifted random walk, and the
whole backward sequence (S_k, M_k), without bias, for increments with heavy
(finite-variance or finite 1+eps moment) tails.
"""

from ._kernels import BACKEND
from .increments import DiscreteLaw, IncrementDistribution, LatticePareto, ShiftedPareto, degenerate, two_point
from .params import AlgorithmParams, FeasibilityReport, InfeasibleParams, check_feasibility, minimize_m
from .partition import g_pmf, gbar, sample_K
from .sampler import (
    AcceptanceRatioError,
    BackwardSample,
    ExactSampler,
    PatchOutcome,
    WalkPath,
    first_idle_time,
    sample_backward_sequence,
    sample_bernoulli_tm,
    sample_downward_patch,
    sample_m0_and_path,
    waiting_times,
)
from .lattice import LatticeCoupling, build_coupling, refine_increment, sample_backward_via_coupling

__version__ = "0.1.0"
