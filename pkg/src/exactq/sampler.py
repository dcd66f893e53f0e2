"""Exact backward sampling of the drifted walk and its suffix maxima.

The pieces, bottom up:

* :meth:`ExactSampler.bernoulli_tm` draws J ~ Bernoulli(P(T_m < inf)) and,
  when J = 1, the walk up to its first passage above m;
* :meth:`ExactSampler.m0_path` alternates downward patches of depth L m with
  upward patches until an upward attempt fails, which pins the all-time
  maximum M_0;
* :meth:`ExactSampler.backward_sequence` glues such segments, keeping only
  those whose maximum stays within m, until the suffix maxima M_0 .. M_n are
  determined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .increments import IncrementDistribution
from .params import (AlgorithmParams, FINITE_VARIANCE, choose_eps, mgf_constant_beta12, truncated_log_mgf_bound,
                     require_feasible)
from .partition import RecordLaw, block_end, block_start, record_thresholds
from .proposals import (
    BlockCache,
    block_level,
    log_prob_b,
    prob_b_complement,
    sample_pk0_path,
    sample_pk1_path,
    sample_pk2_path,
)


class AcceptanceRatioError(RuntimeError):
    """An acceptance ratio above one met its indicator: the sampler would be biased."""


class EvaluationBudgetExceeded(RuntimeError):
    pass


@dataclass
class WalkPath:
    """Positions S_1(mu) .. S_n(mu) relative to ``origin`` (S_0 excluded) with their increments."""

    positions: np.ndarray
    increments: np.ndarray
    origin: float = 0.0
    # end indices (1-based, within this path) of downward and upward patches
    descents: list = field(default_factory=list)
    ascents: list = field(default_factory=list)

    def __len__(self):
        return int(self.positions.size)

    @property
    def last(self) -> float:
        return float(self.positions[-1]) if self.positions.size else self.origin

    def maximum(self) -> float:
        """max over S_0 .. S_n, S_0 = origin included."""
        return max(self.origin, float(self.positions.max())) if self.positions.size else self.origin

    def argmax(self) -> int:
        """First index (0 = origin) attaining the maximum."""
        full = np.concatenate(([self.origin], self.positions))
        return int(np.argmax(full))

    @staticmethod
    def empty(origin: float = 0.0) -> "WalkPath":
        return WalkPath(np.empty(0), np.empty(0), origin)


@dataclass
class PatchOutcome:
    J: int
    omega: WalkPath
    k: int = 0
    branch: int = -1
    ratio: float | None = None


@dataclass
class SamplerStats:
    evals: int = 0
    calls: int = 0
    proposals: dict = field(default_factory=lambda: {0: 0, 1: 0, 2: 0})
    paths: dict = field(default_factory=lambda: {0: 0, 1: 0, 2: 0})
    violations: list = field(default_factory=list)
    max_ratio_on_event: float = 0.0


class ExactSampler:
    """Exact sampler bound to one increment law and one feasible parameter set."""

    def __init__(self, params: AlgorithmParams, d: IncrementDistribution, *, strict: bool = True,
                 check: bool = True, max_evals: float = 1e9, max_path: int = 1 << 26):
        self.params = params
        self.d = d
        self.strict = strict
        self.max_evals = max_evals
        self.max_path = max_path  # longest block path held in memory at once
        self.report = require_feasible(params, d) if check else None
        self.record = RecordLaw(params.alpha, params.m, params.mu)
        self.cache = BlockCache(params, d)
        self.stats = SamplerStats()
        self._ex2 = None
        self._abs_mom = None
        self._eps = choose_eps(params, d)[0]
        self._budget_base = 0

    # accounting ----------------------------------------------------------

    def _charge(self, n: int):
        self.stats.evals += int(n)
        if self.stats.evals - self._budget_base > self.max_evals:
            raise EvaluationBudgetExceeded(f"more than {self.max_evals:g} function evaluations")

    def _reserve(self, n: int, held: bool = True):
        # block work is done in one piece, so abort before starting work that cannot fit the budget
        if held and n > self.max_path:
            raise EvaluationBudgetExceeded(f"block path of {n} steps exceeds the {self.max_path} step limit")
        if self.stats.evals + int(n) - self._budget_base > self.max_evals:
            raise EvaluationBudgetExceeded(f"block work of {n} steps would pass {self.max_evals:g} evaluations")

    def _audit(self, ratio: float, indicator: bool, k: int, branch: int):
        if not indicator:
            return
        self.stats.max_ratio_on_event = max(self.stats.max_ratio_on_event, ratio)
        if ratio > 1.0:
            msg = f"acceptance ratio {ratio:.6g} > 1 (block {k}, branch {branch})"
            self.stats.violations.append((k, branch, ratio))
            if self.strict:
                raise AcceptanceRatioError(msg)

    # upward patch ----------------------------------------------------------

    def _omega(self, inc: np.ndarray, t: int) -> WalkPath:
        x = inc[:t].copy()
        _, pos = _kernels.first_below(x - self.params.mu, 0.0, -math.inf)
        return WalkPath(pos, x, 0.0)

    def _psi_upper(self, k: int) -> float:
        """Upper bound on psi_k, exact when affordable."""
        if self.cache.exact_tilt_is_cheap(k):
            return self.cache.tilt(k).psi
        p = self.params
        if p.mode != FINITE_VARIANCE:
            C = block_level(k, p.mu, p.m)
            if self._abs_mom is None:
                self._abs_mom = self.d.abs_moment(1.0 + self._eps)
            scale = C ** ((1 - p.delta) * (1 + self._eps))
            if self._abs_mom / scale > 0.5:
                return self.cache.tilt(k).psi
            # the 1+eps form of the log-mgf bound already covers the conditional law
            return mgf_constant_beta12(p.gamma, self._eps, self._abs_mom) / scale
        if self._ex2 is None:
            self._ex2 = self.d.second_moment()
        C = block_level(k, p.mu, p.m)
        if self._ex2 / C ** (2 * (1 - p.delta)) > 0.5:
            return self.cache.tilt(k).psi
        tail = float(self.d.tail_prob(C ** (1 - p.delta)))
        # the bound covers the unconditional truncated mgf; psi also divides by P(X <= cutoff)
        return truncated_log_mgf_bound(p.gamma, p.delta, self._ex2, tail, C) - math.log1p(-tail)

    def bernoulli_tm(self, rng) -> PatchOutcome:
        """J ~ Bernoulli(P(T_m < inf)) and, if J = 1, the path up to T_m."""
        p = self.params
        self.stats.calls += 1
        k = self.record.sample(rng)
        branch = int(rng.integers(3))
        v = float(rng.random())
        self._charge(3)
        g = self.record.pmf(k)
        lo, hi = block_start(k), block_end(k)
        none = PatchOutcome(0, WalkPath.empty(), k, branch)

        if branch == 0:
            # P(A_k) <= Lambda_k <= n_{k-1} P(X > first threshold)
            if v > 3.0 * min(1.0, self.cache.record_mass_upper(k)) / g:
                return none
            self._reserve(2 * lo, held=False)  # chunked, so only the evaluation budget applies
            lam, p_a = self.cache.record_mass(k)
            self._charge(2 * lo)
            ratio = 3.0 * p_a / g
            if v > ratio:
                return none
            self._reserve(hi)
            path = sample_pk0_path(k, p, self.d, rng, self.cache)
            self._account_path(0, path)
            t = path.crossing
            hit = t is not None and lo <= t <= hi
            self._audit(ratio, hit, k, 0)
            if not hit:
                return none
            return PatchOutcome(1, self._omega(path.increments, t), k, 0, ratio)

        if branch == 1:
            psi_up = self._psi_upper(k)
            theta = p.gamma / block_level(k, p.mu, p.m) ** (1 - p.delta)
            log_pb = log_prob_b(k, p, self.d)
            C = block_level(k, p.mu, p.m)
            # S_T >= C_k on the event, and T ranges over the block
            bound_log = (math.log(3.0) + log_pb - theta * C + max(lo * psi_up, hi * psi_up) - math.log(g))
            if v > 0 and math.log(v) > bound_log:
                return none
            tilt = self.cache.tilt(k)
            self._reserve(hi)
            path = sample_pk1_path(k, p, self.d, rng, self.cache)
            self._account_path(1, path)
            t = path.crossing
            hit = t is not None and lo <= t <= hi
            if not hit:
                return none
            s_t = float(np.sum(path.increments[:t]))
            log_ratio = math.log(3.0) + log_pb - tilt.theta * s_t + t * tilt.psi - math.log(g)
            ratio = math.exp(min(log_ratio, 700.0))
            self._audit(ratio, True, k, 1)
            if v > ratio:
                return none
            return PatchOutcome(1, self._omega(path.increments, t), k, 1, ratio)

        p_bc = prob_b_complement(k, p, self.d)
        ratio = 3.0 * p_bc / g
        if v > ratio:
            return none
        self._reserve(hi)
        path = sample_pk2_path(k, p, self.d, rng, self.cache)
        self._account_path(2, path)
        t = path.crossing
        hit = t is not None and lo <= t <= hi
        if hit:
            thr = record_thresholds(k, p.mu, p.m, p.delta)
            hit = not bool(np.any(path.increments[lo - 1:hi] > thr))
        self._audit(ratio, hit, k, 2)
        if not hit:
            return none
        return PatchOutcome(1, self._omega(path.increments, t), k, 2, ratio)

    def block_weight(self, k: int, branch: int, rng) -> float:
        """One unbiased draw of P(T_m in block k, E) for the event E handled by ``branch``.

        branch 0: A_k; branch 1: B_k (hence A_k^c); branch 2: B_k^c and A_k^c.
        This is g(k)/3 times the acceptance ratio times its indicator, with no
        capping, so it works for any m.
        """
        p = self.params
        lo, hi = block_start(k), block_end(k)
        if branch == 0:
            _, p_a = self.cache.record_mass(k)
            if p_a == 0:
                return 0.0
            path = sample_pk0_path(k, p, self.d, rng, self.cache)
            t = path.crossing
            return p_a if t is not None and lo <= t <= hi else 0.0
        if branch == 1:
            tilt = self.cache.tilt(k)
            path = sample_pk1_path(k, p, self.d, rng, self.cache)
            t = path.crossing
            if t is None or not lo <= t <= hi:
                return 0.0
            s_t = float(np.sum(path.increments[:t]))
            return math.exp(log_prob_b(k, p, self.d) - tilt.theta * s_t + t * tilt.psi)
        p_bc = prob_b_complement(k, p, self.d)
        if p_bc == 0:
            return 0.0
        path = sample_pk2_path(k, p, self.d, rng, self.cache)
        t = path.crossing
        if t is None or not lo <= t <= hi:
            return 0.0
        thr = record_thresholds(k, p.mu, p.m, p.delta)
        return 0.0 if np.any(path.increments[lo - 1:hi] > thr) else p_bc

    def _account_path(self, branch: int, path):
        self.stats.proposals[branch] += path.proposals
        self.stats.paths[branch] += 1
        self._charge(path.draws + path.increments.size)

    # downward patches ------------------------------------------------------

    def _descend(self, rng, ceiling: float = math.inf):
        """Nominal walk from 0 until it drops below -L m.

        Returns (positions, increments, crossed) where ``crossed`` reports a
        position > ceiling strictly before the stopping time.
        """
        p = self.params
        floor = -p.L * p.m
        pos_chunks, x_chunks = [], []
        pos = 0.0
        crossed = False
        size = int(1.5 * p.L * p.m / p.mu) + 16
        while True:
            x = self.d.sample(rng, size)
            self._charge(2 * size)
            i, path, hit = _kernels.descend(x - p.mu, pos, floor, ceiling)
            crossed = crossed or hit
            if i >= 0:
                pos_chunks.append(path)
                x_chunks.append(x[: i + 1])
                break
            pos_chunks.append(path)
            x_chunks.append(x)
            pos = float(path[-1])
            size *= 2
        return np.concatenate(pos_chunks), np.concatenate(x_chunks), crossed

    def downward_patch(self, rng, sigma: float) -> WalkPath:
        """Segment to T_{-Lm} conditioned on the walk never exceeding ``sigma`` afterwards either.

        Proposals that pass above the barrier before stopping are discarded; the
        rest are kept with probability P(T_{sigma - S_T} = inf), realised as
        1 - J from an upward-patch sampler at level sigma - S_T.
        """
        p = self.params
        if sigma < (p.L + 1) * p.m:
            raise ValueError("sigma must be at least (L + 1) m")
        while True:
            pos, x, crossed = self._descend(rng, ceiling=sigma)
            if crossed:
                continue
            if self._escape_indicator(sigma - float(pos[-1]), rng) == 0:
                return WalkPath(pos, x, 0.0, descents=[pos.size])

    def _escape_indicator(self, level: float, rng) -> int:
        """J ~ Bernoulli(P(T_level < inf)) from an upward-patch sampler at that level."""
        left = self.max_evals - (self.stats.evals - self._budget_base)
        sub = ExactSampler(self.params.with_m(level), self.d, strict=self.strict, check=False,
                           max_evals=left, max_path=self.max_path)
        out = sub.bernoulli_tm(rng)
        self._charge(sub.stats.evals)
        self.stats.violations.extend(sub.stats.violations)
        self.stats.max_ratio_on_event = max(self.stats.max_ratio_on_event, sub.stats.max_ratio_on_event)
        return out.J

    # M_0 -------------------------------------------------------------------

    def m0_path(self, rng) -> WalkPath:
        """Path to the first descent milestone after which the walk never rises m above it."""
        # the watchdog budget is per M_0 draw
        self._budget_base = self.stats.evals
        pos_chunks, x_chunks = [], []
        descents, ascents = [], []
        last = 0.0
        total = 0
        while True:
            pos, x, _ = self._descend(rng)
            pos_chunks.append(last + pos)
            x_chunks.append(x)
            total += pos.size
            descents.append(total)
            last = float(pos_chunks[-1][-1])
            out = self.bernoulli_tm(rng)
            if not out.J:
                break
            pos_chunks.append(last + out.omega.positions)
            x_chunks.append(out.omega.increments)
            total += len(out.omega)
            ascents.append(total)
            last = float(pos_chunks[-1][-1])
        return WalkPath(np.concatenate(pos_chunks), np.concatenate(x_chunks), 0.0, descents, ascents)

    def sample_m0(self, rng) -> float:
        return self.m0_path(rng).maximum()

    # backward sequence -----------------------------------------------------

    def builder(self, rng) -> "BackwardBuilder":
        return BackwardBuilder(self, rng)

    def backward_sequence(self, n: int, rng) -> "BackwardSample":
        if n < 0:
            raise ValueError("n must be >= 0")
        b = BackwardBuilder(self, rng)
        b.extend_to(n)
        return b.result(n)


@dataclass
class BackwardSample:
    """(S_k(mu), M_k), 0 <= k <= n, with the recorded path and milestone log."""

    S: np.ndarray
    M: np.ndarray
    s: np.ndarray  # every recorded position, s[0] = 0
    increments: np.ndarray  # increments[i] moves s[i] to s[i+1]
    milestones: list  # indices into s where accepted segments end
    segments: list  # (start, end) index pairs of accepted segments
    descents: list  # (start, end) index pairs of downward patches
    mu: float
    m: float
    L: float
    rejected_segments: int = 0

    @property
    def n(self) -> int:
        return int(self.S.size - 1)

    def first_idle(self):
        return first_idle_time(self)


class BackwardBuilder:
    """Concatenates M_0 segments, keeping later ones only if their maximum is within m."""

    def __init__(self, sampler: ExactSampler, rng):
        self.sampler = sampler
        self.rng = rng
        self._pos = [np.zeros(1)]
        self._inc = [np.empty(0)]
        self.milestones = [0]
        self.segments = []
        self.descents = []
        self.rejected = 0
        self.length = 0  # index of the last recorded position
        self.last = 0.0
        self._append(sampler.m0_path(rng))

    def _append(self, path: WalkPath):
        start = self.length
        for end in path.descents:
            # downward patches begin right after the previous upward patch ends
            begin = max([a for a in path.ascents if a < end], default=0)
            self.descents.append((start + begin, start + end))
        self._pos.append(self.last + path.positions)
        self._inc.append(path.increments)
        self.length += len(path)
        self.last = float(self._pos[-1][-1])
        self.milestones.append(self.length)
        self.segments.append((start, self.length))

    def extend_to(self, n: int):
        m = self.sampler.params.m
        while self.milestones[-2] < n:
            path = self.sampler.m0_path(self.rng)
            if path.maximum() <= _kernels.above(m):
                self._append(path)
            else:
                self.rejected += 1

    def positions(self) -> np.ndarray:
        return np.concatenate(self._pos)

    def increments(self) -> np.ndarray:
        return np.concatenate(self._inc)

    def result(self, n: int) -> BackwardSample:
        if self.milestones[-2] < n:
            self.extend_to(n)
        s = self.positions()
        smax = _kernels.suffix_max(s)
        p = self.sampler.params
        return BackwardSample(
            S=s[: n + 1].copy(),
            M=smax[: n + 1] - s[: n + 1],
            s=s,
            increments=self.increments(),
            milestones=list(self.milestones),
            segments=list(self.segments),
            descents=list(self.descents),
            mu=p.mu,
            m=p.m,
            L=p.L,
            rejected_segments=self.rejected,
        )


def first_idle_time(bs: BackwardSample):
    """Smallest k <= n with M_k = 0, or None."""
    hits = np.flatnonzero(bs.M == 0.0)
    return int(hits[0]) if hits.size else None


def waiting_times(bs: BackwardSample):
    """Forward-indexed waiting times W_j = M_{n-j} and the steps driving them.

    Returns (W, steps) with W[j] = max(W[j-1] + steps[j-1], 0) for j >= 1.
    """
    n = bs.n
    W = bs.M[::-1].copy()
    # step j moves M_{n-j+1} to M_{n-j}: s_{n-j+1} - s_{n-j}
    steps = (bs.S[1:] - bs.S[:-1])[::-1].copy() if n > 0 else np.empty(0)
    return W, steps


# --------------------------------------------------------------------------
# functional interface

_SAMPLERS: dict = {}


def _sampler_for(params, d, strict=True) -> ExactSampler:
    key = (params, id(d), strict)
    hit = _SAMPLERS.get(key)
    if hit is None or hit.d is not d:
        if len(_SAMPLERS) > 32:
            _SAMPLERS.clear()
        hit = ExactSampler(params, d, strict=strict)
        _SAMPLERS[key] = hit
    return hit


def sample_bernoulli_tm(params, d, rng) -> PatchOutcome:
    return _sampler_for(params, d).bernoulli_tm(rng)


def sample_m0_and_path(params, d, rng) -> WalkPath:
    return _sampler_for(params, d).m0_path(rng)


def sample_downward_patch(params, d, sigma, rng) -> WalkPath:
    return _sampler_for(params, d).downward_patch(rng, sigma)


def sample_backward_sequence(params, d, n, rng) -> BackwardSample:
    return _sampler_for(params, d).backward_sequence(n, rng)
