"""Independent reference computations for checking the exact sampler.

Nothing here calls into :mod:`exactq.sampler`; the only shared code is the
increment laws and the block bookkeeping of :mod:`exactq.partition`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from . import _kernels
from .increments import DiscreteLaw, IncrementDistribution
from .params import AlgorithmParams, truncated_log_mgf_bound
from .partition import block_end, block_start, g_pmf, gbar

Z95 = 1.96


# --------------------------------------------------------------------------
# forward chain and batch means


def lindley_chain(d: IncrementDistribution, mu: float, length: int, rng, w0: float = 0.0,
                  chunk: int = 1 << 22) -> np.ndarray:
    """W_1 .. W_length of W_n = (W_{n-1} + X_n - mu)^+ started at w0."""
    if length < 1:
        raise ValueError("length must be >= 1")
    out = np.empty(length)
    w = float(w0)
    for a in range(0, length, chunk):
        b = min(length, a + chunk)
        seg = _kernels.lindley(d.sample(rng, b - a) - mu, w)
        out[a:b] = seg
        w = float(seg[-1])
    return out


@dataclass(frozen=True)
class BatchMeansResult:
    mean: float
    lower: float
    upper: float
    batch_size: int
    length: int
    n_batches: int

    def overlaps(self, lo: float, hi: float) -> bool:
        return self.lower <= hi and lo <= self.upper

    def to_dict(self):
        return asdict(self)


def batch_means_ci(chain, batch_size: int, z: float = Z95) -> BatchMeansResult:
    """Normal-theory CI from non-overlapping batch averages (trailing partial batch dropped)."""
    chain = np.asarray(chain, dtype=float)
    nb = chain.size // int(batch_size)
    if nb < 30:
        raise ValueError(f"need at least 30 batches, got {nb}")
    means = chain[: nb * batch_size].reshape(nb, batch_size).mean(axis=1)
    point = float(means.mean())
    half = z * float(means.std(ddof=1)) / math.sqrt(nb)
    return BatchMeansResult(point, point - half, point + half, int(batch_size), int(chain.size), nb)


def mean_ci(x, z: float = Z95) -> BatchMeansResult:
    """IID CI for a sample mean, in the same container."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    point = float(x.mean())
    half = z * float(x.std(ddof=1)) / math.sqrt(x.size)
    return BatchMeansResult(point, point - half, point + half, 1, int(x.size), int(x.size))


# --------------------------------------------------------------------------
# crossing probability by brute force simulation


def tm_tail_bound(params: AlgorithmParams, horizon: int) -> float:
    """Bound on P(horizon < T_m < inf) from the block envelope g.

    Under feasible parameters P(T_m in block k) <= g(k); blocks starting at or
    after ``horizon`` contribute gbar(m + mu n_{k0-1}) / gbar(m + mu).
    """
    k0 = 2
    while block_start(k0) <= horizon:
        k0 += 1
    # block k0 - 1 straddles the horizon and is counted whole
    k0 -= 1
    a, m, mu = params.alpha, params.m, params.mu
    return float(gbar(m + mu * block_start(k0), a) / gbar(m + mu, a))


@dataclass(frozen=True)
class TmInterval:
    estimate: float
    lower: float
    upper: float
    tail_bound: float
    reps: int
    horizon: int

    def covers(self, p: float) -> bool:
        return self.lower <= p <= self.upper


def crude_tm_prob(params: AlgorithmParams, d: IncrementDistribution, horizon: int, rng,
                  reps: int, chunk_steps: int = 1 << 22, z: float = 3.0) -> TmInterval:
    """Interval for P(T_m < inf): direct walks up to ``horizon`` plus the analytic tail bound.

    Walks are simulated in vectorised column blocks and a column stops being
    tracked once it has crossed m.
    """
    m, mu = params.m, params.mu
    # exceed m by more than rounding noise, so lattice walks landing exactly on m do not count
    level = m + 1e-9 * max(1.0, abs(m))
    if d.support_max <= mu:
        return TmInterval(0.0, 0.0, 0.0, 0.0, reps, horizon)
    hits = 0
    width = max(1, min(reps, chunk_steps // max(1, min(horizon, 4096))))
    done = 0
    while done < reps:
        w = min(width, reps - done)
        pos = np.zeros(w)
        alive = np.ones(w, dtype=bool)
        step = 0
        while step < horizon and alive.any():
            span = min(4096, horizon - step)
            idx = np.flatnonzero(alive)
            x = d.sample(rng, (span, idx.size)) - mu
            path = pos[idx] + np.cumsum(x, axis=0)
            crossed = (path > level).any(axis=0)
            alive[idx[crossed]] = False
            hits += int(crossed.sum())
            pos[idx] = path[-1]
            step += span
        done += w
    p = hits / reps
    se = math.sqrt(max(p * (1 - p), 1.0 / reps) / reps)
    tail = tm_tail_bound(params, horizon) if horizon > 0 else 1.0
    return TmInterval(p, max(0.0, p - z * se), min(1.0, p + z * se + tail), tail, reps, horizon)


# --------------------------------------------------------------------------
# acceptance-ratio bound audit


@dataclass
class RatioAudit:
    k: np.ndarray
    record_ratio: np.ndarray
    tilt_ratio: np.ndarray
    spread_ratio: np.ndarray
    psi_exact: np.ndarray = field(default=None)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.record_ratio <= 1) and np.all(self.tilt_ratio <= 1) and np.all(self.spread_ratio <= 1))

    def first_failure(self):
        bad = (self.record_ratio > 1) | (self.tilt_ratio > 1) | (self.spread_ratio > 1)
        return int(self.k[np.argmax(bad)]) if bad.any() else None

    def to_dict(self):
        return {"passed": self.passed, "first_failure": self.first_failure(),
                "k": self.k.tolist(), "record_ratio": self.record_ratio.tolist(),
                "tilt_ratio": self.tilt_ratio.tolist(), "spread_ratio": self.spread_ratio.tolist(),
                "psi_exact": self.psi_exact.tolist()}


_EXACT_ATOMS = 20_000_000
_CHUNK = 1 << 20


def _union_sum(d, k, params, pieces: int = 1 << 14):
    """sum of P(X > (mu j + m)^(1-delta)) over block k.

    Exact for blocks up to _CHUNK indices; beyond that each of ``pieces``
    equal runs is bounded by its length times the value at its first index
    (the summand decreases in j), which keeps the audit conservative.
    """
    size = block_start(k)
    expo = 1 - params.delta
    if size <= _CHUNK:
        j = np.arange(size, 2 * size, dtype=float)
        return float(np.sum(d.tail_prob((params.mu * j + params.m) ** expo)))
    run = size // pieces
    j = size + run * np.arange(pieces, dtype=float)
    return float(run * np.sum(d.tail_prob((params.mu * j + params.m) ** expo)))


def _psi(d, p, k, C, cut, tail, ex2):
    """(psi_k, exact?) with the finite-variance bound when the exact sum is out of reach."""
    exact_ok = True
    if hasattr(d, "atom_count_below") and d.atom_count_below(cut) > _EXACT_ATOMS:
        exact_ok = False
    if exact_ok:
        try:
            return math.log(d.truncated_mgf(p.gamma / cut, cut) / (1.0 - tail)), True
        except TypeError:
            pass
    return truncated_log_mgf_bound(p.gamma, p.delta, ex2, tail, C) - math.log1p(-tail), False


def ratio_bound_audit(params: AlgorithmParams, d: IncrementDistribution, k_max: int = 30) -> RatioAudit:
    """Surrogate ratios for blocks 2..k_max; all must stay <= 1.

    record_ratio: 3 sum_j P(X_j > (mu j + m)^(1-delta)) / g(k), the union bound on 3 P(A_k) / g(k)
    tilt_ratio: 3 exp(-theta_k C_k + max(n_{k-1} psi_k, (n_k - 1) psi_k)) / g(k)
    spread_ratio: 3 (n_k - 1) P(X > C_k^(1-delta)) / g(k), the union bound on 3 P(B_k^c) / g(k)
    """
    p = params
    ks = np.arange(2, k_max + 1)
    l1, l2, l3, exact = [], [], [], []
    ex2 = None
    for k in ks:
        g = g_pmf(int(k), p)
        C = p.mu * block_start(int(k)) + p.m
        cut = C ** (1 - p.delta)
        theta = p.gamma / cut
        tail = float(d.tail_prob(cut))
        l1.append(3.0 * _union_sum(d, int(k), p) / g)
        l3.append(3.0 * block_end(int(k)) * tail / g)
        if ex2 is None:
            ex2 = d.second_moment()
        psi, cheap = _psi(d, p, int(k), C, cut, tail, ex2)
        exact.append(cheap)
        expo = -theta * C + max(block_start(int(k)) * psi, block_end(int(k)) * psi)
        l2.append(3.0 * math.exp(min(expo, 700.0)) / g)
    return RatioAudit(ks, np.array(l1), np.array(l2), np.array(l3), np.array(exact))


# --------------------------------------------------------------------------
# distribution comparisons


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def empirical_pmf(x, h: float, origin: float = 0.0) -> dict:
    """Frequencies of a lattice-valued sample keyed by the integer lattice index."""
    idx = np.rint((np.asarray(x, dtype=float) - origin) / h).astype(np.int64)
    v, c = np.unique(idx, return_counts=True)
    return dict(zip(v.tolist(), (c / idx.size).tolist()))


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# --------------------------------------------------------------------------
# exact laws for lattice toys


def _lattice_steps(d: DiscreteLaw, mu: float, h: float):
    steps = (d.values - mu) / h
    idx = np.rint(steps).astype(np.int64)
    if np.max(np.abs(steps - idx)) > 1e-9:
        raise ValueError("increments minus mu are not on the lattice h Z")
    return idx, d.probs


def chernoff_root(d: DiscreteLaw, mu: float) -> float:
    """theta* > 0 with E exp(theta*(X - mu)) = 1, so P(M_0 > x) <= exp(-theta* x)."""
    y = d.values - mu
    if y.max() <= 0:
        return math.inf
    f = lambda t: math.fsum(d.probs * np.exp(t * y)) - 1.0
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    return optimize.brentq(f, 1e-12 * hi, hi, xtol=1e-15)


@dataclass
class LatticeLaw:
    """P(M_0 = index * h) for index 0..len-1 with a certified bound on the truncated tail."""

    h: float
    probs: np.ndarray
    tail_bound: float
    iterations: int

    def as_dict(self) -> dict:
        return {i: float(v) for i, v in enumerate(self.probs) if v > 0}

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size) * self.h, self.probs))


def brute_force_m0(d: DiscreteLaw, mu: float, h: float, tol: float = 1e-12,
                   max_iter: int = 1_000_000) -> LatticeLaw:
    """Law of M_0 = sup_n S_n(mu) by iterating the Lindley map on distributions.

    After n iterations from the point mass at 0 the distribution is that of
    max_{k <= n} S_k(mu), which increases to M_0. The grid is cut where the
    Chernoff bound on P(M_0 > x) falls below ``tol``; mass pushed past the cut
    is kept in the last cell, so the result is exact up to ``tol`` plus the
    convergence slack.
    """
    steps, probs = _lattice_steps(d, mu, h)
    root = chernoff_root(d, mu)
    if math.isinf(root):
        return LatticeLaw(h, np.array([1.0]), 0.0, 0)
    top = int(math.ceil(-math.log(tol) / (root * h))) + int(steps.max()) + 1
    w = np.zeros(top + 1)
    w[0] = 1.0
    for it in range(1, max_iter + 1):
        new = np.zeros_like(w)
        for s, q in zip(steps, probs):
            if s >= 0:
                new[s:] += q * w[: w.size - s]
                new[-1] += q * w[w.size - s:].sum() if s > 0 else 0.0
            else:
                new[0] += q * w[: -s].sum()
                new[: w.size + s] += q * w[-s:]
        if np.abs(new - w).sum() < tol:
            w = new
            break
        w = new
    tail = math.exp(-root * top * h)
    return LatticeLaw(h, w, tail + tol, it)


def bernoulli_tm_exact(d: DiscreteLaw, mu: float, m: float, h: float, **kw) -> float:
    """P(T_m < inf) = P(M_0 > m) from the brute-force law."""
    law = brute_force_m0(d, mu, h, **kw)
    idx = np.arange(law.probs.size) * h
    return float(law.probs[idx > m + 1e-9].sum())


def segment_law_given_barrier(d: DiscreteLaw, mu: float, a: float, b: float, h: float,
                              max_len: int = 2000, tol: float = 1e-13) -> dict:
    """Joint law of (end, running max) of the walk stopped below -a, given sup_n S_n <= b.

    Dynamic program over (position, running max) on the lattice. A stop at
    ``end`` is weighted by P(M_0 <= b - end) / P(M_0 <= b), the chance the rest
    of the walk also stays at or below b. Keys are lattice index pairs; mass
    left alive after ``max_len`` steps is reported under ``None``.
    """
    steps, probs = _lattice_steps(d, mu, h)
    law = brute_force_m0(d, mu, h)
    cdf = np.cumsum(law.probs)

    def never_above(level_idx):
        return float(cdf[min(level_idx, cdf.size - 1)]) if level_idx >= 0 else 0.0

    # the stop is the first position strictly below -a
    stop_below = -int(math.floor(a / h + 1e-9))  # indices below this stop the walk
    bi = int(math.floor(b / h + 1e-9))
    norm = never_above(bi)
    lo_pos = stop_below
    width = bi - lo_pos + 1
    # state[pos - lo_pos, runmax] with runmax stored as an index 0..bi
    state = np.zeros((width, bi + 1))
    state[-lo_pos, 0] = 1.0
    out = {}
    for _ in range(max_len):
        new = np.zeros_like(state)
        for st, q in zip(steps, probs):
            st = int(st)
            for pi in np.flatnonzero(state.any(axis=1)):
                row = state[pi]
                npos = pi + lo_pos + st
                if npos > bi:
                    continue
                if npos < stop_below:
                    w = q * never_above(bi - npos) / norm
                    for mx in np.flatnonzero(row):
                        key = (int(npos), int(mx))
                        out[key] = out.get(key, 0.0) + w * row[mx]
                    continue
                shifted = row.copy()
                if npos > 0:
                    # running max moves up to npos where it was lower
                    low = shifted[:npos].sum()
                    shifted[:npos] = 0.0
                    shifted[npos] += low
                new[npos - lo_pos] += q * shifted
        state = new
        if state.sum() < tol:
            break
    out[None] = float(state.sum())
    return out
