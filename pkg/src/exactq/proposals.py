"""Proposal laws for the upward patch of the walk.

Three laws over the increments of block ``k``:

* record law: increments conditioned on a big jump inside the block
  (event A_k), proposed from a half nominal / half forced-record mixture;
* tilted law: increments truncated at ``C_k**(1-delta)`` and exponentially
  tilted with ``theta_k = gamma / C_k**(1-delta)``;
* uniform-record law: increments conditioned on some increment before
  ``n_k`` exceeding ``C_k**(1-delta)`` (event complement of B_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .increments import IncrementDistribution
from .partition import block_end, block_start, record_thresholds, uniform_threshold

_CHUNK = 1 << 20
# exact log-mgf is skipped for the lazy pre-filter above this many atoms
MAX_EXACT_ATOMS = 20_000_000


@dataclass(frozen=True)
class TiltedLaw:
    """Truncated exponential tilt used for block k."""

    k: int
    theta: float
    C: float
    cutoff: float
    psi: float
    p_cut: float
    gamma: float

    @property
    def accept_mass(self) -> float:
        """E[exp(theta X - gamma); X <= cutoff], the per-proposal acceptance probability."""
        return math.exp(self.psi - self.gamma) * self.p_cut


@dataclass
class ProposalPath:
    increments: np.ndarray
    proposals: int
    crossing: int | None = None  # first time the drifted walk exceeds m (1-based)
    draws: int = 0


def block_level(k: int, mu: float, m: float) -> float:
    """C_k = mu n_{k-1} + m."""
    return mu * block_start(k) + m


def tilted_law(k: int, params, d: IncrementDistribution) -> TiltedLaw:
    C = block_level(k, params.mu, params.m)
    cutoff = C ** (1.0 - params.delta)
    theta = params.gamma / cutoff
    p_cut = 1.0 - d.tail_prob(cutoff)
    mgf = d.truncated_mgf(theta, cutoff)
    return TiltedLaw(k=k, theta=theta, C=C, cutoff=cutoff, psi=math.log(mgf / p_cut),
                     p_cut=p_cut, gamma=params.gamma)


def first_crossing(increments, mu: float, m: float, start_index: int = 0, start_pos: float = 0.0):
    """1-based time at which start_pos + sum(X - mu) first exceeds m, or None."""
    i, _ = _kernels.first_above(np.asarray(increments, dtype=float) - mu, start_pos, m)
    return None if i < 0 else start_index + i + 1


class BlockCache:
    """Per-block quantities reused across calls (read-mostly)."""

    def __init__(self, params, d: IncrementDistribution):
        self.params = params
        self.d = d
        self._tilt: dict[int, TiltedLaw] = {}
        self._record: dict[int, tuple[float, float]] = {}
        self._cum: dict[int, np.ndarray] = {}

    def tilt(self, k: int) -> TiltedLaw:
        if k not in self._tilt:
            self._tilt[k] = tilted_law(k, self.params, self.d)
        return self._tilt[k]

    def exact_tilt_is_cheap(self, k: int) -> bool:
        cutoff = block_level(k, self.params.mu, self.params.m) ** (1 - self.params.delta)
        h = self.d.lattice_span
        if h is None or not hasattr(self.d, "atom_count_below"):
            return True
        return k in self._tilt or self.d.atom_count_below(cutoff) <= MAX_EXACT_ATOMS

    def _record_probs(self, k: int, start: int, stop: int) -> np.ndarray:
        p = self.params
        j = np.arange(block_start(k) + start, block_start(k) + stop, dtype=float)
        return np.asarray(self.d.tail_prob((p.mu * j + p.m) ** (1.0 - p.delta)), dtype=float)

    def record_mass(self, k: int) -> tuple[float, float]:
        """(Lambda_k, P(A_k)): the sum of the block tail probabilities and the exact union probability."""
        if k not in self._record:
            size = block_start(k)
            lam, log_none = 0.0, 0.0
            for a in range(0, size, _CHUNK):
                pj = self._record_probs(k, a, min(size, a + _CHUNK))
                lam += float(np.sum(pj))
                log_none += float(np.sum(np.log1p(-pj)))
                if size <= _CHUNK:
                    self._cum[k] = np.cumsum(pj)
            self._record[k] = (lam, -math.expm1(log_none))
        return self._record[k]

    def record_mass_upper(self, k: int) -> float:
        """Cheap upper bound n_{k-1} P(X > (mu n_{k-1} + m)**(1-delta)) on Lambda_k."""
        if k in self._record:
            return self._record[k][0]
        return block_start(k) * float(self.d.tail_prob(uniform_threshold(k, self.params.mu, self.params.m,
                                                                          self.params.delta)))

    def pick_record(self, k: int, rng) -> int:
        """Offset j in the block drawn with probability proportional to P(X_j > threshold_j)."""
        lam, _ = self.record_mass(k)
        target = rng.random() * lam
        if k in self._cum:
            c = self._cum[k]
            return int(min(np.searchsorted(c, target, side="right"), c.size - 1))
        size = block_start(k)
        acc = 0.0
        for a in range(0, size, _CHUNK):
            c = acc + np.cumsum(self._record_probs(k, a, min(size, a + _CHUNK)))
            if c[-1] > target:
                return a + int(np.searchsorted(c, target, side="right"))
            acc = c[-1]
        return size - 1


# --------------------------------------------------------------------------
# tilted law


def sample_pk1_increment(tilt: TiltedLaw, d: IncrementDistribution, rng):
    """One draw from the truncated tilted law; returns (x, proposals)."""
    n = 0
    while True:
        n += 1
        x = float(d.sample(rng))
        if x <= tilt.cutoff and rng.random() <= math.exp(tilt.theta * x - tilt.gamma):
            return x, n


def sample_pk1_increments(tilt: TiltedLaw, d: IncrementDistribution, size: int, rng):
    """``size`` independent tilted draws in order; returns (array, proposals)."""
    out = []
    got = 0
    proposals = 0
    rate = max(tilt.accept_mass, 1e-3)
    while got < size:
        batch = int((size - got) / rate * 1.1) + 8
        x = d.sample(rng, batch)
        u = rng.random(batch)
        ok = (x <= tilt.cutoff) & (u <= np.exp(tilt.theta * x - tilt.gamma))
        idx = np.flatnonzero(ok)
        if got + idx.size >= size:
            cut = idx[size - got - 1]
            proposals += int(cut) + 1
            idx = idx[: size - got]
        else:
            proposals += batch
        out.append(x[idx])
        got += idx.size
    return np.concatenate(out) if out else np.empty(0), proposals


def sample_pk1_path(k: int, params, d: IncrementDistribution, rng,
                    cache: BlockCache | None = None) -> ProposalPath:
    """Tilted increments until the drifted walk exceeds m or n_k - 1 steps."""
    tilt = cache.tilt(k) if cache is not None else tilted_law(k, params, d)
    horizon = block_end(k)
    chunks = []
    pos = 0.0
    done = 0
    proposals = 0
    size = min(horizon, 256)
    crossing = None
    while done < horizon:
        size = min(size, horizon - done)
        x, n = sample_pk1_increments(tilt, d, size, rng)
        proposals += n
        i, path = _kernels.first_above(x - params.mu, pos, params.m)
        if i >= 0:
            chunks.append(x[: i + 1])
            crossing = done + i + 1
            break
        chunks.append(x)
        pos = float(path[-1])
        done += size
        size *= 2
    inc = np.concatenate(chunks) if chunks else np.empty(0)
    return ProposalPath(inc, proposals, crossing, draws=2 * proposals)


def pk1_path_likelihood(path: ProposalPath, tilt: TiltedLaw) -> float:
    """exp(-theta S_T + T psi) for the stopped tilted path."""
    t = path.increments.size
    return math.exp(-tilt.theta * float(np.sum(path.increments)) + t * tilt.psi)


# --------------------------------------------------------------------------
# record laws


def sample_pk0_path(k: int, params, d: IncrementDistribution, rng, cache: BlockCache | None = None) -> ProposalPath:
    """X_1 .. X_{n_k-1} from the nominal law conditioned on A_k."""
    cache = cache if cache is not None else BlockCache(params, d)
    n = block_end(k)
    lo = block_start(k) - 1
    thr = record_thresholds(k, params.mu, params.m, params.delta)
    lam, p_a = cache.record_mass(k)
    if p_a <= 0:
        raise ValueError(f"P(A_{k}) = 0")
    proposals = 0
    draws = 0
    while True:
        proposals += 1
        x = d.sample(rng, n)
        draws += n + 2
        if rng.random() >= 0.5:
            j = cache.pick_record(k, rng)
            x[lo + j] = float(d.sample_above(thr[j], rng))
            draws += 2
        count = int(np.count_nonzero(x[lo:] > thr))
        if count and rng.random() * (count + lam) <= 1.0 + lam:
            return ProposalPath(x, proposals, first_crossing(x, params.mu, params.m), draws)


def sample_pk2_path(k: int, params, d: IncrementDistribution, rng, cache: BlockCache | None = None) -> ProposalPath:
    """X_1 .. X_{n_k-1} from the nominal law conditioned on some X_j > C_k**(1-delta)."""
    n = block_end(k)
    u = uniform_threshold(k, params.mu, params.m, params.delta)
    p = float(d.tail_prob(u))
    if p <= 0:
        raise ValueError(f"P(B_{k} complement) = 0")
    lam = n * p
    proposals = 0
    draws = 0
    while True:
        proposals += 1
        x = d.sample(rng, n)
        draws += n + 2
        if rng.random() >= 0.5:
            j = int(rng.integers(n))
            x[j] = float(d.sample_above(u, rng))
            draws += 2
        count = int(np.count_nonzero(x > u))
        if count and rng.random() * (count + lam) <= 1.0 + lam:
            return ProposalPath(x, proposals, first_crossing(x, params.mu, params.m), draws)


def prob_b_complement(k: int, params, d: IncrementDistribution) -> float:
    """1 - P(X <= C_k**(1-delta))**(n_k - 1)."""
    p = float(d.tail_prob(uniform_threshold(k, params.mu, params.m, params.delta)))
    if p >= 1:
        return 1.0
    return -math.expm1(block_end(k) * math.log1p(-p))


def log_prob_b(k: int, params, d: IncrementDistribution) -> float:
    p = float(d.tail_prob(uniform_threshold(k, params.mu, params.m, params.delta)))
    if p >= 1:
        return -math.inf
    return block_end(k) * math.log1p(-p)
