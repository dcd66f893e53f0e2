"""Dominating lattice walk for targets without a computable tilt.

Each target increment X is paired with X' = h floor(X/h) - E[h floor(X/h)].
Run with drift mu' = mu - E[h floor(X/h)] - h, the lattice walk sits above
the target walk step by step, because h floor(x/h) + h >= x. The lattice
walk is sampled exactly, its increments are refined to target increments
cell by cell, and the lattice suffix maxima tell when the target's future
can no longer matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .increments import DiscreteLaw, IncrementDistribution, LatticePareto, ShiftedPareto
from .params import AlgorithmParams, minimize_m
from .sampler import BackwardSample, ExactSampler


def psi_lattice_eval(theta: float, cutoff: float, d: IncrementDistribution) -> float:
    """log(E[exp(theta X); X <= cutoff] / P(X <= cutoff)) by a finite sum over atoms."""
    if d.lattice_span is None:
        raise TypeError("psi_lattice_eval needs a lattice law")
    p_cut = 1.0 - float(d.tail_prob(cutoff))
    return math.log(d.truncated_mgf(theta, cutoff) / p_cut)


@dataclass
class LatticeCoupling:
    """Target law, its floored companion and the matching drifts."""

    target: IncrementDistribution
    lattice: IncrementDistribution
    h: float
    mu: float
    mu_prime: float
    mean_floor: float
    # lattice atom index j' of X' relates to the target cell [j h, (j+1) h) by j = j' - index_shift
    index_shift: int = 0
    notes: list = field(default_factory=list)

    def atom_index(self, x_prime):
        """Lattice cell index floor(X/h) of sampled X' values."""
        x_prime = np.asarray(x_prime, dtype=float)
        return np.rint((x_prime + self.mean_floor) / self.h).astype(np.int64)

    def refine(self, x_prime, rng) -> np.ndarray:
        """Target increments matching the sampled lattice increments."""
        cells = self.atom_index(x_prime)
        return refine_cells(cells, self, rng)


def build_coupling(d: IncrementDistribution, h: float | None = None, mu: float = 1.0) -> LatticeCoupling:
    """Floor ``d`` onto h Z; h defaults to mu / 10 and must lie in (0, mu]."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    h = mu / 10.0 if h is None else float(h)
    if not 0 < h <= mu:
        raise ValueError(f"h must lie in (0, mu] = (0, {mu}]")
    if isinstance(d, ShiftedPareto):
        lat = LatticePareto(d.alpha_prime, d.c, h, shift=d.offset)
        # X' = h J - E[h J], so E[h floor(X/h)] is the lattice centering
        mean_floor = lat.offset
        shift = 0
    elif isinstance(d, LatticePareto):
        # target atoms j h - c0 fall in cell j + q with q = floor(-c0 / h)
        q = math.floor(-d.offset / d.h) if math.isclose(d.h, h) else None
        if q is None:
            raise ValueError("a lattice Pareto target must be coupled on its own span")
        # guard the floor against c0 / h landing within rounding of an integer
        while (q + 1) * h <= d.value(0) + 1e-15 * max(1.0, abs(d.offset)):
            q += 1
        while q * h > d.value(0):
            q -= 1
        lat = LatticePareto(d.alpha_prime, d.c, h, shift=d.shift - q * h)
        mean_floor = lat.offset
        shift = q
    elif isinstance(d, DiscreteLaw):
        floors = h * np.floor(d.values / h)
        lat = DiscreteLaw(floors, d.probs, lattice_span=h)
        mean_floor = lat.offset
        shift = 0
    else:
        raise TypeError(f"no coupling for {type(d).__name__}")
    mu_prime = mu - mean_floor - h
    if not mu_prime > 0:
        raise ValueError(f"mu' = {mu_prime} is not positive")
    return LatticeCoupling(d, lat, h, mu, mu_prime, mean_floor, shift)


def refine_cells(cells, coupling: LatticeCoupling, rng) -> np.ndarray:
    cells = np.asarray(cells, dtype=np.int64)
    d, h = coupling.target, coupling.h
    if isinstance(d, LatticePareto):
        # the cell holds exactly one target atom
        return d.value(cells - coupling.index_shift)
    out = np.empty(cells.size)
    for c in np.unique(cells):
        sel = cells == c
        out[sel] = d.sample_in_cell(c * h, (c + 1) * h, rng, int(sel.sum()))
    return out


def refine_increment(x_prime_atom, coupling: LatticeCoupling, rng) -> float:
    """Target increment X given its floored companion (given as the sampled X' value)."""
    x = coupling.refine(np.array([float(x_prime_atom)]), rng)
    return float(x[0])


def solve_lattice_params(coupling: LatticeCoupling, alpha: float, delta: float, gamma: float,
                         L: float = 1.1, **kw) -> AlgorithmParams:
    """Smallest feasible m for the dominating walk."""
    return minimize_m(coupling.lattice, coupling.mu_prime, alpha, delta, gamma, L=L, **kw)


@dataclass
class CoupledSample:
    target: BackwardSample
    dominating_S: np.ndarray  # S'_k(mu'), 0 <= k <= N
    dominating_top: np.ndarray  # S'_k + M'_k over the same range
    N: int
    floor_level: float  # min_{k <= n} S_k(mu)

    def dominated(self) -> bool:
        return bool(np.all(self.dominating_S >= self.target.s[: self.N + 1] - 1e-9))


class CoupledSampler:
    def __init__(self, coupling: LatticeCoupling, params: AlgorithmParams, *, strict: bool = True,
                 check: bool = True):
        if not math.isclose(params.mu, coupling.mu_prime, rel_tol=1e-12):
            raise ValueError("params must be solved for the drift mu' of the coupling")
        self.coupling = coupling
        self.params = params
        self.inner = ExactSampler(params, coupling.lattice, strict=strict, check=check)

    def sample(self, n: int, rng) -> CoupledSample:
        if n < 0:
            raise ValueError("n must be >= 0")
        cp = self.coupling
        b = self.inner.builder(rng)
        horizon = max(n, 1)
        x = np.empty(0)
        while True:
            bs = b.result(horizon)
            xp = bs.increments
            if x.size < xp.size:
                x = np.concatenate([x, cp.refine(xp[x.size:], rng)])
            s = np.concatenate(([0.0], np.cumsum(x - cp.mu)))
            floor_level = float(s[: n + 1].min())
            top = bs.S + bs.M
            hit = np.flatnonzero(top[n:] <= floor_level)
            if hit.size:
                N = n + int(hit[0])
                break
            horizon *= 2
        seg = s[: N + 1]
        suffix = np.maximum.accumulate(seg[::-1])[::-1]
        M = suffix[: n + 1] - seg[: n + 1]
        out = BackwardSample(
            S=seg[: n + 1].copy(), M=M, s=seg.copy(), increments=x[:N].copy(),
            milestones=[], segments=[], descents=[], mu=cp.mu, m=self.params.m, L=self.params.L,
        )
        return CoupledSample(out, bs.S[: N + 1].copy(), top[: N + 1].copy(), N, floor_level)


def sample_backward_via_coupling(coupling: LatticeCoupling, params: AlgorithmParams, n: int, rng,
                                 **kw) -> CoupledSample:
    return CoupledSampler(coupling, params, **kw).sample(n, rng)
