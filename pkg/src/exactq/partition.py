"""Dyadic time blocks, the record events and the block law ``g``.

Block ``k >= 2`` covers the integer times ``n_{k-1} .. n_k - 1`` with
``n_k = 2**(k-1)``.  The block index of the first upward crossing is
dominated through the mass function ``g`` built from an integrated Pareto
tail with index ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def block_start(k: int) -> int:
    """n_{k-1}: first time in block k."""
    return 1 << (k - 2)


def block_end(k: int) -> int:
    """n_k - 1: last time in block k."""
    return (1 << (k - 1)) - 1


def n_of(k: int) -> int:
    return 1 << (k - 1)


def gbar(t, alpha: float):
    """Integrated tail of P(Y > y) = (1 + y)**(-alpha): (1 + t)**(1 - alpha)/(alpha - 1)."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    return (1.0 + np.asarray(t, dtype=float)) ** (1.0 - alpha) / (alpha - 1.0)


@dataclass(frozen=True)
class RecordLaw:
    """Mass function g(k), k >= 2, for given (alpha, m, mu)."""

    alpha: float
    m: float
    mu: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")

    def _log1p_arg(self, k):
        # log(1 + m + mu*n_{k})
        return math.log1p(self.m + self.mu * math.ldexp(1.0, k - 1))

    def survival(self, k: int) -> float:
        """P(K > k) = Gbar(m + mu n_k)/Gbar(m + mu n_1) for k >= 1."""
        if k < 1:
            return 1.0
        return math.exp((1.0 - self.alpha) * (self._log1p_arg(k) - self._log1p_arg(1)))

    def cdf(self, k: int) -> float:
        return -math.expm1((1.0 - self.alpha) * (self._log1p_arg(k) - self._log1p_arg(1))) if k >= 1 else 0.0

    def pmf(self, k: int) -> float:
        if k < 2:
            raise ValueError("block index must be >= 2")
        # Gbar(a) - Gbar(b) written as Gbar(a) * (1 - Gbar(b)/Gbar(a))
        la, lb = self._log1p_arg(k - 1), self._log1p_arg(k)
        head = math.exp((1.0 - self.alpha) * (la - self._log1p_arg(1)))
        return head * -math.expm1((1.0 - self.alpha) * (lb - la))

    def quantile(self, u: float) -> int:
        """Smallest k >= 2 with cdf(k) >= u, for u in [0, 1)."""
        if u <= 0.0:
            return 2
        # 1 + m + mu n_k >= (1 + m + mu) (1 - u)**(-1/(alpha-1))
        target = math.log1p(self.m + self.mu) - math.log1p(-u) / (self.alpha - 1.0)
        r = (math.exp(target) - 1.0 - self.m) / self.mu
        k = 2 if r <= 1 else max(2, int(math.ceil(math.log2(r))) + 1)
        # guard against rounding at the bracket edges
        while k > 2 and self.cdf(k - 1) >= u:
            k -= 1
        while self.cdf(k) < u:
            k += 1
        return k

    def sample(self, rng) -> int:
        return self.quantile(float(rng.random()))


def sample_K(params, rng) -> int:
    return RecordLaw(params.alpha, params.m, params.mu).sample(rng)


def g_pmf(k: int, params) -> float:
    return RecordLaw(params.alpha, params.m, params.mu).pmf(k)


def record_thresholds(k: int, mu: float, m: float, delta: float) -> np.ndarray:
    """(mu j + m)**(1 - delta) for j in block k."""
    j = np.arange(block_start(k), block_end(k) + 1, dtype=float)
    return (mu * j + m) ** (1.0 - delta)


def uniform_threshold(k: int, mu: float, m: float, delta: float) -> float:
    """(mu n_{k-1} + m)**(1 - delta), the B_k level."""
    return (mu * block_start(k) + m) ** (1.0 - delta)


def event_indicators(increments, k: int, params) -> tuple[bool, bool]:
    """(in A_k, in B_k) for increments X_1 .. X_{n_k - 1}."""
    x = np.asarray(increments, dtype=float)
    if x.size != block_end(k):
        raise ValueError(f"block {k} needs {block_end(k)} increments, got {x.size}")
    lo = block_start(k) - 1
    in_a = bool(np.any(x[lo:] > record_thresholds(k, params.mu, params.m, params.delta)))
    # ties resolve as <= per the weak inequality defining B_k
    in_b = bool(np.all(x <= uniform_threshold(k, params.mu, params.m, params.delta)))
    return in_a, in_b
