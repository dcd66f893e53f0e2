"""Centered increment laws for the drifted random walk.

Every law exposes the primitives the samplers need: unconditional and
conditional draws, exact tail probabilities, the truncated moment
generating function and a few absolute moments.  All laws are centered
internally so the mean of ``X`` is zero.

The main example is :class:`LatticePareto`, the law of
``h*floor((c*V + ... )/h)`` for a Pareto-type ``V`` with
``P(V > t) = (1 + t)**(-alpha_prime)``, recentred.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate

_CHUNK = 1 << 20


def pareto_tail(t, alpha_prime: float):
    """P(V > t) for the raw Pareto variable, ``(1 + t)**(-alpha_prime)`` for t >= 0."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, (1.0 + np.maximum(t, 0.0)) ** (-alpha_prime))
    return out if out.ndim else float(out)


class IncrementDistribution(ABC):
    """Capability record for a centered increment law."""

    #: lattice span ``h`` or ``None`` for non-lattice laws
    lattice_span: float | None = None
    #: centering offset: raw value minus ``offset`` is the centered value
    offset: float = 0.0

    mean = 0.0

    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None):
        ...

    @abstractmethod
    def tail_prob(self, t):
        """P(X > t), vectorized over ``t``."""

    def cdf(self, t):
        return 1.0 - np.asarray(self.tail_prob(t))

    @abstractmethod
    def sample_above(self, t: float, rng: np.random.Generator, size=None):
        """Draw from the law of X given X > t."""

    @abstractmethod
    def sample_at_most(self, t: float, rng: np.random.Generator, size=None):
        """Draw from the law of X given X <= t."""

    def sample_conditional(self, region: str, t: float, rng, size=None):
        if region == "above":
            return self.sample_above(t, rng, size)
        if region == "at_most":
            return self.sample_at_most(t, rng, size)
        raise ValueError(f"unknown region {region!r}")

    @abstractmethod
    def truncated_mgf(self, theta: float, cutoff: float) -> float:
        """E[exp(theta X) ; X <= cutoff]."""

    @abstractmethod
    def abs_moment(self, beta: float) -> float:
        """Upper bound (exact up to a certified bracket) on E|X|**beta."""

    @abstractmethod
    def positive_moment(self, beta: float) -> float:
        """Upper bound on E[(X+)**beta]."""

    def second_moment(self) -> float:
        return self.abs_moment(2.0)

    @property
    def support_max(self) -> float:
        return math.inf

    @property
    def support_min(self) -> float:
        return -math.inf

    @property
    def moment_limit(self) -> float:
        """Supremum of the orders for which absolute moments are finite."""
        return math.inf

    @property
    def is_lattice(self) -> bool:
        return self.lattice_span is not None


# --------------------------------------------------------------------------
# finite discrete laws


class DiscreteLaw(IncrementDistribution):
    """Finitely supported law, centered at construction.

    ``values`` are raw support points; the law of ``X`` is ``values - mean``.
    """

    def __init__(self, values, probs, lattice_span: float | None = None):
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and probs must be matching 1-d arrays")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("probs must be a probability vector")
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        order = np.argsort(values, kind="stable")
        uv, inv = np.unique(values[order], return_inverse=True)
        up = np.zeros(uv.size)
        np.add.at(up, inv, probs[order])
        up /= up.sum()
        self.raw_values = uv
        self.offset = math.fsum(uv * up)
        self.values = uv - self.offset
        self.probs = up
        self.lattice_span = lattice_span
        self._cdf = np.cumsum(up)
        self._cdf[-1] = 1.0
        # surv[i] = P(X >= values[i]); surv[n] = 0
        self._surv = np.concatenate([np.cumsum(up[::-1])[::-1], [0.0]])

    def __repr__(self):
        return f"DiscreteLaw(values={self.values.tolist()}, probs={self.probs.tolist()})"

    @property
    def support_max(self):
        return float(self.values[-1])

    @property
    def support_min(self):
        return float(self.values[0])

    def _pick(self, lo: int, hi: int, u):
        # index in [lo, hi) with probability proportional to probs
        c = np.cumsum(self.probs[lo:hi])
        idx = np.searchsorted(c, u * c[-1], side="right")
        return lo + np.minimum(idx, hi - lo - 1)

    def sample(self, rng, size=None):
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(self._cdf, u, side="right"), self.values.size - 1)
        return self.values[idx]

    def tail_prob(self, t):
        t = np.asarray(t, dtype=float)
        out = self._surv[np.searchsorted(self.values, t, side="right")]
        return out if out.ndim else float(out)

    def sample_above(self, t, rng, size=None):
        lo = int(np.searchsorted(self.values, t, side="right"))
        if lo >= self.values.size:
            raise ValueError(f"P(X > {t}) = 0")
        return self.values[self._pick(lo, self.values.size, rng.random(size))]

    def sample_at_most(self, t, rng, size=None):
        hi = int(np.searchsorted(self.values, t, side="right"))
        if hi == 0:
            raise ValueError(f"P(X <= {t}) = 0")
        return self.values[self._pick(0, hi, rng.random(size))]

    def sample_in_cell(self, lo, hi, rng, size=None):
        """Draw X given lo <= X < hi."""
        a = int(np.searchsorted(self.values, lo, side="left"))
        b = int(np.searchsorted(self.values, hi, side="left"))
        if b <= a:
            raise ValueError(f"P({lo} <= X < {hi}) = 0")
        return self.values[self._pick(a, b, rng.random(size))]

    def truncated_mgf(self, theta, cutoff):
        if theta < 0:
            raise ValueError("theta must be >= 0")
        keep = self.values <= cutoff
        return math.fsum(self.probs[keep] * np.exp(theta * self.values[keep]))

    def abs_moment(self, beta):
        return math.fsum(self.probs * np.abs(self.values) ** beta)

    def positive_moment(self, beta):
        return math.fsum(self.probs * np.maximum(self.values, 0.0) ** beta)

    def second_moment(self):
        return math.fsum(self.probs * self.values**2)


def two_point(a: float = 1.0) -> DiscreteLaw:
    """P(X = a) = P(X = -a) = 1/2."""
    return DiscreteLaw([-a, a], [0.5, 0.5])


def degenerate() -> DiscreteLaw:
    """X identically zero."""
    return DiscreteLaw([0.0], [1.0])


# --------------------------------------------------------------------------
# Pareto-driven lattice law


@dataclass(frozen=True)
class MomentBracket:
    lower: float
    upper: float

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)


class LatticePareto(IncrementDistribution):
    """Centered lattice law ``J*h - E[J*h]`` driven by a Pareto variable.

    The atom index ``J`` satisfies ``P(J >= j) = (1 + (j*h + shift)/c)**(-alpha_prime)``
    for ``j*h + shift > 0`` and 1 otherwise.  With ``shift = 0`` this is
    ``J = floor((c/h) V)``; with ``shift = c/(alpha_prime - 1)`` it is the floor
    of the centered continuous law ``c*V - shift`` on the grid ``h*Z``.
    """

    def __init__(self, alpha_prime: float, c: float, h: float, shift: float = 0.0):
        if alpha_prime <= 1:
            raise ValueError("alpha_prime must exceed 1 (finite mean)")
        if c <= 0 or h <= 0:
            raise ValueError("c and h must be positive")
        self.alpha_prime = float(alpha_prime)
        self.c = float(c)
        self.h = float(h)
        self.shift = float(shift)
        self.lattice_span = self.h
        self.j_min = int(math.floor(-self.shift / self.h))
        self.offset, self.offset_error = self._mean_raw()

    def __repr__(self):
        return (f"LatticePareto(alpha_prime={self.alpha_prime}, c={self.c}, h={self.h}, "
                f"shift={self.shift})")

    @property
    def centering(self) -> float:
        return self.offset

    @property
    def moment_limit(self):
        return self.alpha_prime

    @property
    def support_min(self):
        return self.j_min * self.h - self.offset

    # atom level helpers ---------------------------------------------------

    def atom_survival(self, j):
        """P(J >= j), vectorized."""
        j = np.asarray(j, dtype=float)
        arg = np.maximum(j * self.h + self.shift, 0.0)
        out = np.where(j <= self.j_min, 1.0, (1.0 + arg / self.c) ** (-self.alpha_prime))
        return out if out.ndim else float(out)

    def atom_prob(self, j):
        """P(J = j) computed without cancellation."""
        j = np.asarray(j, dtype=float)
        s = self.atom_survival(j)
        lo = np.maximum(j * self.h + self.shift, 0.0)
        hi = (j + 1) * self.h + self.shift
        ratio = -np.expm1(-self.alpha_prime * (np.log1p(hi / self.c) - np.log1p(lo / self.c)))
        out = np.where(j < self.j_min, 0.0, s * ratio)
        return out if out.ndim else float(out)

    def value(self, j):
        """Centered value of atom ``j``; the only formula used to produce samples."""
        return np.asarray(j, dtype=float) * self.h - self.offset

    def atom_of(self, x):
        """Inverse of :meth:`value` for sampled values."""
        return np.rint((np.asarray(x, dtype=float) + self.offset) / self.h).astype(np.int64)

    def first_atom_above(self, t):
        """Smallest atom ``j`` whose centered value is strictly greater than ``t``."""
        t = np.asarray(t, dtype=float)
        j = np.floor((t + self.offset) / self.h) + 1.0
        j = np.maximum(j, self.j_min)
        # one-step guard so the answer agrees with float comparisons on sampled values
        down = (j - 1 >= self.j_min) & (self.value(j - 1) > t)
        j = np.where(down, j - 1, j)
        up = self.value(j) <= t
        j = np.where(up, j + 1, j)
        return j if j.ndim else float(j)

    def _quantile_atom(self, w):
        # largest j with P(J >= j) >= w, for w in (0, 1]
        v = self.c * (w ** (-1.0 / self.alpha_prime) - 1.0) - self.shift
        return np.floor(v / self.h)

    # series ---------------------------------------------------------------

    def _survival_integral(self, a: float) -> float:
        # integral over j in [a, inf) of P(J >= j), valid when a*h + shift >= 0
        base = 1.0 + (a * self.h + self.shift) / self.c
        return self.c / (self.h * (self.alpha_prime - 1.0)) * base ** (1.0 - self.alpha_prime)

    def _mean_raw(self, tol: float = 1e-13):
        """E[J h] with a certified bracket: returns (midpoint, half-width).

        The tail sum over j >= N of the convex survival S(j) lies in
        [I + S(N)/2, I + S(N)/2 - S'(N)/8] with I the integral from N.
        """
        ap, c, h = self.alpha_prime, self.c, self.h
        j0 = self.j_min + 1
        # width of the bracket is h * ap * (h/c) * base**(-ap-1) / 8
        base_needed = (8.0 * tol * c / (ap * h * h)) ** (-1.0 / (ap + 1.0))
        x_needed = c * (base_needed - 1.0) - self.shift
        n_end = max(j0 + 1, int(math.ceil(x_needed / h)) + 1, j0 + 64)
        total = 0.0
        start = j0
        while start < n_end:
            stop = min(n_end, start + _CHUNK)
            total += float(np.sum(self.atom_survival(np.arange(start, stop, dtype=float))))
            start = stop
        base = 1.0 + (n_end * h + self.shift) / c
        s_n = base ** (-ap)
        lo_tail = self._survival_integral(n_end) + 0.5 * s_n
        width = ap * (h / c) * base ** (-ap - 1.0) / 8.0
        mid = self.j_min * h + h * (total + lo_tail + 0.5 * width)
        return mid, 0.5 * h * width

    def tail_prob(self, t):
        return self.atom_survival(self.first_atom_above(t))

    # sampling -------------------------------------------------------------

    def sample_atoms(self, rng, size=None):
        w = 1.0 - rng.random(size)
        return np.maximum(self._quantile_atom(w), self.j_min).astype(np.int64)

    def sample(self, rng, size=None):
        w = 1.0 - rng.random(size)
        return self.value(np.maximum(self._quantile_atom(w), self.j_min))

    def sample_above(self, t, rng, size=None):
        j0 = self.first_atom_above(t)
        s0 = self.atom_survival(j0)
        if s0 <= 0:
            raise ValueError(f"P(X > {t}) = 0")
        w = (1.0 - rng.random(size)) * s0
        return self.value(np.maximum(self._quantile_atom(w), j0))

    def sample_at_most(self, t, rng, size=None):
        j1 = self.first_atom_above(t) - 1
        if j1 < self.j_min:
            raise ValueError(f"P(X <= {t}) = 0")
        s1 = self.atom_survival(j1 + 1)
        w = 1.0 - rng.random(size) * (1.0 - s1)
        return self.value(np.clip(self._quantile_atom(w), self.j_min, j1))

    # mgf and moments --------------------------------------------------------

    def atom_count_below(self, cutoff: float) -> int:
        return int(self.first_atom_above(cutoff) - self.j_min)

    def truncated_mgf(self, theta, cutoff):
        if theta < 0:
            raise ValueError("theta must be >= 0")
        j_end = int(self.first_atom_above(cutoff))  # exclusive
        total = 0.0
        start = self.j_min
        while start < j_end:
            stop = min(j_end, start + _CHUNK)
            j = np.arange(start, stop, dtype=float)
            total += float(np.sum(self.atom_prob(j) * np.exp(theta * self.value(j))))
            start = stop
        return total

    def _moment_bracket(self, f, beta: float) -> MomentBracket:
        """E f(X) for f(x) = |x|**beta or (x+)**beta with a tail bracket."""
        ap = self.alpha_prime
        if beta >= ap:
            return MomentBracket(math.inf, math.inf)
        # direct sum over atoms whose survival is above 1e-9 (capped)
        x_cut = self.c * (1e-9 ** (-1.0 / ap) - 1.0) - self.shift
        n_end = int(min(max(self.j_min + 2, math.ceil(x_cut / self.h) + 1), self.j_min + 4 * _CHUNK))
        n_end = max(n_end, int(math.ceil((self.offset + self.h - self.shift) / self.h)) + 2)
        total = 0.0
        start = self.j_min
        while start < n_end:
            stop = min(n_end, start + _CHUNK)
            j = np.arange(start, stop, dtype=float)
            total += float(np.sum(self.atom_prob(j) * f(self.value(j))))
            start = stop
        # J >= n_end  <=>  V >= v0; there J*h lies in (cV - shift - h, cV - shift]
        v0 = (n_end * self.h + self.shift) / self.c
        u0 = (1.0 + v0) ** (-ap)

        def tail(delta):
            shift = self.shift + delta + self.offset

            def g(u):
                # f(x) u**(beta/ap) = f(x r) with r = u**(1/ap), since f is beta-homogeneous
                r = u ** (1.0 / ap)
                return float(f(np.array(self.c * (1.0 - r) - shift * r)))

            val, _ = integrate.quad(g, 0.0, u0, weight="alg", wvar=(-beta / ap, 0.0), limit=200)
            return val

        lo = tail(self.h)
        hi = tail(0.0)
        return MomentBracket(total + lo, total + hi + 1e-12 * max(1.0, hi))

    def _cached(self, key, fn):
        cache = self.__dict__.setdefault("_moments", {})
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    def abs_moment_bracket(self, beta):
        return self._cached(("abs", float(beta)),
                            lambda: self._moment_bracket(lambda x: np.abs(x) ** beta, beta))

    def positive_moment_bracket(self, beta):
        return self._cached(("pos", float(beta)),
                            lambda: self._moment_bracket(lambda x: np.maximum(x, 0.0) ** beta, beta))

    def abs_moment(self, beta):
        return self.abs_moment_bracket(beta).upper

    def positive_moment(self, beta):
        return self.positive_moment_bracket(beta).upper

    def second_moment(self):
        return self.abs_moment(2.0)


# --------------------------------------------------------------------------
# continuous shifted Pareto (non-lattice)


class ShiftedPareto(IncrementDistribution):
    """Non-lattice law ``X = c V - c/(alpha_prime - 1)``.

    No closed-form truncated MGF is offered; sampling the walk goes through
    the lattice coupling in :mod:`exactq.lattice`.
    """

    def __init__(self, alpha_prime: float, c: float):
        if alpha_prime <= 1:
            raise ValueError("alpha_prime must exceed 1 (finite mean)")
        self.alpha_prime = float(alpha_prime)
        self.c = float(c)
        self.offset = self.c / (self.alpha_prime - 1.0)
        self.lattice_span = None

    def __repr__(self):
        return f"ShiftedPareto(alpha_prime={self.alpha_prime}, c={self.c})"

    @property
    def moment_limit(self):
        return self.alpha_prime

    @property
    def support_min(self):
        return -self.offset

    def _v_of(self, x):
        return (np.asarray(x, dtype=float) + self.offset) / self.c

    def _x_of(self, v):
        return self.c * v - self.offset

    def tail_prob(self, t):
        return pareto_tail(self._v_of(t), self.alpha_prime)

    def _from_w(self, w):
        return self._x_of(w ** (-1.0 / self.alpha_prime) - 1.0)

    def sample(self, rng, size=None):
        return self._from_w(1.0 - rng.random(size))

    def sample_above(self, t, rng, size=None):
        s0 = self.tail_prob(t)
        if s0 <= 0:
            raise ValueError(f"P(X > {t}) = 0")
        x = self._from_w((1.0 - rng.random(size)) * s0)
        return np.maximum(x, np.nextafter(t, np.inf))

    def sample_at_most(self, t, rng, size=None):
        s1 = self.tail_prob(t)
        if s1 >= 1:
            raise ValueError(f"P(X <= {t}) = 0")
        x = self._from_w(1.0 - rng.random(size) * (1.0 - s1))
        return np.clip(x, self.support_min, t)

    def sample_in_cell(self, lo, hi, rng, size=None):
        """Draw X given lo <= X < hi by inverse CDF inside the cell."""
        s_lo = self.tail_prob(np.nextafter(lo, -np.inf)) if lo > self.support_min else 1.0
        s_hi = self.tail_prob(np.nextafter(hi, -np.inf))
        if s_lo <= s_hi:
            raise ValueError(f"P({lo} <= X < {hi}) = 0")
        u = rng.random(size)
        x = self._from_w(s_lo - u * (s_lo - s_hi))
        return np.clip(x, lo, np.nextafter(hi, -np.inf))

    def truncated_mgf(self, theta, cutoff):
        raise TypeError(
            "no exact truncated MGF for a non-lattice law; "
            "use exactq.lattice.build_coupling to simulate through a lattice walk"
        )

    def _moment(self, f, beta):
        ap = self.alpha_prime
        if beta >= ap:
            return math.inf

        def g(u):
            r = u ** (1.0 / ap)
            return float(f(np.array(self.c * (1.0 - r) - self.offset * r)))

        val, _ = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(-beta / ap, 0.0), limit=200)
        return val

    def abs_moment(self, beta):
        return self._moment(lambda x: np.abs(x) ** beta, beta)

    def positive_moment(self, beta):
        return self._moment(lambda x: np.maximum(x, 0.0) ** beta, beta)

    def second_moment(self):
        ap, c = self.alpha_prime, self.c
        if ap <= 2:
            return math.inf
        return c * c * ap / ((ap - 1.0) ** 2 * (ap - 2.0))
