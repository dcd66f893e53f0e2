"""Hot loops with a numba path and a pure numpy fallback.

Set ``EXACTQ_DISABLE_NUMBA=1`` before import to force the numpy versions.
Both variants return identical results up to floating point summation
order (the numba loops add left to right, as ``np.cumsum`` does).

Level comparisons carry a relative tie guard: a position counts as above
``level`` only when it exceeds it by more than TIE * max(1, |level|), and as
below only when it is under by as much. Lattice walks often sit exactly on
m or -L m, and without the guard the summation rounding would decide ties.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("EXACTQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    HAVE_NUMBA = False


TIE = 1e-9


def above(level: float) -> float:
    """Threshold a position must exceed to count as strictly above ``level``."""
    return level + TIE * max(1.0, abs(level))


def below(level: float) -> float:
    """Threshold a position must fall under to count as strictly below ``level``."""
    return level - TIE * max(1.0, abs(level))


# --- numpy implementations -------------------------------------------------


def lindley_np(steps: np.ndarray, w0: float = 0.0) -> np.ndarray:
    """W_n = (W_{n-1} + steps_n)^+ from W_0 = w0, via the running minimum identity."""
    s = _running(steps, w0)
    low = np.minimum.accumulate(np.minimum(s, 0.0))
    return s - low


def _running(steps, start):
    # left-to-right accumulation starting at ``start``, as the compiled loops do
    return np.cumsum(np.concatenate(([float(start)], steps)))[1:]


def suffix_max_np(s: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(s[::-1])[::-1]


def first_below_np(steps: np.ndarray, start: float, level: float):
    """First index i with start + cumsum(steps)[i] < level, else -1; also the positions."""
    pos = _running(steps, start)
    hit = pos < below(level)
    i = int(np.argmax(hit)) if hit.size else 0
    if hit.size == 0 or not hit[i]:
        return -1, pos
    return i, pos[: i + 1]


def first_above_np(steps: np.ndarray, start: float, level: float):
    pos = _running(steps, start)
    hit = pos > above(level)
    i = int(np.argmax(hit)) if hit.size else 0
    if hit.size == 0 or not hit[i]:
        return -1, pos
    return i, pos[: i + 1]


def descend_np(steps: np.ndarray, start: float, floor: float, ceiling: float):
    """Scan until the position drops below ``floor``.

    Returns (stop index or -1, positions up to stop, hit_ceiling) where
    ``hit_ceiling`` reports any position > ceiling strictly before the stop.
    """
    i, pos = first_below_np(steps, start, floor)
    body = pos[:-1] if i >= 0 else pos
    return i, pos, bool(np.any(body > above(ceiling)))


# --- numba implementations -------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _lindley_nb(steps, w0):
        out = np.empty(steps.size)
        s = w0
        low = 0.0
        # mirror the numpy identity exactly: W = S - min(0, min S)
        for i in range(steps.size):
            s = s + steps[i]
            if s < low:
                low = s
            out[i] = s - low
        return out

    @njit(cache=True)
    def _suffix_max_nb(s):
        out = np.empty(s.size)
        best = -np.inf
        for i in range(s.size - 1, -1, -1):
            if s[i] > best:
                best = s[i]
            out[i] = best
        return out

    @njit(cache=True)
    def _first_below_nb(steps, start, level):
        pos = np.empty(steps.size)
        p = start
        for i in range(steps.size):
            p = p + steps[i]
            pos[i] = p
            if p < level:
                return i, pos[: i + 1]
        return -1, pos

    @njit(cache=True)
    def _first_above_nb(steps, start, level):
        pos = np.empty(steps.size)
        p = start
        for i in range(steps.size):
            p = p + steps[i]
            pos[i] = p
            if p > level:
                return i, pos[: i + 1]
        return -1, pos

    @njit(cache=True)
    def _descend_nb(steps, start, floor, ceiling):
        pos = np.empty(steps.size)
        p = start
        hit = False
        for i in range(steps.size):
            p = p + steps[i]
            pos[i] = p
            if p < floor:
                return i, pos[: i + 1], hit
            if p > ceiling:
                hit = True
        return -1, pos, hit

    def lindley(steps, w0=0.0):
        return _lindley_nb(np.ascontiguousarray(steps, dtype=np.float64), float(w0))

    def suffix_max(s):
        return _suffix_max_nb(np.ascontiguousarray(s, dtype=np.float64))

    def first_below(steps, start, level):
        i, pos = _first_below_nb(np.ascontiguousarray(steps, dtype=np.float64), float(start), below(float(level)))
        return int(i), pos

    def first_above(steps, start, level):
        i, pos = _first_above_nb(np.ascontiguousarray(steps, dtype=np.float64), float(start), above(float(level)))
        return int(i), pos

    def descend(steps, start, floor, ceiling):
        i, pos, hit = _descend_nb(np.ascontiguousarray(steps, dtype=np.float64),
                                  float(start), below(float(floor)), above(float(ceiling)))
        return int(i), pos, bool(hit)

else:
    lindley = lindley_np
    suffix_max = suffix_max_np
    first_below = first_below_np
    first_above = first_above_np
    descend = descend_np


BACKEND = "numba" if HAVE_NUMBA else "numpy"
