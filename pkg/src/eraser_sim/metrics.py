"""Fringe counting, visibility, phase resolution and the CHSH parameter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


class FlatCurveError(ValueError):
    """Raised when a curve has no measurable fringe."""


@dataclass(frozen=True)
class CorrelationCurve:
    phase: np.ndarray
    values: np.ndarray
    std_errors: Optional[np.ndarray] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if phase.ndim != 1 or phase.shape != values.shape:
            raise ValueError("phase and values must be 1-D and the same length")
        if len(phase) < 2:
            raise ValueError("need at least two grid points")
        steps = np.diff(phase)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12) or steps[0] <= 0:
            raise ValueError("phase grid must be uniform and increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "values", values)
        floor = -1e-12 * float(np.max(np.abs(values)))
        if self.std_errors is not None:
            se = np.asarray(self.std_errors, dtype=float)
            if se.shape != values.shape or np.any(se < 0):
                raise ValueError("std_errors must match values and be non-negative")
            object.__setattr__(self, "std_errors", se)
            floor = floor - 3.0 * se
        if np.any(values < floor):
            raise ValueError("curve values must be non-negative (within 3 std errors)")

    @property
    def step(self) -> float:
        return float(self.phase[1] - self.phase[0])

    def one_period(self) -> np.ndarray:
        """Values over [start, start + 2pi), dropping a duplicated endpoint."""
        span = self.phase[-1] - self.phase[0]
        if math.isclose(span, TWO_PI, rel_tol=1e-9):
            return self.values[:-1]
        if math.isclose(span + self.step, TWO_PI, rel_tol=1e-9):
            return self.values
        raise ValueError("curve must span exactly one 2*pi period")


def _check_not_flat(v: np.ndarray):
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 0.05 * abs(float(v.mean())) or hi == lo:
        raise FlatCurveError("no fringe: peak-to-trough below 5% of the mean")


def count_fringes(curve: CorrelationCurve) -> Optional[int]:
    """Fringe maxima per period above the half-range level; None for a flat curve.

    The grid is treated as periodic and each excursion above the half level
    counts as one maximum. Noisy curves (std errors present) are smoothed with
    a 3-point circular moving average, and an excursion must then clear a
    band of two smoothed standard errors around the level to count.
    """
    v = curve.one_period()
    band = 0.0
    if curve.std_errors is not None:
        v = (np.roll(v, 1) + v + np.roll(v, -1)) / 3.0
        band = 2.0 * float(np.median(curve.std_errors)) / math.sqrt(3.0)
    try:
        _check_not_flat(v)
    except FlatCurveError:
        return None
    span = float(v.max() - v.min())
    level = float(v.min()) + 0.5 * span
    band = min(band, 0.25 * span)
    high, low = v > level + band, v < level - band
    start = int(np.argmax(low))
    count, above = 0, False
    for i in range(len(v)):
        j = (start + i) % len(v)
        if not above and high[j]:
            count, above = count + 1, True
        elif above and low[j]:
            above = False
    return count


def visibility(curve: CorrelationCurve) -> float:
    v = curve.values
    lo, hi = float(v.min()), float(v.max())
    if hi + lo <= 0 or hi == lo:
        raise FlatCurveError("visibility undefined for a flat curve")
    return (hi - lo) / (hi + lo)


def phase_resolution(curves: Mapping[int, CorrelationCurve]) -> Dict[int, float]:
    """Fringe period 2pi / (fringe count) for each photon-number curve."""
    out = {}
    for n in (1, 2, 4):
        if n not in curves:
            raise KeyError(f"missing curve for N={n}")
    for n, curve in sorted(curves.items()):
        count = count_fringes(curve)
        if not count:
            raise FlatCurveError(f"N={n} curve has no fringe")
        res = TWO_PI / count
        if abs(res - TWO_PI / n) > curve.step:
            raise AssertionError(f"N={n}: resolution {res:.6g} is not 2pi/N")
        out[n] = res
    return out


class SQLPoint(NamedTuple):
    ratio: float  # FWHM(N) / FWHM(1)
    fwhm: float
    fringes: int


def _fwhm(values: np.ndarray, step: float) -> float:
    """Width of the (single) peak at half its height, by linear interpolation."""
    v = np.roll(values, len(values) // 2 - int(np.argmax(values)))
    peak = int(np.argmax(v))
    half = v[peak] / 2.0 + v.min() / 2.0

    def crossing(direction: int) -> float:
        i = peak
        while v[i + direction] >= half:
            i += direction
        j = i + direction
        return (i + (v[i] - half) / (v[i] - v[j]) * direction) * step

    return crossing(1) - crossing(-1)


def sql_reference(n: int, points: int = 20000) -> SQLPoint:
    """N-fold product of a plain (no-QWP) eraser fringe, brute-forced on a grid.

    The period stays 2pi; only the peak narrows, roughly as 1/sqrt(N).
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    phase = np.linspace(0.0, TWO_PI, points, endpoint=False)
    base = (1.0 - np.cos(phase)) / 2.0
    curve = CorrelationCurve(phase, base ** n)
    width = _fwhm(curve.values, curve.step)
    ref = _fwhm(base, curve.step)
    return SQLPoint(width / ref, width, count_fringes(curve))


# CHSH -----------------------------------------------------------------------

def _rate(rates: Mapping, a: float, b: float):
    for (ka, kb), r in rates.items():
        if _same_angle(ka, a) and _same_angle(kb, b):
            return r
    raise KeyError(f"no rate for setting ({a:.6g}, {b:.6g})")


def _same_angle(x: float, y: float) -> bool:
    # polarizer settings are defined modulo pi
    d = (x - y) % math.pi
    return min(d, math.pi - d) < 1e-9


def _value(r) -> float:
    return float(getattr(r, "value", r))


def _error(r) -> float:
    return float(getattr(r, "std_error", 0.0))


def chsh_settings(a: float, a2: float, b: float, b2: float) -> list:
    """The 16 (alice, bob) polarizer pairs needed for one S value."""
    alice = [a, a + math.pi / 2, a2, a2 + math.pi / 2]
    bob = [b, b + math.pi / 2, b2, b2 + math.pi / 2]
    return [(x, y) for x in alice for y in bob]


def correlator(rates: Mapping, a: float, b: float) -> Tuple[float, float]:
    """E(a, b) and its propagated standard error."""
    ap, bp = a + math.pi / 2, b + math.pi / 2
    plus = [_rate(rates, a, b), _rate(rates, ap, bp)]
    minus = [_rate(rates, a, bp), _rate(rates, ap, b)]
    sp = sum(map(_value, plus))
    sm = sum(map(_value, minus))
    total = sp + sm
    if total == 0:
        raise ZeroDivisionError(f"rates at ({a:.6g}, {b:.6g}) sum to zero")
    e = (sp - sm) / total
    # dE/dR = 2*sm/total^2 for the plus group, -2*sp/total^2 for the minus group
    var = sum((2 * sm / total ** 2 * _error(r)) ** 2 for r in plus)
    var += sum((2 * sp / total ** 2 * _error(r)) ** 2 for r in minus)
    return e, math.sqrt(var)


def chsh(rates: Mapping, a: float = 0.0, a2: float = math.pi / 4, b: float = math.pi / 8, b2: float = 3 * math.pi / 8) -> Tuple[float, float]:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| and its standard error.

    ``rates`` maps (alice angle, bob angle) in radians to a number or to an
    object with ``value`` and ``std_error``.
    """
    terms = [correlator(rates, a, b), correlator(rates, a, b2), correlator(rates, a2, b), correlator(rates, a2, b2)]
    signs = (1, -1, 1, 1)
    s = sum(sg * e for sg, (e, _) in zip(signs, terms))
    err = math.sqrt(sum(se ** 2 for _, se in terms))
    return abs(s), err


def chsh_s(rates: Mapping, a: float = 0.0, a2: float = math.pi / 4, b: float = math.pi / 8, b2: float = 3 * math.pi / 8) -> float:
    return chsh(rates, a, a2, b, b2)[0]
