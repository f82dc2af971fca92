"""Rate functions of age and (optionally) time.

Every structural coefficient of the model (birth rate, baseline mortality,
carrying capacity, dispersal entries) is a :class:`RateFunction`: a small
closed family of representable functions that can be evaluated exactly at
arbitrary ages and times, broadcast over numpy arrays.

Variants:
  - ``Constant(value)``
  - ``Window(lo, hi, value)``  -- ``value`` on the closed interval, 0 outside
  - ``PiecewiseLinear(knots)`` -- clamped to the end values outside the knots
  - ``SeparableProduct(age_part, time_part)`` -- age profile times a periodic
    time modulation

Time modulation is a :class:`PeriodicModulation`: phase samples on one period
with linear wrap-around interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StructuralModelError

_INF = float("inf")


@dataclass(frozen=True)
class PeriodicModulation:
    """T-periodic nonnegative factor, linearly interpolated between samples.

    ``samples`` is a sequence of (phase, factor) pairs with strictly
    increasing phases in [0, T); interpolation wraps around the period.
    A single-sample list is the constant factor.
    """

    period: float
    samples: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.period > 0:
            raise StructuralModelError("modulation period must be positive")
        if not self.samples:
            raise StructuralModelError("modulation needs at least one sample")
        object.__setattr__(
            self, "samples", tuple((float(p), float(f)) for p, f in self.samples)
        )
        phases = [p for p, _ in self.samples]
        factors = [f for _, f in self.samples]
        if any(p < 0 or p >= self.period for p in phases):
            raise StructuralModelError("modulation phases must lie in [0, period)")
        if any(p2 <= p1 for p1, p2 in zip(phases, phases[1:])):
            raise StructuralModelError("modulation phases must be strictly increasing")
        if any(f < 0 for f in factors):
            raise StructuralModelError("modulation factors must be nonnegative")

    def factor(self, t):
        """Interpolated factor at time ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        phases = np.array([p for p, _ in self.samples])
        factors = np.array([f for _, f in self.samples])
        if len(phases) == 1:
            return np.broadcast_to(factors[0], t.shape).copy() if t.shape else float(factors[0])
        # pad with the wrapped-around first sample so np.interp closes the loop
        xp = np.concatenate([phases, [phases[0] + self.period]])
        fp = np.concatenate([factors, [factors[0]]])
        out = np.interp(np.mod(t, self.period), xp, fp, left=float("nan"), right=float("nan"))
        # phases need not start at 0: times before the first phase wrap backwards
        wrap = np.mod(t, self.period) < phases[0]
        if np.any(wrap):
            out = np.where(wrap, np.interp(np.mod(t, self.period) + self.period, xp, fp), out)
        return out if out.shape else float(out)

    @property
    def is_identity(self) -> bool:
        return all(f == 1.0 for _, f in self.samples)

    def max_factor(self) -> float:
        return max(f for _, f in self.samples)

    def min_factor(self) -> float:
        return min(f for _, f in self.samples)


class RateFunction:
    """Base class; subclasses implement ``__call__(a, t)`` with broadcasting."""

    def __call__(self, a, t=0.0):
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """Smallest closed age interval outside which the function vanishes.

        Returns (0, inf) when the function never vanishes identically.
        """
        raise NotImplementedError

    def age_knots(self) -> tuple[float, ...]:
        """Ages at which the age profile is not smooth (window edges, knots)."""
        return ()

    def sup_abs(self, lo: float, hi: float) -> float:
        """Exact sup of ``|f|`` over ages [lo, hi] and all times."""
        raise NotImplementedError

    def inf_on(self, lo: float, hi: float) -> float:
        """Exact inf of ``f`` over ages [lo, hi] and all times."""
        raise NotImplementedError

    @property
    def is_time_dependent(self) -> bool:
        return False

    def scaled(self, c: float) -> "RateFunction":
        """The same shape multiplied by the scalar ``c``."""
        raise NotImplementedError


def _age_profile_bounds(xs, vs, lo, hi):
    """Min/max of the clamped piecewise-linear profile (xs, vs) on [lo, hi]."""
    pts = [lo, hi] + [x for x in xs if lo < x < hi]
    vals = [float(np.interp(p, xs, vs)) for p in pts]
    return min(vals), max(vals)


@dataclass(frozen=True)
class Constant(RateFunction):
    value: float

    def __call__(self, a, t=0.0):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(a.shape, t.shape)
        if shape == ():
            return float(self.value)
        return np.full(shape, float(self.value))

    def support(self):
        return (0.0, _INF) if self.value != 0 else (0.0, 0.0)

    def sup_abs(self, lo, hi):
        return abs(self.value)

    def inf_on(self, lo, hi):
        return float(self.value)

    def scaled(self, c):
        return Constant(self.value * c)


@dataclass(frozen=True)
class Window(RateFunction):
    """``value`` on the closed age interval [lo, hi], zero elsewhere."""

    lo: float
    hi: float
    value: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise StructuralModelError("window requires 0 < lo < hi")

    def __call__(self, a, t=0.0):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        inside = (a >= self.lo) & (a <= self.hi)
        out = np.where(inside, float(self.value), 0.0)
        out = np.broadcast_to(out, np.broadcast_shapes(a.shape, t.shape))
        return float(out) if out.shape == () else out.copy()

    def support(self):
        return (self.lo, self.hi) if self.value != 0 else (0.0, 0.0)

    def age_knots(self):
        return (self.lo, self.hi)

    def sup_abs(self, lo, hi):
        return abs(self.value) if (hi >= self.lo and lo <= self.hi) else 0.0

    def inf_on(self, lo, hi):
        covered = lo >= self.lo and hi <= self.hi
        if covered:
            return float(self.value)
        return min(0.0, float(self.value)) if (hi >= self.lo and lo <= self.hi) else 0.0

    def scaled(self, c):
        return Window(self.lo, self.hi, self.value * c)


@dataclass(frozen=True)
class PiecewiseLinear(RateFunction):
    """Linear interpolation between (age, value) knots, clamped outside."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.knots) < 1:
            raise StructuralModelError("piecewise-linear rate needs at least one knot")
        object.__setattr__(
            self, "knots", tuple((float(a), float(v)) for a, v in self.knots)
        )
        xs = [a for a, _ in self.knots]
        if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])):
            raise StructuralModelError("knot ages must be strictly increasing")

    def _xs_vs(self):
        return (
            np.array([a for a, _ in self.knots]),
            np.array([v for _, v in self.knots]),
        )

    def __call__(self, a, t=0.0):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        xs, vs = self._xs_vs()
        out = np.interp(a, xs, vs)  # np.interp clamps to end values
        out = np.broadcast_to(out, np.broadcast_shapes(a.shape, t.shape))
        return float(out) if out.shape == () else out.copy()

    def support(self):
        xs, vs = self._xs_vs()
        if np.all(vs == 0):
            return (0.0, 0.0)
        lo = 0.0 if vs[0] != 0 else float(xs[np.nonzero(vs)[0][0] - 1])
        hi = _INF if vs[-1] != 0 else float(xs[np.nonzero(vs)[0][-1] + 1])
        return (lo, hi)

    def age_knots(self):
        return tuple(a for a, _ in self.knots)

    def sup_abs(self, lo, hi):
        xs, vs = self._xs_vs()
        mn, mx = _age_profile_bounds(xs, vs, lo, hi)
        return max(abs(mn), abs(mx))

    def inf_on(self, lo, hi):
        xs, vs = self._xs_vs()
        return _age_profile_bounds(xs, vs, lo, hi)[0]

    def scaled(self, c):
        return PiecewiseLinear(tuple((a, v * c) for a, v in self.knots))


@dataclass(frozen=True)
class SeparableProduct(RateFunction):
    """Age profile multiplied by a periodic time modulation."""

    age_part: RateFunction
    time_part: PeriodicModulation

    def __post_init__(self):
        if isinstance(self.age_part, SeparableProduct):
            raise StructuralModelError("nested separable products are not supported")

    def __call__(self, a, t=0.0):
        base = self.age_part(a, 0.0)
        return base * self.time_part.factor(t)

    def support(self):
        return self.age_part.support()

    def age_knots(self):
        return self.age_part.age_knots()

    def sup_abs(self, lo, hi):
        return self.age_part.sup_abs(lo, hi) * self.time_part.max_factor()

    def inf_on(self, lo, hi):
        base = self.age_part.inf_on(lo, hi)
        # factors are nonnegative, so the sign of the minimum follows the age part
        if base >= 0:
            return base * self.time_part.min_factor()
        return base * self.time_part.max_factor()

    @property
    def is_time_dependent(self):
        return not self.time_part.is_identity

    @property
    def period(self) -> float:
        return self.time_part.period

    def scaled(self, c):
        return SeparableProduct(self.age_part.scaled(c), self.time_part)


def as_rate(x) -> RateFunction:
    """Coerce a number into a Constant; pass rate functions through."""
    if isinstance(x, RateFunction):
        return x
    if isinstance(x, (int, float)):
        return Constant(float(x))
    raise StructuralModelError(f"cannot interpret {x!r} as a rate function")
