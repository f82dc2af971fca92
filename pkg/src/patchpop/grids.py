"""Shared age-grid, quadrature, and root-finding helpers.

All product integrals of a birth rate against a density use the composite
trapezoid rule restricted to the birth rate's own support window, so that the
jump of a fertility window at its edges never straddles a quadrature cell.
This assumes the window edges sit on grid nodes; :func:`resolve_age_step`
chooses steps that keep the standard model ages aligned.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConvergenceError

_ALIGN_TOL = 1e-9


def _is_multiple(x: float, h: float) -> bool:
    if x == 0:
        return True
    r = x / h
    return abs(r - round(r)) <= _ALIGN_TOL * max(1.0, abs(r))


def _dyadic_grain(xs, max_pow: int = 24) -> float | None:
    """Coarsest 2**-m grid containing every coordinate, if one exists."""
    for m in range(max_pow + 1):
        scale = 2.0**m
        if all(_is_multiple(x, 1.0 / scale) for x in xs):
            return 1.0 / scale
    return None


def resolve_age_step(model, target: float | None = None) -> float:
    """Pick an age step close to ``target`` keeping key ages on the grid.

    Key ages are the lifespan, the fertility window, and every birth-rate
    support edge and knot: the birth quadrature is only second-order accurate
    when those sit on grid nodes. When they share a dyadic grain the step is
    an integer fraction of it; otherwise the step just divides the lifespan
    and off-grid support edges degrade gracefully (cells partially covered by
    a support are dropped).
    """
    if target is None:
        target = model.default_age_step()
    if target <= 0:
        raise ValueError("age step must be positive")
    xs = [model.fertility_lo, model.fertility_hi, model.lifespan]
    for m in model.birth:
        lo, hi = m.support()
        if hi > lo:
            xs += [lo, min(hi, model.lifespan)]
        xs += [k for k in m.age_knots() if 0 < k <= model.lifespan]
    grain = _dyadic_grain([x for x in xs if x > 0])
    if grain is not None:
        k = max(1, math.ceil(grain / target - _ALIGN_TOL))
        return grain / k
    return model.lifespan / math.ceil(model.lifespan / target - _ALIGN_TOL)


def grid_index(x: float, h: float) -> int:
    """Index of a grid-aligned coordinate; raises if x is off the grid."""
    i = round(x / h)
    if abs(x - i * h) > _ALIGN_TOL * max(1.0, abs(x)):
        raise ValueError(f"{x} does not lie on a grid of step {h}")
    return int(i)


def window_indices(lo: float, hi: float, h: float, n_max: int) -> tuple[int, int]:
    """Grid-index window [i_lo, i_hi] covering the age interval [lo, hi].

    Off-grid edges are snapped inward (conservative: cells only partially
    covered are dropped). Degenerate intervals collapse to (0, 0).
    """
    if hi <= lo:
        return (0, 0)
    hi = min(hi, n_max * h)
    i_lo = round(lo / h)
    if abs(lo - i_lo * h) > _ALIGN_TOL * max(1.0, lo):
        i_lo = math.ceil(lo / h - _ALIGN_TOL)
    i_hi = round(hi / h)
    if abs(hi - i_hi * h) > _ALIGN_TOL * max(1.0, hi):
        i_hi = math.floor(hi / h + _ALIGN_TOL)
    return (max(0, i_lo), min(n_max, i_hi))


def support_window(rf, h: float, n_max: int) -> tuple[int, int]:
    """Grid-index window covering the support of a rate function."""
    lo, hi = rf.support()
    return window_indices(lo, hi, h, n_max)


def trapezoid_weights(i_lo: int, i_hi: int, h: float, n: int) -> np.ndarray:
    """Composite-trapezoid node weights on [i_lo*h, i_hi*h] over 0..n nodes."""
    w = np.zeros(n + 1)
    if i_hi > i_lo:
        w[i_lo : i_hi + 1] = h
        w[i_lo] = h / 2
        w[i_hi] = h / 2
    return w


def sided_rate_values(rate, ages: np.ndarray, t: float = 0.0):
    """Rate values just inside each grid cell (left and right one-sided).

    Rate functions may jump exactly at grid nodes (window edges); evaluating
    a hair inside each cell makes the composite trapezoid of rate * smooth
    products exact across those jumps.
    """
    h = float(ages[1] - ages[0])
    d = 1e-9 * h
    left = np.asarray(rate(ages[:-1] + d, t), dtype=float)
    right = np.asarray(rate(ages[1:] - d, t), dtype=float)
    return np.broadcast_to(left, ages[:-1].shape), np.broadcast_to(right, ages[1:].shape)


def product_trapezoid(left: np.ndarray, right: np.ndarray,
                      cont: np.ndarray, h: float) -> float:
    """Trapezoid of a (possibly node-jumping) rate times a continuous factor.

    ``left``/``right`` are the rate's one-sided cell-edge values from
    :func:`sided_rate_values`; ``cont`` holds the continuous factor at nodes.
    """
    return float(h / 2 * np.sum(left * cont[:-1] + right * cont[1:]))


def cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral on a uniform grid, starting at 0."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    np.cumsum((values[1:] + values[:-1]) * (h / 2), out=out[1:])
    return out


def bisect(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Root of a continuous function by plain bisection.

    ``f(lo)`` and ``f(hi)`` must have opposite signs.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError("bisection endpoints do not bracket a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or (hi - lo) / 2 <= tol:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    raise ConvergenceError(f"bisection did not reach tolerance {tol}")
