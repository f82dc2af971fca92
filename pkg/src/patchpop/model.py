"""Model data types and the structure-condition validator.

A :class:`ModelSpec` bundles everything the solvers need for a population on
``n_patches`` dispersal-coupled patches: per-patch birth rates and mortality
laws, the dispersal matrix, the maximal lifespan, the fertility window, and
the initial age distribution. All types are immutable after construction and
every operation here is pure.

Validation is sample-based on a configurable grid: the rate family is
piecewise linear, so checking signs and monotonicity at knots and grid points
is exact for this family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidModelError, StructuralModelError
from .grids import cumulative_trapezoid
from .rates import Constant, RateFunction, as_rate

_V_LADDER = np.array([0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0])


# ---------------------------------------------------------------------------
# mortality laws
# ---------------------------------------------------------------------------

class MortalityLaw:
    """Density-dependent mortality M(v, a, t), nondecreasing in v >= 0.

    Every law exposes the density-free baseline ``baseline(a, t) = M(0, a, t)``
    and the induced superlinearity data ``(p, gamma)`` with
    ``M(v) - M(0) >= p(a, t) * v**gamma`` (equality for the built-in laws).
    """

    gamma: float

    def rate(self, v, a, t=0.0):
        raise NotImplementedError

    def baseline(self, a, t=0.0):
        raise NotImplementedError

    def induced_p(self, a, t=0.0):
        raise NotImplementedError

    @property
    def is_time_dependent(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class LogisticMortality(MortalityLaw):
    """M(v, a, t) = mu(a, t) * (1 + v / carrying(a, t)); gamma = 1."""

    mu: RateFunction
    carrying: RateFunction

    gamma = 1.0

    def rate(self, v, a, t=0.0):
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        return self.mu(a, t) * (1.0 + v / self.carrying(a, t))

    def baseline(self, a, t=0.0):
        return self.mu(a, t)

    def induced_p(self, a, t=0.0):
        return self.mu(a, t) / self.carrying(a, t)

    @property
    def is_time_dependent(self):
        return self.mu.is_time_dependent or self.carrying.is_time_dependent


@dataclass(frozen=True)
class PowerLawMortality(MortalityLaw):
    """M(v, a, t) = mu(a, t) + coefficient(a, t) * v**gamma, gamma > 0."""

    mu: RateFunction
    coefficient: RateFunction
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidModelError("power-law mortality requires gamma > 0")

    def rate(self, v, a, t=0.0):
        v = np.maximum(np.asarray(v, dtype=float), 0.0)
        return self.mu(a, t) + self.coefficient(a, t) * v**self.gamma

    def baseline(self, a, t=0.0):
        return self.mu(a, t)

    def induced_p(self, a, t=0.0):
        return self.coefficient(a, t)

    @property
    def is_time_dependent(self):
        return self.mu.is_time_dependent or self.coefficient.is_time_dependent


# ---------------------------------------------------------------------------
# dispersal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispersalMatrix:
    """Migration rates D[k][j]: flow into patch k from patch j.

    Metzler structure (nonnegative off-diagonals) is a validated condition,
    not a constructor constraint. ``column_sum_nonpositive`` declares the
    no-reproduction-during-migration property (column sums <= 0) that the
    spectral estimates require; :meth:`verify_column_sums` checks it by
    sampling.
    """

    entries: tuple[tuple[RateFunction, ...], ...]
    column_sum_nonpositive: bool = False

    def __post_init__(self):
        rows = tuple(tuple(as_rate(e) for e in row) for row in self.entries)
        n = len(rows)
        if any(len(row) != n for row in rows):
            raise StructuralModelError("dispersal matrix must be square")
        object.__setattr__(self, "entries", rows)

    @property
    def n(self) -> int:
        return len(self.entries)

    @classmethod
    def zero(cls, n: int) -> "DispersalMatrix":
        z = Constant(0.0)
        return cls(tuple(tuple(z for _ in range(n)) for _ in range(n)),
                   column_sum_nonpositive=True)

    @classmethod
    def from_array(cls, arr, column_sum_nonpositive: bool = False) -> "DispersalMatrix":
        arr = np.asarray(arr, dtype=float)
        return cls(
            tuple(tuple(Constant(float(x)) for x in row) for row in arr),
            column_sum_nonpositive=column_sum_nonpositive,
        )

    def scaled(self, c: float) -> "DispersalMatrix":
        return DispersalMatrix(
            tuple(tuple(e.scaled(c) for e in row) for row in self.entries),
            column_sum_nonpositive=self.column_sum_nonpositive,
        )

    def at(self, a, t=0.0) -> np.ndarray:
        """Matrix evaluated at scalar (a, t); shape (n, n)."""
        return np.array([[float(e(a, t)) for e in row] for row in self.entries])

    def batch(self, a, t) -> np.ndarray:
        """Matrix broadcast over vector age/time arguments; shape (L, n, n)."""
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(a.shape, t.shape)
        out = np.empty(shape + (self.n, self.n))
        for k, row in enumerate(self.entries):
            for j, e in enumerate(row):
                out[..., k, j] = e(a, t)
        return out

    @property
    def is_time_dependent(self) -> bool:
        return any(e.is_time_dependent for row in self.entries for e in row)

    @property
    def is_zero(self) -> bool:
        return all(
            isinstance(e, Constant) and e.value == 0.0
            for row in self.entries
            for e in row
        )

    def sup_abs(self, lo: float, hi: float) -> float:
        return max(e.sup_abs(lo, hi) for row in self.entries for e in row)

    def verify_column_sums(self, ages, times, tol: float = 1e-12):
        """Return the worst (value, a, t, j) of any positive column sum."""
        worst = None
        for t in np.atleast_1d(times):
            for a in np.atleast_1d(ages):
                sums = self.at(a, t).sum(axis=0)
                j = int(np.argmax(sums))
                if worst is None or sums[j] > worst[0]:
                    worst = (float(sums[j]), float(a), float(t), j)
        ok = worst is None or worst[0] <= tol
        return ok, worst


def accessibility(dispersal: DispersalMatrix, age: float, t: float = 0.0) -> list[int]:
    """Patches k from which every other patch is reachable in the sign digraph.

    The digraph of D(age, t) has an arc k -> j whenever D[k][j] > 0 (flow into
    k from j); patch k is accessible when migration can reach k from every
    other patch through such arcs.
    """
    n = dispersal.n
    mat = dispersal.at(age, t)
    adj = [
        [j for j in range(n) if j != k and mat[k, j] > 0.0] for k in range(n)
    ]
    out = []
    for k in range(n):
        seen = {k}
        stack = [k]
        while stack:
            i = stack.pop()
            for j in adj[i]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) == n:
            out.append(k)
    return out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Full multi-patch model data.

    ``fertility_lo``/``fertility_hi`` bound the support of every birth rate;
    ``lifespan`` is the constant maximal age b. Per-patch sequences are
    indexed 0..n_patches-1.
    """

    n_patches: int
    lifespan: float
    birth: tuple[RateFunction, ...]
    mortality: tuple[MortalityLaw, ...]
    dispersal: DispersalMatrix
    initial: tuple[RateFunction, ...]
    fertility_lo: float
    fertility_hi: float

    def __post_init__(self):
        object.__setattr__(self, "birth", tuple(as_rate(b) for b in self.birth))
        object.__setattr__(self, "initial", tuple(as_rate(f) for f in self.initial))
        object.__setattr__(self, "mortality", tuple(self.mortality))
        n = self.n_patches
        if n < 1:
            raise StructuralModelError("need at least one patch")
        for name, seq in (("birth", self.birth), ("mortality", self.mortality),
                          ("initial", self.initial)):
            if len(seq) != n:
                raise StructuralModelError(f"{name} must have one entry per patch")
        if self.dispersal.n != n:
            raise StructuralModelError("dispersal matrix size must match patch count")
        if not self.lifespan > 0:
            raise StructuralModelError("lifespan must be positive")

    # -- derived structure data ------------------------------------------------

    @cached_property
    def gamma(self) -> float:
        gammas = {law.gamma for law in self.mortality}
        if len(gammas) != 1:
            raise InvalidModelError("all patches must share one mortality exponent")
        g = gammas.pop()
        if not g > 0:
            raise InvalidModelError("mortality exponent gamma must be positive")
        return float(g)

    @cached_property
    def period(self) -> Optional[float]:
        """Common modulation period, or None for a constant environment."""
        periods = set()
        for rf in self._all_rates():
            if rf.is_time_dependent:
                periods.add(rf.period)  # type: ignore[attr-defined]
        if not periods:
            return None
        t = max(periods)
        for p in periods:
            r = t / p
            if abs(r - round(r)) > 1e-9:
                raise InvalidModelError("modulation periods must share a common period")
        return t

    @property
    def is_time_dependent(self) -> bool:
        return self.period is not None

    def _all_rates(self):
        for rf in self.birth:
            yield rf
        for law in self.mortality:
            if isinstance(law, LogisticMortality):
                yield law.mu
                yield law.carrying
            elif isinstance(law, PowerLawMortality):
                yield law.mu
                yield law.coefficient
        for row in self.dispersal.entries:
            yield from row
        for rf in self.initial:
            yield rf

    def time_samples(self, density: int = 16) -> np.ndarray:
        if self.period is None:
            return np.array([0.0])
        n = max(8, int(density * self.period))
        return np.linspace(0.0, self.period, n, endpoint=False)

    @cached_property
    def dispersal_norm(self) -> float:
        """Sup over ages and times of the largest absolute matrix entry."""
        return self.dispersal.sup_abs(0.0, self.lifespan)

    @cached_property
    def birth_sup(self) -> float:
        return max(b.sup_abs(0.0, self.lifespan) for b in self.birth)

    @cached_property
    def mu_infinity(self) -> float:
        """Lower bound for the induced superlinearity coefficient p(a, t)."""
        ages = np.linspace(0.0, self.lifespan, 1025)
        times = self.time_samples()
        worst = float("inf")
        for law in self.mortality:
            for t in times:
                vals = np.asarray(law.induced_p(ages, t), dtype=float)
                worst = min(worst, float(vals.min()))
        return worst

    def default_age_step(self) -> float:
        """Coarse default: resolves the fertility window onset and tail gap."""
        return min(self.fertility_lo, self.lifespan - self.fertility_hi) / 32.0

    def fine_age_step(self) -> float:
        """Default for spectral/steady quadrature (tighter tolerances)."""
        return self.default_age_step() / 16.0

    def initial_values(self, ages) -> np.ndarray:
        """Initial densities f_k(a), truncated to zero at and beyond b."""
        ages = np.asarray(ages, dtype=float)
        out = np.stack([np.asarray(f(ages), dtype=float) for f in self.initial], axis=-1)
        out = np.where((ages >= self.lifespan)[..., None], 0.0, out)
        return out

    def baseline_mortality(self, ages, t=0.0) -> np.ndarray:
        ages = np.asarray(ages, dtype=float)
        return np.stack(
            [np.asarray(law.baseline(ages, t), dtype=float) for law in self.mortality],
            axis=-1,
        )


def omega_constants(model: ModelSpec) -> tuple[float, float]:
    """Universal majorant scale and the induced birth-integral bound.

    omega1 = ((1 + N*||D||*b) / (gamma*mu_inf))**(1/gamma); omega2 multiplies
    it by ||m|| and the integral of a**(-1/gamma) over the fertility window.
    """
    g = model.gamma
    mu_inf = model.mu_infinity
    if mu_inf <= 0:
        raise InvalidModelError("mortality superlinearity must be bounded below: mu_inf > 0")
    w1 = ((1.0 + model.n_patches * model.dispersal_norm * model.lifespan) / (g * mu_inf)) ** (1.0 / g)
    ages = np.linspace(model.fertility_lo, model.fertility_hi, 8193)
    integral = float(np.trapezoid(ages ** (-1.0 / g), ages))
    w2 = w1 * model.birth_sup * integral
    return w1, w2


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    name: str
    passed: bool
    detail: str
    witness: Optional[dict] = None


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[ConditionReport, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> ConditionReport:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def validate(model: ModelSpec, sample_density: int = 64) -> ValidationReport:
    """Check the six structure conditions by sampling; one entry per condition.

    ``sample_density`` is the number of sample points per unit of age/time
    (>= 16). Structural defects of the rate functions themselves raise at
    construction, before this runs.
    """
    if sample_density < 16:
        raise ValueError("sample_density must be at least 16")
    b = model.lifespan
    ages = np.linspace(0.0, b, int(sample_density * b) + 1)
    times = model.time_samples(max(16, sample_density // 4))
    entries = []

    # lifespan structure: constant maximal age, trivially Lipschitz
    h1_ok = b > 0
    entries.append(ConditionReport(
        "H1", h1_ok,
        f"constant lifespan b = {b} (b1 = b); boundary slope condition holds trivially",
    ))

    # mortality shape: nondecreasing in density, superlinear increment
    h2_ok, h2_wit = True, None
    mu_inf = model.mu_infinity
    try:
        gamma = model.gamma
    except InvalidModelError as err:
        entries.append(ConditionReport("H2", False, str(err)))
        gamma = None
        h2_ok = False
    if gamma is not None:
        if mu_inf <= 0:
            h2_ok = False
            h2_wit = {"mu_inf": mu_inf}
            detail = f"induced p(a) is not bounded below by a positive constant (mu_inf = {mu_inf:.3g})"
        else:
            detail = f"gamma = {gamma}, mu_inf = {mu_inf:.6g}"
            sub_ages = ages[:: max(1, len(ages) // 64)]
            for k, law in enumerate(model.mortality):
                for t in times[: max(1, len(times))]:
                    vals = np.stack(
                        [np.asarray(law.rate(v, sub_ages, t), dtype=float) for v in _V_LADDER]
                    )
                    if np.any(np.diff(vals, axis=0) < -1e-12):
                        h2_ok = False
                        h2_wit = {"patch": k, "t": float(t)}
                        detail = f"mortality of patch {k} decreases in density at t = {t:.3g}"
                        break
                    base = vals[0]
                    p = np.asarray(law.induced_p(sub_ages, t), dtype=float)
                    for v, row in zip(_V_LADDER[1:], vals[1:]):
                        if np.any(row - base < p * v**gamma - 1e-9 * (1 + np.abs(row))):
                            h2_ok = False
                            h2_wit = {"patch": k, "t": float(t), "v": float(v)}
                            detail = f"superlinear increment fails on patch {k}"
                            break
                    if not h2_ok:
                        break
                if not h2_ok:
                    break
        entries.append(ConditionReport("H2", h2_ok, detail, h2_wit))

    # dispersal: bounded entries with nonnegative off-diagonals
    h3_ok, h3_wit = True, None
    detail = f"Metzler structure holds; ||D|| = {model.dispersal_norm:.6g}"
    for k in range(model.n_patches):
        for j in range(model.n_patches):
            if j == k:
                continue
            rf = model.dispersal.entries[k][j]
            knots = [a for a in rf.age_knots() if 0 <= a <= b]
            probe = np.unique(np.concatenate([ages, np.asarray(knots)])) if knots else ages
            for t in times:
                vals = np.asarray(rf(probe, t), dtype=float)
                if np.any(vals < -1e-12):
                    i = int(np.argmin(vals))
                    h3_ok = False
                    h3_wit = {"k": k, "j": j, "age": float(probe[i]), "t": float(t),
                              "value": float(vals[i])}
                    detail = (f"off-diagonal dispersal D[{k}][{j}] is negative "
                              f"at age {probe[i]:.4g}")
                    break
            if not h3_ok:
                break
        if not h3_ok:
            break
    entries.append(ConditionReport("H3", h3_ok, detail, h3_wit))

    # fertility window: 0 < a_m < A_m < b and supports inside it
    h4_ok, h4_wit = True, None
    if not (0 < model.fertility_lo < model.fertility_hi < b):
        h4_ok = False
        detail = (f"need 0 < a_m < A_m < b, got a_m = {model.fertility_lo}, "
                  f"A_m = {model.fertility_hi}, b = {b}")
    else:
        detail = (f"fertility window [{model.fertility_lo}, {model.fertility_hi}] "
                  f"inside (0, {b}); ||m|| = {model.birth_sup:.6g}")
        for k, m in enumerate(model.birth):
            lo, hi = m.support()
            if hi > lo and (lo < model.fertility_lo - 1e-12 or hi > model.fertility_hi + 1e-12):
                h4_ok = False
                h4_wit = {"patch": k, "support": (lo, hi)}
                detail = f"birth rate of patch {k} has support outside the fertility window"
                break
            for t in times:
                vals = np.asarray(m(ages, t), dtype=float)
                if np.any(vals < -1e-12):
                    h4_ok = False
                    h4_wit = {"patch": k, "t": float(t)}
                    detail = f"birth rate of patch {k} takes negative values"
                    break
            if not h4_ok:
                break
    entries.append(ConditionReport("H4", h4_ok, detail, h4_wit))

    # initial data: nonnegative, supported before the maximal age
    h5_ok, h5_wit = True, None
    detail = "initial densities nonnegative on [0, b); truncated to 0 at b"
    for k, f in enumerate(model.initial):
        vals = np.asarray(f(ages[ages < b]), dtype=float)
        if vals.size and np.any(vals < -1e-12):
            h5_ok = False
            h5_wit = {"patch": k}
            detail = f"initial density of patch {k} takes negative values"
            break
    entries.append(ConditionReport("H5", h5_ok, detail, h5_wit))

    # accessibility within the reproductive window
    betas = {}
    h6_ok = True
    for k in range(model.n_patches):
        sup_m = min(model.birth[k].support()[1], model.fertility_hi)
        beta = None
        if sup_m > 0:
            cand = ages[(ages > 0) & (ages < sup_m)]
            for a in cand:
                if all(k in accessibility(model.dispersal, a, t) for t in times):
                    beta = float(a)
                    break
        betas[k] = beta
        if beta is None:
            h6_ok = False
    detail = "; ".join(
        f"patch {k}: beta = {v:.6g}" if v is not None else f"patch {k}: not accessible"
        for k, v in betas.items()
    )
    entries.append(ConditionReport("H6", h6_ok, detail, {"beta": betas}))

    return ValidationReport(tuple(entries))
