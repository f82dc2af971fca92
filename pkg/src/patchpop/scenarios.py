"""Source-sink scenarios: dispersal perturbation and the two-sink design.

Two constructive studies of how dispersal shapes the net reproductive rate:

  - first-order perturbation of the rate under weak dispersal eps * B around
    isolated patches, with the exact rate recomputed on an eps ladder to
    certify the quadratic remainder;
  - a two-patch design where each isolated patch is exactly marginal (unit
    reproductive rate) yet weak symmetric dispersal makes the coupled system
    supercritical, with a certified eps interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateEigenvalueError, DesignError, PreconditionError
from .grids import (
    bisect,
    cumulative_trapezoid,
    product_trapezoid,
    resolve_age_step,
    sided_rate_values,
)
from .model import (
    DispersalMatrix,
    LogisticMortality,
    ModelSpec,
    omega_constants,
)
from .rates import Constant, Window
from .spectral import assemble_R0


@dataclass(frozen=True)
class PerturbationResult:
    """First-order prediction of the rate under dispersal eps * B."""

    sigma_isolated: np.ndarray
    correction: float
    eps_ladder: tuple[float, ...]
    sigma_exact: np.ndarray
    sigma_predicted: np.ndarray

    def remainder(self) -> np.ndarray:
        return np.abs(self.sigma_exact - self.sigma_predicted)

    def remainder_ratios(self) -> np.ndarray:
        """Remainder over eps**2; bounded ratios certify the quadratic order."""
        eps = np.asarray(self.eps_ladder)
        return self.remainder() / eps**2

    def loglog_slopes(self) -> np.ndarray:
        eps = np.asarray(self.eps_ladder)
        r = self.remainder()
        return np.diff(np.log(r)) / np.diff(np.log(eps))


def _isolated_sigmas(model: ModelSpec, step: Optional[float]) -> np.ndarray:
    """Per-patch reproductive rates with dispersal removed."""
    h = resolve_age_step(model, step if step is not None else model.fine_age_step())
    n_hi = int(round(model.fertility_hi / h))
    if n_hi * h < model.fertility_hi - 1e-12:
        n_hi += 1
    ages = np.arange(n_hi + 1) * h
    out = np.empty(model.n_patches)
    for k in range(model.n_patches):
        mu = np.broadcast_to(
            np.asarray(model.mortality[k].baseline(ages, 0.0), float), ages.shape
        )
        survival = np.exp(-cumulative_trapezoid(mu, h))
        left, right = sided_rate_values(model.birth[k], ages)
        out[k] = product_trapezoid(left, right, survival, h)
    return out


def with_dispersal(model: ModelSpec, dispersal: DispersalMatrix) -> ModelSpec:
    """The same model with a different dispersal matrix."""
    return ModelSpec(
        n_patches=model.n_patches,
        lifespan=model.lifespan,
        birth=model.birth,
        mortality=model.mortality,
        dispersal=dispersal,
        initial=model.initial,
        fertility_lo=model.fertility_lo,
        fertility_hi=model.fertility_hi,
    )


def perturbed_sigma(
    model_isolated: ModelSpec,
    pattern: DispersalMatrix,
    eps_ladder=(0.02, 0.01, 0.005),
    step: Optional[float] = None,
) -> PerturbationResult:
    """First-order rate correction under dispersal eps * pattern.

    The isolated rates must have a strictly dominant source patch (index 0).
    The correction integrates the source's birth rate and survival against
    the accumulated self-exposure of the perturbation pattern, so the
    remainder against the exact rate is quadratic in eps.
    """
    if model_isolated.is_time_dependent:
        raise PreconditionError("perturbation analysis needs a constant environment")
    if not model_isolated.dispersal.is_zero:
        raise PreconditionError("baseline model must have zero dispersal")
    sigmas = _isolated_sigmas(model_isolated, step)
    order = np.argsort(sigmas)[::-1]
    if order[0] != 0:
        raise PreconditionError("patch 0 must carry the dominant isolated rate")
    if len(sigmas) > 1 and sigmas[0] - sigmas[order[1]] < 1e-9:
        raise DegenerateEigenvalueError(
            "isolated dominant rate is not simple; the first-order formula is invalid"
        )
    h = resolve_age_step(model_isolated,
                         step if step is not None else model_isolated.fine_age_step())
    n_hi = int(round(model_isolated.fertility_hi / h))
    ages = np.arange(n_hi + 1) * h
    mu0 = np.broadcast_to(
        np.asarray(model_isolated.mortality[0].baseline(ages, 0.0), float), ages.shape
    )
    survival = np.exp(-cumulative_trapezoid(mu0, h))
    b00 = np.broadcast_to(
        np.asarray(pattern.entries[0][0](ages, 0.0), float), ages.shape
    )
    exposure = cumulative_trapezoid(b00, h)  # accumulated self-exposure to age a
    left, right = sided_rate_values(model_isolated.birth[0], ages)
    correction = product_trapezoid(left, right, survival * exposure, h)
    exact = []
    for eps in eps_ladder:
        coupled = with_dispersal(model_isolated, pattern.scaled(float(eps)))
        exact.append(assemble_R0(coupled, step).sigma)
    eps_arr = np.asarray(eps_ladder, dtype=float)
    predicted = sigmas[0] + eps_arr * correction
    return PerturbationResult(sigmas, correction, tuple(eps_ladder),
                              np.asarray(exact), predicted)


# ---------------------------------------------------------------------------
# two sinks without a source
# ---------------------------------------------------------------------------

def _phi_series(z):
    """(exp(z) - 1 - z) / z**2, stable near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    exact = (np.expm1(safe) - safe) / safe**2
    series = 0.5 + z / 6.0 + z**2 / 24.0
    out = np.where(small, series, exact)
    return float(out) if out.shape == () else out


def growth_gap_scale(z):
    """z * phi(z): increasing from 0 to infinity for z > 0."""
    return z * _phi_series(z)


def decay_gap_scale(z):
    """z * phi(-z): increasing from 0 to 1 for z > 0."""
    return z * _phi_series(-z)


@dataclass(frozen=True)
class TwoSinkDesign:
    """Two marginal sinks that weak symmetric dispersal makes supercritical."""

    mu1: float
    mu2: float
    rho: np.ndarray  # test direction (1, rho2)
    c1: float
    d1: float
    c2: float
    d2: float
    c_star: float
    birth_levels: tuple[float, float]
    lifespan: float
    first_order_matrix: np.ndarray

    def model(self, eps: float, carrying: float = 1.0) -> ModelSpec:
        """Coupled two-patch model with dispersal eps * [[-1, 1], [1, -1]]."""
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        pattern = DispersalMatrix.from_array(
            [[-1.0, 1.0], [1.0, -1.0]], column_sum_nonpositive=True
        ).scaled(eps)
        v1, v2 = self.birth_levels
        return ModelSpec(
            n_patches=2,
            lifespan=self.lifespan,
            birth=(Window(self.c1, self.d1, v1), Window(self.c2, self.d2, v2)),
            mortality=(
                LogisticMortality(Constant(self.mu1), Constant(carrying)),
                LogisticMortality(Constant(self.mu2), Constant(carrying)),
            ),
            dispersal=pattern,
            initial=(Window(self.c1 / 2, self.c1, 0.5), Window(self.c1 / 2, self.c1, 0.5)),
            fertility_lo=min(self.c1, self.c2),
            fertility_hi=max(self.d1, self.d2),
        )


def two_sink_design(
    mu1: float,
    mu2: float,
    rho2: float,
    d1_factor: float = 1.25,
    c2_factor: float = 0.5,
    lifespan: Optional[float] = None,
) -> TwoSinkDesign:
    """Design two marginal sinks whose weak coupling is supercritical.

    Patch 1 has the higher death rate and a late fertility window starting at
    the root c1 of (1/rho2) - 1 = c1 (mu1-mu2) phi((mu1-mu2) c1); patch 2 has
    the lower death rate and an early window ending at the root d2 of
    1 - rho2 = d2 (mu1-mu2) phi((mu2-mu1) d2). Birth levels are normalized so
    each isolated rate is exactly one, and the first-order coupling matrix
    applied to (1, rho2) is verified componentwise positive.
    """
    if not (mu1 > mu2 > 0):
        raise DesignError("need mu1 > mu2 > 0")
    if not (0 < rho2 < 0.5):
        raise DesignError("need 0 < rho2 < 1/2")
    dm = mu1 - mu2
    z_star = bisect(lambda z: growth_gap_scale(z) - 1.0, 1e-9, 60.0, tol=1e-13)
    c_star = z_star / dm
    target1 = 1.0 / rho2 - 1.0
    z1 = bisect(lambda z: growth_gap_scale(z) - target1, 1e-9, 200.0, tol=1e-13)
    target2 = 1.0 - rho2
    # decay_gap_scale tends to 1 from below, so the bracket may need widening
    hi = 10.0
    while decay_gap_scale(hi) <= target2:
        hi *= 2.0
        if hi > 1e6:
            raise DesignError("d2 root escapes to infinity; pick a larger rho2")
    z2 = bisect(lambda z: decay_gap_scale(z) - target2, 1e-9, hi, tol=1e-13)
    # snap the window edges to a dyadic grid so later quadrature grids hold
    # them exactly; rounding c1 up and d2 down only shrinks the windows, which
    # preserves the positivity requirements they were solved for
    grain = 1.0 / 64.0
    c1 = math.ceil(z1 / dm / grain) * grain
    d2 = math.floor(z2 / dm / grain) * grain
    d1 = math.ceil(c1 * d1_factor / grain) * grain
    c2 = math.floor(d2 * c2_factor / grain) * grain
    if c2 <= 0 or d2 <= c2 or d1 <= c1:
        raise DesignError("degenerate fertility windows after rounding")
    b = lifespan if lifespan is not None else math.ceil(1.25 * max(d1, d2) / grain) * grain
    if b <= max(d1, d2):
        raise DesignError(f"lifespan {b} does not contain the fertility windows")

    # normalize each isolated rate to one: v * int_c^d exp(-mu a) da = 1
    def level(mu, c, d):
        ages = np.linspace(c, d, 20001)
        return 1.0 / float(np.trapezoid(np.exp(-mu * ages), ages))

    v1 = level(mu1, c1, d1)
    v2 = level(mu2, c2, d2)
    if not c_star < c1:
        raise DesignError("late window must start beyond the crossover age")

    # first-order coupling matrix on the (1, rho2) direction
    def entries(mu_own, mu_other, c, d, v):
        ages = np.linspace(c, d, 20001)
        base = v * np.exp(-mu_own * ages)
        diag = -float(np.trapezoid(base * ages, ages))
        z = (mu_own - mu_other) * ages
        off = float(np.trapezoid(base * ages**2 * (mu_own - mu_other) * _phi_series(z), ages))
        # off-diagonal: contribution of the other patch through h_k's growth term,
        # plus the shared (rho_other - rho_own) * a piece folded in below
        return diag, off

    d11, g1 = entries(mu1, mu2, c1, d1, v1)
    d22, g2 = entries(mu2, mu1, c2, d2, v2)
    # h1(a, rho) = (rho2 - rho1) a + a^2 dm phi(dm a) rho2, so the matrix rows are
    # [d11 = -A1, A1 + g1; A2 + g2's sign pattern mirrored]
    a1 = -d11
    a2 = -d22
    p_mat = np.array([[-a1, a1 + g1], [a2 + g2, -a2]])
    rho = np.array([1.0, rho2])
    first_order = p_mat @ rho
    if not np.all(first_order > 0):
        raise DesignError(
            f"first-order coupling is not positive on (1, rho2): {first_order}"
        )
    return TwoSinkDesign(mu1, mu2, rho, c1, d1, c2, d2, c_star, (v1, v2), b, p_mat)


def certify_supercritical_interval(
    design: TwoSinkDesign,
    eps_hi: float = 0.5,
    grid: int = 12,
    step: Optional[float] = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Largest eps (up to eps_hi) with the coupled rate above one throughout.

    Bisects the first crossing of sigma(eps) = 1 if one exists below eps_hi,
    then re-verifies sigma > 1 on a grid over (0, eps_max].
    """
    def sigma_at(eps: float) -> float:
        return assemble_R0(design.model(eps), step).sigma

    if sigma_at(eps_hi) > 1.0:
        eps_max = eps_hi
    else:
        eps_max = bisect(lambda e: sigma_at(e) - 1.0, 1e-6, eps_hi, tol=1e-6)
        eps_max *= 0.999  # stay strictly inside the supercritical range
    eps_grid = eps_max * np.linspace(1.0 / grid, 1.0, grid)
    sig = np.array([sigma_at(e) for e in eps_grid])
    if not np.all(sig > 1.0):
        raise DesignError("certification grid found a subcritical point")
    return eps_max, eps_grid, sig
