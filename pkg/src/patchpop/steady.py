"""Stationary analysis: characteristic equation, maximal solution, dichotomy.

For a constant environment the stationary newborn levels solve the
characteristic fixed-point equation rho = Kbar(rho), where Kbar integrates
the birth rate against the stationary cohort profile launched from rho. The
maximal solution theta is reached by monotone descent from any starting
vector at or above omega2 * 1; the sign of sigma(R0) - 1 decides between
extinction (theta = 0) and permanency (theta strictly positive, globally
attracting).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .characteristics import MODE_PHI, Trajectory, integrate_batch, solve_phi
from .errors import ConsistencyError, ConvergenceError, PreconditionError
from .grids import resolve_age_step, trapezoid_weights
from .model import ModelSpec, omega_constants
from .renewal import _birth_windows, grid_index_round_up


class Classification(enum.Enum):
    EXTINCTION = "extinction"
    PERMANENCY = "permanency"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class SteadyState:
    """Stationary diagnosis of a constant-environment model."""

    theta: np.ndarray
    classification: Classification
    profile: Trajectory
    asymptotic_total: np.ndarray
    sigma: float


def _require_time_independent(model: ModelSpec):
    if model.is_time_dependent:
        raise PreconditionError("stationary analysis needs time-independent coefficients")


def apply_Kbar(model: ModelSpec, rho, step: Optional[float] = None) -> np.ndarray:
    """Birth integral of the stationary cohort profile started from rho."""
    _require_time_independent(model)
    rho = np.asarray(rho, dtype=float)
    h = resolve_age_step(model, step if step is not None else model.fine_age_step())
    windows = _birth_windows(model, h)
    i_hi = max((q for _, q in windows), default=0)
    if i_hi == 0:
        return np.zeros(model.n_patches)
    path, _ = integrate_batch(model, rho[None, :], 0.0, h, i_hi, MODE_PHI)
    values = path[:, 0, :]
    ages = np.arange(i_hi + 1) * h
    out = np.zeros(model.n_patches)
    for k in range(model.n_patches):
        p, q = windows[k]
        if q <= p:
            continue
        w = trapezoid_weights(p, q, h, i_hi)
        mvals = np.asarray(model.birth[k](ages, 0.0), dtype=float)
        out[k] = float(np.sum(w * mvals * values[:, k]))
    return out


def maximal_solution(
    model: ModelSpec,
    tol: float = 1e-8,
    max_iter: int = 2000,
    step: Optional[float] = None,
    start: Optional[np.ndarray] = None,
    verify_start_independence: bool = True,
) -> np.ndarray:
    """Largest stationary newborn vector, by monotone descent from above.

    Starts at omega2 * 1 (the smallest certified upper solution); iterates
    must never increase (asserted). With ``verify_start_independence`` a
    second descent from twice the start must agree within 10 * tol.
    """
    _require_time_independent(model)
    _, w2 = omega_constants(model)
    rho = np.full(model.n_patches, w2) if start is None else np.asarray(start, float)
    if np.any(rho < w2 - 1e-12):
        raise PreconditionError("start vector must dominate omega2 * 1")
    theta = _descend(model, rho, tol, max_iter, step)
    if verify_start_independence:
        other = _descend(model, 2.0 * rho, tol, max_iter, step)
        if np.any(np.abs(other - theta) > 10 * tol):
            raise ConsistencyError(
                "maximal solution depends on the starting vector beyond 10*tol"
            )
    return theta


def _descend(model, rho, tol, max_iter, step):
    rho = rho.copy()
    for _ in range(max_iter):
        new = apply_Kbar(model, rho, step)
        rise = float((new - rho).max())
        if rise > 1e-10 * (1.0 + float(np.abs(rho).max())):
            raise ConsistencyError(f"descent iterate increased by {rise:.3e}")
        if float(np.abs(new - rho).max()) <= tol:
            return new
        rho = new
    raise ConvergenceError(f"maximal-solution descent did not reach tol {tol}")


def check_upper_solution(model: ModelSpec, rho, tol: float = 1e-9,
                         step: Optional[float] = None) -> bool:
    """rho >= Kbar(rho) componentwise within tol."""
    rho = np.asarray(rho, dtype=float)
    return bool(np.all(rho >= apply_Kbar(model, rho, step) - tol))


def check_lower_solution(model: ModelSpec, rho, tol: float = 1e-9,
                         step: Optional[float] = None) -> bool:
    """rho <= Kbar(rho) componentwise within tol."""
    rho = np.asarray(rho, dtype=float)
    return bool(np.all(rho <= apply_Kbar(model, rho, step) + tol))


def classify(
    model: ModelSpec,
    tol: float = 1e-8,
    margin: float = 1e-6,
    step: Optional[float] = None,
) -> SteadyState:
    """Dichotomy diagnosis: extinction vs permanency by the reproductive rate.

    sigma within ``margin`` (relative) of one is reported as marginal rather
    than guessed; the marginal maximal solution is the limiting zero vector
    (descent at sigma = 1 converges sub-exponentially, so it is not
    iterated).
    """
    from .spectral import assemble_R0

    _require_time_independent(model)
    repro = assemble_R0(model, step)
    sigma = repro.sigma
    if sigma <= 1.0 - margin:
        cls = Classification.EXTINCTION
    elif sigma >= 1.0 + margin:
        cls = Classification.PERMANENCY
    else:
        cls = Classification.MARGINAL
    if cls is Classification.MARGINAL:
        theta = np.zeros(model.n_patches)
    else:
        theta = maximal_solution(model, tol=tol, step=step,
                                 verify_start_independence=False)
    norm = float(np.abs(theta).max())
    if cls is Classification.PERMANENCY and (norm <= tol or float(theta.min()) <= tol):
        raise ConsistencyError(
            f"sigma = {sigma:.6g} > 1 but the maximal solution is not strictly "
            f"positive (min component {float(theta.min()):.3e})"
        )
    if cls is Classification.EXTINCTION and norm > max(100 * tol, 1e-6):
        raise ConsistencyError(
            f"sigma = {sigma:.6g} <= 1 but the maximal solution has norm {norm:.3e}"
        )
    if cls is Classification.EXTINCTION:
        theta = np.zeros(model.n_patches)
    profile = solve_phi(model, theta, 0.0,
                        step=step if step is not None else model.fine_age_step())
    total = np.trapezoid(profile.states, dx=profile.step, axis=0)
    return SteadyState(theta, cls, profile, total, sigma)
