"""Net reproductive matrix, spectral radius, and two-sided estimates.

The net reproductive matrix maps a newborn distribution to its expected
lifetime offspring distribution across patches; its spectral radius is the
net reproductive rate deciding the extinction/permanency dichotomy. Columns
are assembled by integrating the linearized cohort flow from basis vectors,
so age-dependent coefficients need no matrix-exponential machinery.

The analytic sandwich for the rate and the a-priori bounds for the maximal
solution require the no-reproduction-during-migration property (nonpositive
dispersal column sums), declared on the dispersal matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .characteristics import MODE_LINEAR, integrate_batch
from .errors import PreconditionError, ReducibleMatrixError
from .grids import (
    bisect,
    cumulative_trapezoid,
    product_trapezoid,
    resolve_age_step,
    sided_rate_values,
    trapezoid_weights,
)
from .model import ModelSpec, omega_constants
from .renewal import _birth_windows

log = logging.getLogger(__name__)

_POWER_TOL = 1e-12
_POWER_MAX_ITER = 20000


@dataclass(frozen=True)
class ReproMatrix:
    """Net reproductive matrix with its Perron data."""

    matrix: np.ndarray
    sigma: float
    perron_vector: np.ndarray
    used_dense_fallback: bool = False


@dataclass(frozen=True)
class SigmaBounds:
    lower: float
    upper: float


def _strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    for k in range(n):
        seen = {k}
        stack = [k]
        while stack:
            i = stack.pop()
            for j in range(n):
                if j not in seen and adj[i, j]:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != n:
            return False
    return True


def spectral_radius(matrix, tol: float = _POWER_TOL) -> tuple[float, np.ndarray]:
    """Perron root and vector of a nonnegative irreducible matrix.

    Power iteration from the all-ones vector with the Collatz-Wielandt
    bracket as the stopping rule; imprimitive matrices that keep the bracket
    open fall back to a dense eigensolve (reported via logging).
    """
    sigma, vec, fallback = _power_iteration(np.asarray(matrix, dtype=float), tol)
    if fallback:
        log.warning("power iteration did not close the bracket; used dense eigensolve")
    return sigma, vec


def _power_iteration(a: np.ndarray, tol: float, max_n: int = 64) -> tuple[float, np.ndarray, bool]:
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > max_n:
        raise PreconditionError(f"dense spectral analysis is limited to {max_n} rows")
    if np.any(a < 0):
        raise ValueError("matrix must be nonnegative")
    if n == 1:
        return float(a[0, 0]), np.array([1.0]), False
    if not _strongly_connected(a > 0):
        raise ReducibleMatrixError(
            "reproductive matrix is reducible; analyze the patch components separately"
        )
    x = np.ones(n)
    for _ in range(_POWER_MAX_ITER):
        y = a @ x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= tol * max(1.0, hi):
            sigma = 0.5 * (lo + hi)
            return sigma, x / np.linalg.norm(x), False
        x = y / np.linalg.norm(y)
    # imprimitive or ill-conditioned: dense fallback on the small matrix
    eigvals, eigvecs = np.linalg.eig(a)
    idx = int(np.argmax(np.abs(eigvals)))
    sigma = float(np.abs(eigvals[idx]))
    # the Perron root itself is real; locate it among the eigenvalues
    real_idx = [
        i for i in range(n)
        if abs(eigvals[i].imag) < 1e-9 and abs(eigvals[i].real - sigma) < 1e-9 * max(1.0, sigma)
    ]
    vec = np.real(eigvecs[:, real_idx[0] if real_idx else idx])
    if vec.sum() < 0:
        vec = -vec
    return sigma, vec / np.linalg.norm(vec), True


def assemble_R0(model: ModelSpec, step: Optional[float] = None) -> ReproMatrix:
    """Net reproductive matrix by one linearized cohort solve per patch.

    Column j integrates the birth rate against the linear flow started from
    the j-th basis vector. Requires time-independent coefficients.
    """
    if model.is_time_dependent:
        raise PreconditionError("net reproductive matrix needs a constant environment")
    h = resolve_age_step(model, step if step is not None else model.fine_age_step())
    windows = _birth_windows(model, h)
    i_hi = max((q for _, q in windows), default=0)
    n = model.n_patches
    mat = np.zeros((n, n))
    if i_hi > 0:
        ages = np.arange(i_hi + 1) * h
        basis = np.eye(n)
        path, _ = integrate_batch(model, basis, 0.0, h, i_hi, MODE_LINEAR)
        # path[i, j, k]: flow from basis vector e_j, component k, at age node i
        for k in range(n):
            p, q = windows[k]
            if q <= p:
                continue
            w = trapezoid_weights(p, q, h, i_hi)
            mvals = np.asarray(model.birth[k](ages, 0.0), dtype=float)
            mat[k, :] = (w * mvals) @ path[:, :, k]
    if not mat.any():
        return ReproMatrix(mat, 0.0, np.full(n, 1.0 / np.sqrt(n)), False)
    sigma, vec, fallback = _power_iteration(mat, _POWER_TOL)
    return ReproMatrix(mat, sigma, vec, fallback)


def apply_R_lambda(model: ModelSpec, lam: float, x, step: Optional[float] = None) -> np.ndarray:
    """Scaled nonlinear reproductive map: Kbar(lam * x) / lam.

    Componentwise nonincreasing in lam, bounded above by the linear map.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    from .steady import apply_Kbar

    x = np.asarray(x, dtype=float)
    return apply_Kbar(model, lam * x, step) / lam


def _fine_ages(model: ModelSpec, step: Optional[float]) -> np.ndarray:
    h = resolve_age_step(model, step if step is not None else model.fine_age_step())
    n = int(round(model.fertility_hi / h))
    if n * h < model.fertility_hi - 1e-12:
        n += 1
    return np.arange(n + 1) * h


def _require_cond_d(model: ModelSpec):
    if not model.dispersal.column_sum_nonpositive:
        raise PreconditionError(
            "estimates need the no-reproduction-during-migration property "
            "(dispersal column sums declared nonpositive)"
        )


def _birth_max(model: ModelSpec):
    def rate(a, t=0.0):
        return np.max(
            np.stack([np.asarray(m(a, t), float) for m in model.birth]), axis=0
        )

    return rate


def sigma_bounds(model: ModelSpec, step: Optional[float] = None) -> SigmaBounds:
    """Analytic sandwich for the net reproductive rate.

    Lower: best patch with emigration treated as extra mortality.
    Upper: maximal birth rate against minimal mortality across patches.
    """
    _require_cond_d(model)
    if model.is_time_dependent:
        raise PreconditionError("estimates need a constant environment")
    ages = _fine_ages(model, step)
    h = float(ages[1] - ages[0])
    mu = model.baseline_mortality(ages)  # (n_ages, N)
    lower = -np.inf
    for k in range(model.n_patches):
        dkk = np.asarray(model.dispersal.entries[k][k](ages, 0.0), dtype=float)
        dkk = np.broadcast_to(dkk, ages.shape)
        expo = cumulative_trapezoid(mu[:, k] + np.abs(dkk), h)
        left, right = sided_rate_values(model.birth[k], ages)
        lower = max(lower, product_trapezoid(left, right, np.exp(-expo), h))
    mu_low = mu.min(axis=1)
    left, right = sided_rate_values(_birth_max(model), ages)
    upper = product_trapezoid(left, right, np.exp(-cumulative_trapezoid(mu_low, h)), h)
    return SigmaBounds(lower, upper)


def theta_upper_bound(model: ModelSpec, step: Optional[float] = None,
                      tol: float = 1e-10) -> Optional[float]:
    """Upper bound for the summed maximal solution, or None when vacuous.

    Solves I(t) = 1 by bisection, where I integrates the maximal birth rate
    against minimal-mortality survival damped by the superlinear-mortality
    accumulation; the decreasing integral guarantees a unique root once the
    reproductive rate exceeds one.
    """
    _require_cond_d(model)
    repro = assemble_R0(model, step)
    if repro.sigma <= 1.0:
        return None
    g = model.gamma
    ages = _fine_ages(model, step)
    h = float(ages[1] - ages[0])
    mu = model.baseline_mortality(ages)
    mu_low = mu.min(axis=1)
    p_low = np.stack(
        [np.broadcast_to(np.asarray(law.induced_p(ages, 0.0), float), ages.shape)
         for law in model.mortality],
        axis=1,
    ).min(axis=1)
    expo = cumulative_trapezoid(mu_low, h)
    damping = (g / model.n_patches**g) * cumulative_trapezoid(
        p_low * np.exp(-g * expo), h
    )
    left, right = sided_rate_values(_birth_max(model), ages)
    survival = np.exp(-expo)

    def integral(t: float) -> float:
        cont = survival / (1.0 + t**g * damping) ** (1.0 / g)
        return product_trapezoid(left, right, cont, h)

    hi = 1.0
    while integral(hi) >= 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise PreconditionError("upper-bound integral does not drop below one")
    return bisect(lambda t: integral(t) - 1.0, 0.0, hi, tol=tol)


def theta_lower_bound(model: ModelSpec, k: int, q=None,
                      step: Optional[float] = None,
                      tol: float = 1e-10) -> Optional[float]:
    """Per-patch lower bound for the maximal solution, or None when the
    patch's own reproduction (with emigration as mortality) is subcritical.

    ``q`` bounds the mortality increment from above: M_k(v) - M_k(0) <=
    q(a) v**gamma (sampled-verified). Defaults to the patch's induced
    coefficient, which is exact for the built-in laws.
    """
    _require_cond_d(model)
    if model.is_time_dependent:
        raise PreconditionError("estimates need a constant environment")
    g = model.gamma
    law = model.mortality[k]
    ages = _fine_ages(model, step)
    h = float(ages[1] - ages[0])
    if q is None:
        q_vals = np.asarray(law.induced_p(ages, 0.0), dtype=float)
        q_vals = np.broadcast_to(q_vals, ages.shape)
    else:
        q_vals = np.asarray(q(ages, 0.0), dtype=float)
        q_vals = np.broadcast_to(q_vals, ages.shape)
        base = np.asarray(law.baseline(ages, 0.0), dtype=float)
        for v in (0.1, 1.0, 5.0):
            inc = np.asarray(law.rate(v, ages, 0.0), dtype=float) - base
            if np.any(inc > q_vals * v**g + 1e-9 * (1 + np.abs(inc))):
                raise PreconditionError("q does not dominate the mortality increment")
    mu_k = np.asarray(law.baseline(ages, 0.0), dtype=float)
    mu_k = np.broadcast_to(mu_k, ages.shape)
    dkk = np.asarray(model.dispersal.entries[k][k](ages, 0.0), dtype=float)
    dkk = np.broadcast_to(dkk, ages.shape)
    expo = cumulative_trapezoid(mu_k + np.abs(dkk), h)
    left, right = sided_rate_values(model.birth[k], ages)
    survival = np.exp(-expo)
    if product_trapezoid(left, right, survival, h) <= 1.0:
        return None
    damping = g * cumulative_trapezoid(q_vals * np.exp(-g * expo), h)

    def integral(t: float) -> float:
        cont = survival / (1.0 + t**g * damping) ** (1.0 / g)
        return product_trapezoid(left, right, cont, h)

    hi = 1.0
    while integral(hi) >= 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise PreconditionError("lower-bound integral does not drop below one")
    return bisect(lambda t: integral(t) - 1.0, 0.0, hi, tol=tol)
