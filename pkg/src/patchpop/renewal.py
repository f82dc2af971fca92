"""Renewal integral equation for the newborn function.

The newborn function rho(t) = n(0, t) satisfies the fixed-point equation

    rho = K rho + F f,

where (K rho)(t) integrates the birth rate against newborn cohorts launched
at earlier times and (F f)(t) integrates it against the cohorts present at
t = 0. Both operators reduce to quadrature over trajectories of the module
:mod:`patchpop.characteristics` on one shared age/time grid (time step equal
to the age step), which keeps every characteristic label on the grid.

:func:`solve_renewal` runs the monotone fixed-point iteration from zero; the
iterate sequence is nondecreasing (asserted every sweep) and the iteration
count is certified against the factorial convergence bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .characteristics import MODE_PHI, MODE_PSI, integrate_batch
from .errors import ConsistencyError, ConvergenceError, PreconditionError
from .grids import grid_index, resolve_age_step, trapezoid_weights, window_indices
from .model import ModelSpec, accessibility, omega_constants


@dataclass(frozen=True)
class RenewalDiagnostics:
    iterations: int
    residual: float
    certificate_bound: int
    max_clamped: float


@dataclass(frozen=True)
class NewbornPath:
    """Newborn densities on a uniform time grid (step = age step)."""

    times: np.ndarray
    values: np.ndarray  # (len(times), N)
    diagnostics: Optional[RenewalDiagnostics] = None

    def __post_init__(self):
        if self.values.shape[0] != self.times.shape[0]:
            raise ValueError("times/values length mismatch")
        if np.any(self.values < 0):
            raise ValueError("newborn densities must be nonnegative")

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_patches(self) -> int:
        return self.values.shape[1]

    def value_at(self, t) -> np.ndarray:
        """Linear interpolation between grid nodes."""
        t = np.asarray(t, dtype=float)
        out = np.stack(
            [np.interp(t, self.times, self.values[:, k]) for k in range(self.n_patches)],
            axis=-1,
        )
        return out

    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass(frozen=True)
class DensityField:
    """Population density on a rectangular age x time grid."""

    ages: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (len(times), len(ages), N)

    @property
    def step(self) -> float:
        return float(self.ages[1] - self.ages[0])

    def time_index(self, t: float) -> int:
        return grid_index(t, float(self.times[1] - self.times[0]))


@dataclass(frozen=True)
class ConvolutionWitness:
    interval: Optional[tuple[float, float]]
    diagnostic: str


# ---------------------------------------------------------------------------
# grid plumbing
# ---------------------------------------------------------------------------

def grid_index_round_up(x: float, h: float) -> int:
    i = round(x / h)
    if abs(x - i * h) <= 1e-9 * max(1.0, abs(x)):
        return int(i)
    return int(math.ceil(x / h))


def _birth_windows(model: ModelSpec, h: float) -> list[tuple[int, int]]:
    """Per-patch grid-index windows of the birth-rate supports."""
    n_max = grid_index_round_up(model.fertility_hi, h)
    out = []
    for m in model.birth:
        lo, hi = m.support()
        if hi <= lo:
            out.append((0, 0))
        else:
            out.append(window_indices(max(lo, model.fertility_lo),
                                      min(hi, model.fertility_hi), h, n_max))
    return out


def _k_sweep(model: ModelSpec, values: np.ndarray, h: float,
             windows: list[tuple[int, int]]) -> tuple[np.ndarray, float]:
    """One application of K to a grid function, at every grid node at once.

    Launches one cohort trajectory per characteristic label (= time node) and
    accumulates the birth quadrature while marching in age. Trapezoid weights
    are restricted to each patch's own fertility window so that window edges
    never straddle a cell.
    """
    m_total = values.shape[0] - 1
    n = model.n_patches
    out = np.zeros_like(values)
    i_hi = max((q for _, q in windows), default=0)
    if i_hi == 0:
        return out, 0.0
    times = np.arange(m_total + 1) * h
    time_dep = model.is_time_dependent

    def accumulate(i: int, big_h: np.ndarray):
        if i > m_total:
            return
        a_i = i * h
        n_labels = m_total - i + 1
        for k in range(n):
            p, q = windows[k]
            if q <= p or i < p or i > q:
                continue
            base = h / 2 if (i == p or i == q) else h
            if time_dep:
                mrow = np.asarray(model.birth[k](a_i, times[i:]), dtype=float)
            else:
                mrow = float(model.birth[k](a_i, 0.0))
            contrib = base * mrow * big_h[:n_labels, k]
            out[i:, k] += contrib
            if i < q:
                m0 = mrow[0] if np.ndim(mrow) else mrow
                out[i, k] -= (h / 2) * m0 * big_h[0, k]

    _, clamped = integrate_batch(
        model, values, times, h, i_hi, MODE_PHI, keep_path=False, on_step=accumulate
    )
    return out, clamped


def forcing_on_grid(model: ModelSpec, h: float, n_time: int) -> np.ndarray:
    """The inhomogeneous term (F f)(t_j) for every grid node j.

    Marches the t = 0 cohorts forward in time, accumulating, for each time
    node, the birth integral over ages not yet covered by newborn cohorts.
    Vanishes for t at and beyond the fertility ceiling.
    """
    windows = _birth_windows(model, h)
    i_hi = max((q for _, q in windows), default=0)
    out = np.zeros((n_time + 1, model.n_patches))
    if i_hi == 0:
        return out
    labels = np.arange(i_hi + 1) * h
    h0 = model.initial_values(labels)

    def accumulate(j: int, big_h: np.ndarray):
        if j > n_time or j >= i_hi:
            return
        t_j = j * h
        for k in range(model.n_patches):
            p, q = windows[k]
            r0 = max(j, p)
            if q <= r0:
                continue
            idx = np.arange(r0, q + 1)
            w = np.full(idx.size, h)
            w[0] = w[-1] = h / 2
            mvals = np.asarray(model.birth[k](idx * h, t_j), dtype=float)
            out[j, k] = float(np.dot(w * mvals, big_h[r0 - j : q - j + 1, k]))

    integrate_batch(
        model, h0, labels, h, i_hi, MODE_PSI, keep_path=False, on_step=accumulate,
    )
    return out


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def apply_K(model: ModelSpec, rho: NewbornPath, t: float) -> np.ndarray:
    """Birth integral over newborn cohorts: (K rho)(t) for a grid time t."""
    h = rho.step
    j = grid_index(t, h)
    if j > len(rho.times) - 1:
        raise PreconditionError(f"rho is not defined up to t = {t}")
    windows = _birth_windows(model, h)
    i_hi = min(j, max((q for _, q in windows), default=0))
    out = np.zeros(model.n_patches)
    if i_hi == 0:
        return out
    labels = (j - np.arange(i_hi + 1)) * h  # label of the cohort aged a_i at t
    h0 = rho.values[j - np.arange(i_hi + 1)]
    path, _ = integrate_batch(model, h0, labels, h, i_hi, MODE_PHI, keep_path=True)
    phi = np.stack([path[i, i, :] for i in range(i_hi + 1)])  # row i at its own age
    for k in range(model.n_patches):
        p, q = windows[k]
        q_eff = min(q, j)
        if q_eff <= p:
            continue
        w = trapezoid_weights(p, q_eff, h, i_hi)
        mvals = np.asarray(model.birth[k](np.arange(i_hi + 1) * h, t), dtype=float)
        out[k] = float(np.sum(w * mvals * phi[:, k]))
    return out


def apply_F(model: ModelSpec, t: float, step: Optional[float] = None) -> np.ndarray:
    """Birth integral over the cohorts already alive at time zero.

    The cohort of current age a entered at age a - t and has lived t units;
    its density is the initial-data flow evaluated at elapsed time t. Zero
    for t at or beyond the fertility ceiling.
    """
    h = resolve_age_step(model, step)
    j = grid_index(t, h)
    full = forcing_on_grid(model, h, j)
    return full[j]


def iteration_certificate(model: ModelSpec, t_end: float, tol: float) -> int:
    """Smallest i with 2*omega2*exp(C t)*(C t)**i / i! below tol.

    C = exp(N b ||D||) * ||m||. This is the a-priori convergence certificate
    for the monotone iteration; the actual sweep count must not exceed it.
    """
    _, w2 = omega_constants(model)
    c = math.exp(model.n_patches * model.lifespan * model.dispersal_norm) * model.birth_sup
    x = c * t_end
    if x <= 0 or w2 == 0:
        return 1
    log_tol = math.log(tol)
    log_pref = math.log(2 * w2) + x
    for i in range(1, 200_000):
        if log_pref + i * math.log(x) - math.lgamma(i + 1) < log_tol:
            return i
    raise ConvergenceError("certificate bound exceeds 200000 iterations")


def solve_renewal(
    model: ModelSpec,
    t_end: float,
    tol: float = 1e-8,
    max_iter: int = 200,
    step: Optional[float] = None,
) -> NewbornPath:
    """Monotone fixed-point solution of rho = K rho + F f on [0, t_end].

    Iterates from zero; each sweep must not decrease anywhere (checked), and
    the returned path has sup-norm residual at most ``tol``. The iteration
    count is recorded along with its factorial certificate bound.
    """
    if t_end < model.fertility_hi:
        raise PreconditionError("t_end must reach the fertility ceiling")
    h = resolve_age_step(model, step)
    m_total = grid_index_round_up(t_end, h)
    times = np.arange(m_total + 1) * h
    windows = _birth_windows(model, h)
    forcing = forcing_on_grid(model, h, m_total)
    certificate = iteration_certificate(model, times[-1], tol)

    rho = np.zeros((m_total + 1, model.n_patches))
    worst_clamp = 0.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        swept, clamped = _k_sweep(model, rho, h, windows)
        worst_clamp = max(worst_clamp, clamped)
        new = swept + forcing
        drop = float((new - rho).min())
        if drop < -1e-10 * (1.0 + float(np.abs(rho).max())):
            raise ConsistencyError(
                f"monotone iteration decreased by {-drop:.3e} at sweep {it}"
            )
        residual = float(np.abs(new - rho).max())
        if residual <= tol:
            diag = RenewalDiagnostics(it, residual, certificate, worst_clamp)
            return NewbornPath(times, rho, diag)
        rho = new
    raise ConvergenceError(
        f"renewal iteration did not converge in {max_iter} sweeps "
        f"(residual {residual:.3e})",
        residual=residual,
    )


def reconstruct_density(model: ModelSpec, rho: NewbornPath) -> DensityField:
    """Assemble n(a, t) from the newborn path and the initial data.

    Newborn cohorts fill the strictly-forward region t > a; initial cohorts
    fill a >= t (so the diagonal belongs to the initial branch).
    """
    h = rho.step
    m_total = len(rho.times) - 1
    n_b = grid_index_round_up(model.lifespan, h)
    field = np.zeros((m_total + 1, n_b + 1, model.n_patches))

    def fill_phi(i: int, big_h: np.ndarray):
        if i > n_b or i + 1 > m_total:
            return
        field[i + 1 :, i, :] = big_h[1 : m_total - i + 1]

    integrate_batch(
        model, rho.values, rho.times, h, n_b, MODE_PHI,
        keep_path=False, on_step=fill_phi,
    )

    labels = np.arange(n_b + 1) * h
    h0 = model.initial_values(labels)
    j_max = min(m_total, n_b)

    def fill_psi(j: int, big_h: np.ndarray):
        if j > j_max:
            return
        field[j, j:, :] = big_h[: n_b - j + 1]

    integrate_batch(
        model, h0, labels, h, j_max, MODE_PSI, keep_path=False, on_step=fill_psi,
    )
    return DensityField(np.arange(n_b + 1) * h, rho.times.copy(), field)


def total_population(field: DensityField, t: float) -> np.ndarray:
    """Age-integrated density at a grid time."""
    j = field.time_index(t)
    return np.trapezoid(field.values[j], dx=field.step, axis=0)


def convolution_positivity_witness(
    model: ModelSpec,
    rho: NewbornPath,
    k: int,
    s1: float,
    s2: float,
) -> ConvolutionWitness:
    """Interval on which (K rho)_k stays positive, given rho > 0 on [s1, s2].

    Returns the longest contiguous run of strictly positive grid values of
    (K rho)_k after s1, or a diagnostic when the input is not positive on
    [s1, s2] or the patch cannot be reached within its fertile window.
    """
    h = rho.step
    j1, j2 = grid_index(s1, h), grid_index(s2, h)
    if j2 < j1:
        raise PreconditionError("need s1 <= s2")
    if np.any(rho.values[j1 : j2 + 1] <= 0):
        return ConvolutionWitness(None, "rho is not strictly positive on [s1, s2]")
    sup_m = min(model.birth[k].support()[1], model.fertility_hi)
    ages = np.arange(1, grid_index_round_up(sup_m, h)) * h
    if not any(
        k in accessibility(model.dispersal, a, t)
        for a in ages
        for t in model.time_samples()
    ):
        return ConvolutionWitness(
            None, f"patch {k} is not accessible below its maximal fertile age"
        )
    windows = _birth_windows(model, h)
    out, _ = _k_sweep(model, rho.values, h, windows)
    positive = out[:, k] > 0
    best = None
    run_start = None
    for j in range(j1, len(rho.times)):
        if positive[j] and run_start is None:
            run_start = j
        if (not positive[j] or j == len(rho.times) - 1) and run_start is not None:
            run_end = j if positive[j] else j - 1
            if best is None or run_end - run_start > best[1] - best[0]:
                best = (run_start, run_end)
            run_start = None
    if best is None or best[1] <= best[0]:
        return ConvolutionWitness(None, "no positive run found after s1")
    return ConvolutionWitness((best[0] * h, best[1] * h), "positive run located")
