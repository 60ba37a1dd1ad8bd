"""Simplex-constrained optimization of the domain weights.

The per-epoch objective is linear in the weights plus an adaptive
regularizer: f(alpha) = sum_i c_i alpha_i + lambda_R * R(alpha) with
R(alpha) = sqrt(sum_i alpha_i^2 / m_i), where lambda_R is built from the
gradient-norm ledger.  f is convex and smooth on the simplex (R is
non-smooth only at the origin, which is infeasible), so projected
gradient descent with backtracking suffices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimizer import GradNormLedger, NoiselessLedgerError


class AlphaSolverError(Exception):
    pass


class SolverNotConverged(AlphaSolverError):
    """Iteration cap hit; carries the best iterate found."""

    def __init__(self, message, best_alpha, best_value):
        super().__init__(message)
        self.best_alpha = best_alpha
        self.best_value = best_value


@dataclass
class DomainWeights:
    """A point on the N-simplex with per-source sample counts."""

    alpha: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.int64)
        if self.alpha.ndim != 1 or self.alpha.size < 1:
            raise AlphaSolverError("need at least one domain weight")
        if self.m.shape != self.alpha.shape:
            raise AlphaSolverError("one sample count per source required")
        if np.any(self.m < 1):
            raise AlphaSolverError("sample counts must be >= 1")
        if np.min(self.alpha) < -1e-9 or abs(self.alpha.sum() - 1.0) > 1e-9:
            raise AlphaSolverError(f"{self.alpha} is not on the simplex")

    @classmethod
    def uniform(cls, m):
        m = np.asarray(m)
        return cls(alpha=np.full(m.size, 1.0 / m.size), m=m)


def simplex_project(point):
    """Euclidean projection onto {a : a_i >= 0, sum a_i = 1} by the
    sort-and-threshold rule."""
    v = np.asarray(point, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise AlphaSolverError(f"cannot project shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise AlphaSolverError("non-finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.max(idx[u - css / idx > 0.0])
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


@dataclass
class AlphaObjective:
    """Linear coefficients plus the regularizer weight and sample counts."""

    linear: np.ndarray
    reg_weight: float
    m: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.reg_weight < 0:
            raise AlphaSolverError("regularizer weight must be >= 0")
        if self.linear.shape != self.m.shape:
            raise AlphaSolverError("coefficient/count length mismatch")

    def regularizer(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        return np.sqrt(np.sum(alpha * alpha / self.m, axis=-1))

    def value(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        return alpha @ self.linear + self.reg_weight * self.regularizer(alpha)

    def grad(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        r = self.regularizer(alpha)
        if r == 0.0:
            return self.linear.copy()
        return self.linear + self.reg_weight * (alpha / self.m) / r


def adaptive_reg_weight(eps, tau, c1, delta_u, delta_v):
    """C1 * ((1 - tau + tau*eps) sqrt(delta_u + delta_v) + tau*eps sqrt(delta_u))."""
    return c1 * ((1.0 - tau + tau * eps) * np.sqrt(delta_u + delta_v)
                 + tau * eps * np.sqrt(delta_u))


def build_objective(risks_pred, risks_dup, eps, tau, c0, c1, ledger, m,
                    reg_weight_override=None):
    """Per-source linear coefficients
    (eps*tau + C0(1-tau)) r_i(v) - (eps*tau + 1 - tau) r_i(v')
    with the ledger-adaptive regularizer weight.  A noiseless run has no
    ledger; pass reg_weight_override to supply a fixed weight instead.
    """
    risks_pred = np.asarray(risks_pred, dtype=np.float64)
    risks_dup = np.asarray(risks_dup, dtype=np.float64)
    if risks_pred.shape != risks_dup.shape:
        raise AlphaSolverError("risk vectors differ in length")
    linear = ((eps * tau + c0 * (1.0 - tau)) * risks_pred
              - (eps * tau + 1.0 - tau) * risks_dup)
    if reg_weight_override is not None:
        lam = float(reg_weight_override)
    else:
        if ledger is None or not isinstance(ledger, GradNormLedger):
            raise NoiselessLedgerError(
                "no gradient-norm ledger available (noiseless run?); pass "
                "reg_weight_override to use a fixed regularizer weight")
        lam = adaptive_reg_weight(eps, tau, c1, ledger.delta_u, ledger.delta_v)
    return AlphaObjective(linear=linear, reg_weight=lam, m=np.asarray(m))


def solve_alpha(objective, m, tol=1e-8, max_iter=100_000):
    """Projected gradient descent with backtracking from unit step, run
    until the projected-gradient norm drops below `tol`.

    The argmin is invariant under positive rescaling of (linear, reg_weight),
    so the iteration works on a unit-scale copy of the objective; the
    tolerance applies at that scale, keeping it meaningful when the
    ledger-driven regularizer weight is very large.
    """
    m = np.asarray(m)
    n = m.size
    if n == 1:
        return DomainWeights(alpha=np.array([1.0]), m=m)
    # On the simplex, shifting the linear part by a constant shifts f by a
    # constant, and positive rescaling leaves the argmin unchanged; centering
    # and unit-scaling keep the iteration's value range near zero so float64
    # can resolve decreases all the way down to the tolerance.
    centered = objective.linear - np.mean(objective.linear)
    s = max(float(np.max(np.abs(centered))), float(objective.reg_weight), 1e-12)
    work = AlphaObjective(linear=centered / s,
                          reg_weight=objective.reg_weight / s, m=objective.m)
    alpha = np.full(n, 1.0 / n)
    value = work.value(alpha)
    for _ in range(int(max_iter)):
        g = work.grad(alpha)
        pg = alpha - simplex_project(alpha - g)
        if np.linalg.norm(pg) < tol:
            return DomainWeights(alpha=simplex_project(alpha), m=m)
        step, moved = 1.0, False
        while step > 1e-18:
            trial = simplex_project(alpha - step * g)
            diff = alpha - trial
            trial_value = work.value(trial)
            if trial_value <= value - (1e-4 / step) * (diff @ diff):
                alpha, value, moved = trial, trial_value, True
                break
            step *= 0.5
        if not moved:
            break  # no acceptable decrease at any step: floating-point floor
    pg = alpha - simplex_project(alpha - work.grad(alpha))
    if np.linalg.norm(pg) < tol:
        return DomainWeights(alpha=simplex_project(alpha), m=m)
    raise SolverNotConverged(
        f"projected gradient did not reach tol={tol} in {max_iter} iterations",
        best_alpha=alpha, best_value=objective.value(alpha))


def moving_average_update(old, new, c):
    """C * old + (1 - C) * new; stays on the simplex for 0 < C < 1."""
    if not 0.0 < c < 1.0:
        raise AlphaSolverError(f"moving-average weight must be in (0,1), got {c}")
    old = np.asarray(old.alpha if isinstance(old, DomainWeights) else old, dtype=np.float64)
    new = np.asarray(new.alpha if isinstance(new, DomainWeights) else new, dtype=np.float64)
    for a in (old, new):
        if np.min(a) < -1e-9 or abs(a.sum() - 1.0) > 1e-9:
            raise AlphaSolverError(f"{a} is not on the simplex")
    return c * old + (1.0 - c) * new


def simplex_grid(n, step):
    """All grid points of the N-simplex with the given resolution."""
    k = int(round(1.0 / step))
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        a = np.arange(k + 1) / k
        return np.stack([a, 1.0 - a], axis=1)
    if n == 3:
        pts = []
        for i in range(k + 1):
            for j in range(k + 1 - i):
                pts.append((i / k, j / k, (k - i - j) / k))
        return np.asarray(pts)
    raise AlphaSolverError("grid oracle supports at most 3 sources")


def grid_oracle(objective, m, step=0.005):
    """Exhaustive minimizer over the simplex grid (N <= 3, step <= 0.01)."""
    m = np.asarray(m)
    if m.size > 3:
        raise AlphaSolverError("grid oracle supports at most 3 sources")
    if step > 0.01:
        raise AlphaSolverError("grid step must be <= 0.01")
    grid = simplex_grid(m.size, step)
    values = grid @ objective.linear + objective.reg_weight * objective.regularizer(grid)
    return grid[int(np.argmin(values))]
