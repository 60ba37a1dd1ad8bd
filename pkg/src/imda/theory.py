"""Exact small-instance optimal transport, labeled ground metrics, the
risk-gap inequality checker, and the generalization-bound calculators.

The transport oracle enumerates permutation couplings, which are optimal
for equal-size uniform empirical measures, so every value it returns is
exact; everything else in the package that claims a Wasserstein-related
inequality is tested against it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import risks


class TheoryError(Exception):
    pass


MAX_SUPPORT = 7


def zero_one_cost(y, y_prime):
    return float(np.asarray(y) != np.asarray(y_prime))


def absolute_cost(y, y_prime):
    return abs(float(y) - float(y_prime))


_LABEL_COSTS = {"zero_one": zero_one_cost, "absolute": absolute_cost}


@dataclass
class GroundMetric:
    """rho(z, z') = label_cost(y, y') + scale * ||x - x'||_2.

    kind: 'example' for raw-input space (scale typically L*M*K) or
    'representation' for feature space (scale L*M).
    """

    kind: str = "representation"
    label_cost: object = "zero_one"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("example", "representation"):
            raise TheoryError(f"unknown metric kind {self.kind!r}")
        if isinstance(self.label_cost, str):
            if self.label_cost not in _LABEL_COSTS:
                raise TheoryError(f"unknown label cost {self.label_cost!r}")
            self.label_cost = _LABEL_COSTS[self.label_cost]
        if self.scale < 0:
            raise TheoryError("scale must be >= 0")

    def distance(self, x, y, x_prime, y_prime):
        gap = np.asarray(x, dtype=np.float64) - np.asarray(x_prime, dtype=np.float64)
        return self.label_cost(y, y_prime) + self.scale * float(np.linalg.norm(gap))

    def cost_matrix(self, pair):
        n = pair.size
        c = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                c[i, j] = self.distance(pair.xs_a[i], pair.ys_a[i],
                                        pair.xs_b[j], pair.ys_b[j])
        return c


@dataclass
class DiscreteMeasurePair:
    """Two equal-size uniform empirical measures with labeled supports."""

    xs_a: np.ndarray
    ys_a: np.ndarray
    xs_b: np.ndarray
    ys_b: np.ndarray

    def __post_init__(self):
        self.xs_a = np.atleast_2d(np.asarray(self.xs_a, dtype=np.float64))
        self.xs_b = np.atleast_2d(np.asarray(self.xs_b, dtype=np.float64))
        self.ys_a = np.asarray(self.ys_a)
        self.ys_b = np.asarray(self.ys_b)
        if self.xs_a.shape != self.xs_b.shape:
            raise TheoryError(
                f"support shapes differ: {self.xs_a.shape} vs {self.xs_b.shape}")
        if self.ys_a.shape[0] != self.xs_a.shape[0] or self.ys_b.shape[0] != self.xs_b.shape[0]:
            raise TheoryError("one label per support point required")

    @property
    def size(self):
        return self.xs_a.shape[0]


def exact_w1(pair, metric):
    """Exact W1 between equal-size uniform measures: minimum over all n!
    permutation couplings of the mean matched cost (n <= 7)."""
    n = pair.size
    if n > MAX_SUPPORT:
        raise TheoryError(f"support size {n} exceeds the exact-oracle cap {MAX_SUPPORT}")
    c = metric.cost_matrix(pair)
    rows = np.arange(n)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = c[rows, perm].sum()
        if cost < best:
            best = cost
    return best / n


# ---------------------------------------------------------------------------
# risk-gap inequality (population bound on finite supports)


@dataclass
class RiskGapReport:
    lhs: float
    rhs: float
    holds: bool
    w1_representation: float = None


def check_risk_gap_bound(model, pair, certificate):
    """|R_T - R_S| against exact W1 under the example-space metric with
    scale L*M*K from the certificate.

    Requires regression mode (absolute-error loss), where the loss meets
    the symmetry / Lipschitz / triangle-inequality requirements with M=1.
    Because the certificate upper-bounds the true constants, `holds` is
    guaranteed.  The representation-space W1 (scale L*M on the pushed
    supports) is reported too; it sits between lhs and rhs.
    """
    if model.arch.mode != "regression":
        raise TheoryError("risk-gap check requires a regression-mode model")
    r_a = risks.empirical_risk_target(model, pair.xs_a, pair.ys_a)
    r_b = risks.empirical_risk_target(model, pair.xs_b, pair.ys_b)
    lhs = abs(r_a - r_b)
    scale = certificate.L * certificate.M * certificate.K
    rhs = exact_w1(pair, GroundMetric(kind="example", label_cost="absolute", scale=scale))
    pushed = DiscreteMeasurePair(xs_a=model.represent(pair.xs_a), ys_a=pair.ys_a,
                                 xs_b=model.represent(pair.xs_b), ys_b=pair.ys_b)
    w1_rep = exact_w1(pushed, GroundMetric(kind="representation",
                                           label_cost="absolute",
                                           scale=certificate.L * certificate.M))
    return RiskGapReport(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + 1e-9),
                         w1_representation=w1_rep)


def subgaussian_from_range(loss_lower, loss_upper):
    """Hoeffding constant for a variable bounded in [lower, upper]."""
    if loss_upper < loss_lower:
        raise TheoryError(f"inverted range [{loss_lower}, {loss_upper}]")
    return (loss_upper - loss_lower) / 2.0


# ---------------------------------------------------------------------------
# bound calculators


@dataclass
class BoundConstants:
    """Constants feeding the generalization bounds.  The ideal joint error
    and the joint approximation error have no estimator and are taken as
    user-supplied; the sub-Gaussian scales for the loss and the critic
    class are merged into one sigma."""

    sigma: float = 1.0
    m_t: int = 1
    m_t_prime: int = 1
    m: np.ndarray = field(default_factory=lambda: np.array([1]))
    epsilon: float = 1.0
    tau: float = 1.0
    alpha: np.ndarray = None
    delta_u: float = None
    delta_v: float = None
    r_star: float = 0.0
    r_star_rep: float = 0.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.alpha is None:
            self.alpha = np.full(self.m.size, 1.0 / self.m.size)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.sigma < 0:
            raise TheoryError("sigma must be >= 0")
        if np.any(self.m < 1) or self.m_t < 1 or self.m_t_prime < 1:
            raise TheoryError("sample counts must be >= 1")

    @property
    def alpha_sq_over_m(self):
        return float(np.sum(self.alpha ** 2 / self.m))


def supervised_gap_bound(c, i_uv, i_u):
    """Generalization-gap bound for the supervised regime from the mutual
    information between parameters and data:

    sigma*sqrt(2((1-eps)^2/m_t + eps^2 sum alpha_i^2/m_i) I_uv)
    + sigma*sqrt(2 eps^2 (sum alpha_i^2/m_i + 1/m_t) I_u)

    Returns (total, {term name: value}).
    """
    if i_uv < 0 or i_u < 0:
        raise TheoryError("mutual-information values must be >= 0")
    eps = c.epsilon
    t1 = c.sigma * np.sqrt(
        2.0 * ((1.0 - eps) ** 2 / c.m_t + eps ** 2 * c.alpha_sq_over_m) * i_uv)
    t2 = c.sigma * np.sqrt(
        2.0 * eps ** 2 * (c.alpha_sq_over_m + 1.0 / c.m_t) * i_u)
    terms = {"joint_information_term": float(t1), "representation_information_term": float(t2)}
    return float(t1 + t2), terms


def unsupervised_gap_bound(c, i_uv):
    """Generalization-gap bound for the pseudo-label regime:

    sqrt(2 sigma^2 (sum alpha_i^2/m_i + 1/m_t') I_uv) + R*_rep + R*

    Returns (total, {term name: value}).
    """
    if i_uv < 0:
        raise TheoryError("mutual-information values must be >= 0")
    t1 = np.sqrt(2.0 * c.sigma ** 2 * (c.alpha_sq_over_m + 1.0 / c.m_t_prime) * i_uv)
    terms = {"information_term": float(t1),
             "joint_approximation_error": float(c.r_star_rep),
             "ideal_joint_error": float(c.r_star)}
    return float(t1 + c.r_star_rep + c.r_star), terms


@dataclass
class BoundReport:
    """Named additive terms of the training-risk bound; total is their sum."""

    terms: list  # [(name, value), ...]
    total: float

    def csv_rows(self):
        rows = [(name, value) for name, value in self.terms]
        rows.append(("total", self.total))
        return rows


def training_risk_bound(c, empirical_combined_risk):
    """Full right-hand side of the gradient-norm risk bound for the unified
    algorithm, built from the ledger accumulators delta_u, delta_v:

      empirical combined risk
      + tau*sigma*sqrt(2((1-eps)^2/m_t + eps^2 sum a^2/m)(delta_u+delta_v))
      + tau*eps*sigma*sqrt(2(sum a^2/m + 1/m_t) delta_u)
      + (1-tau)*sigma*sqrt(2(sum a^2/m + 1/m_t')(delta_u+delta_v))
      + (1-tau)*R*_rep + (1-tau)*R*
    """
    if c.delta_u is None or c.delta_v is None:
        raise TheoryError("ledger accumulators are absent (noiseless run?)")
    if c.delta_u < 0 or c.delta_v < 0:
        raise TheoryError("ledger accumulators must be >= 0")
    eps, tau = c.epsilon, c.tau
    asm = c.alpha_sq_over_m
    d_uv = c.delta_u + c.delta_v
    terms = [
        ("empirical_combined_risk", float(empirical_combined_risk)),
        ("supervised_parameter_term",
         float(tau * c.sigma * np.sqrt(2.0 * ((1.0 - eps) ** 2 / c.m_t + eps ** 2 * asm) * d_uv))),
        ("supervised_alignment_term",
         float(tau * eps * c.sigma * np.sqrt(2.0 * (asm + 1.0 / c.m_t) * c.delta_u))),
        ("pseudo_alignment_term",
         float((1.0 - tau) * c.sigma * np.sqrt(2.0 * (asm + 1.0 / c.m_t_prime) * d_uv))),
        ("joint_approximation_error", float((1.0 - tau) * c.r_star_rep)),
        ("ideal_joint_error", float((1.0 - tau) * c.r_star)),
    ]
    return BoundReport(terms=terms, total=float(sum(v for _, v in terms)))
