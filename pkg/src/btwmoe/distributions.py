"""Scalar probability distributions and exact KL divergences.

These are the primitives behind the instance-level weights: a per-instance
Gaussian for regression outputs (mean plus a residual-variance estimate) and
a categorical distribution for classification outputs. All divergences are
in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError

# Squared residuals of exactly-correct predictions would give a degenerate
# Gaussian and an infinite KL; every variance is clamped to this floor.
VARIANCE_FLOOR = 1e-6

# Softmax outputs can underflow to 0; categorical KL clamps the reference
# distribution to this floor before evaluating.
PROB_FLOOR = 1e-9


@dataclass(frozen=True)
class GaussianParams:
    """A univariate Gaussian given by mean and variance (not std deviation)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise InvalidInputError(f"non-finite Gaussian parameters: {self}")
        if self.variance < VARIANCE_FLOOR:
            raise InvalidInputError(
                f"variance {self.variance} below floor {VARIANCE_FLOOR}"
            )

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class CategoricalDist:
    """A categorical distribution over C >= 2 classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1 or p.shape[0] < 2:
            raise ShapeError(f"probs must be a vector of length >= 2, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("non-finite class probabilities")
        if np.any(p < 0) or np.any(p > 1):
            raise InvalidInputError("class probabilities outside [0, 1]")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise InvalidInputError(f"class probabilities sum to {p.sum()}, not 1")

    @property
    def n_classes(self) -> int:
        return int(self.probs.shape[0])


def residual_variance(y_true: float, mu: float) -> float:
    """Squared prediction error, clamped to the variance floor.

    The squared residual is an unbiased estimate of the conditional variance
    of the target given the inputs, which is how regression predictions are
    promoted to Gaussians.
    """
    if not (math.isfinite(y_true) and math.isfinite(mu)):
        raise InvalidInputError(f"non-finite inputs: y_true={y_true}, mu={mu}")
    return max((y_true - mu) ** 2, VARIANCE_FLOOR)


def gaussian_kl(p: GaussianParams, q: GaussianParams) -> float:
    """Closed-form KL(p || q) between two univariate Gaussians, in nats.

    log(s_q/s_p) + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2, with s the
    standard deviation. Identical inputs give exactly 0.0.
    """
    log_term = math.log(q.std / p.std)
    quad_term = (p.variance + (p.mean - q.mean) ** 2) / (2.0 * q.variance)
    return log_term + quad_term - 0.5


def categorical_kl(p: CategoricalDist, q: CategoricalDist) -> float:
    """KL(p || q) between two categoricals, in nats, with 0 log 0 = 0.

    q is clamped to [PROB_FLOOR, 1] and renormalized before evaluation so
    zero-support classes stay finite. KL(p || p) is exactly 0.0.
    """
    if p.n_classes != q.n_classes:
        raise ShapeError(f"class count mismatch: {p.n_classes} vs {q.n_classes}")
    pv = p.probs
    qv = q.probs
    if np.array_equal(pv, qv):
        return 0.0
    qv = np.clip(qv, PROB_FLOOR, 1.0)
    qv = qv / qv.sum()
    mask = pv > 0
    kl = float(np.sum(pv[mask] * np.log(pv[mask] / qv[mask])))
    return max(kl, 0.0)


def kl_quadrature_oracle(p: GaussianParams, q: GaussianParams, grid_points: int) -> float:
    """Trapezoidal approximation of the Gaussian KL integral, in nats.

    Integrates p(x) * (log p(x) - log q(x)) on a grid spanning both means
    padded by 12 standard deviations of the wider Gaussian. Densities are
    evaluated in log space so tails cannot overflow the ratio. This is a
    deliberately independent check on gaussian_kl, not a fast path.
    """
    if grid_points < 10_000:
        raise InvalidInputError(f"grid_points must be >= 10000, got {grid_points}")
    wide = max(p.std, q.std)
    lo = min(p.mean, q.mean) - 12.0 * wide
    hi = max(p.mean, q.mean) + 12.0 * wide
    x = np.linspace(lo, hi, grid_points)

    def log_pdf(g: GaussianParams) -> np.ndarray:
        return -0.5 * np.log(2.0 * np.pi * g.variance) - (x - g.mean) ** 2 / (2.0 * g.variance)

    lp = log_pdf(p)
    lq = log_pdf(q)
    integrand = np.exp(lp) * (lp - lq)
    dx = (hi - lo) / (grid_points - 1)
    return float(dx * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])))
