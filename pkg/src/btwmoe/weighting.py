"""Per-instance and per-modality weights, their combinators, and EMA smoothing.

A weight matrix is an (N, M) array whose rows are L1-normalized. Raw KL
matrices hold the un-normalized per-instance divergences; modality MI is a
length-M vector. Rows that would normalize to 0/0 fall back to the uniform
vector, which reproduces unweighted training for those instances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .distributions import CategoricalDist, GaussianParams, categorical_kl, gaussian_kl
from .errors import InvalidInputError, ShapeError
from .predictions import REGRESSION, PredictionSet

# Defaults for the adaptive smoothing factor: start mid-range, move in fixed
# steps, never leave the clamp interval.
ALPHA_INIT = 0.5
ALPHA_STEP = 0.1
ALPHA_MIN = 0.1
ALPHA_MAX = 0.9

LOWER_IS_BETTER = "lower"
HIGHER_IS_BETTER = "higher"


def _normalize_rows(values: np.ndarray) -> np.ndarray:
    """Row-wise L1 normalization with a uniform fallback for all-zero rows."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected an (N, M) matrix, got shape {values.shape}")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidInputError("weight entries must be finite and non-negative")
    sums = values.sum(axis=1, keepdims=True)
    degenerate = sums[:, 0] == 0.0
    out = np.empty_like(values)
    np.divide(values, sums, out=out, where=sums > 0)
    if degenerate.any():
        out[degenerate] = 1.0 / values.shape[1]
    return out


def validate_weight_matrix(w: np.ndarray, atol: float = 1e-9) -> None:
    """Raise unless w is row-stochastic: entries in [0, 1], rows summing to 1."""
    if w.ndim != 2:
        raise ShapeError(f"weight matrix must be 2-D, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weight matrix has non-finite entries")
    if np.any(w < -atol) or np.any(w > 1 + atol):
        raise InvalidInputError("weight entries outside [0, 1]")
    if np.any(np.abs(w.sum(axis=1) - 1.0) > atol):
        raise InvalidInputError("weight rows do not sum to 1")


def instance_kl_weights(preds: PredictionSet) -> np.ndarray:
    """Raw per-instance weights: KL(unimodal_i^(m) || multimodal_i), (N, M).

    Regression compares the per-instance Gaussians (means with residual
    variances); classification compares full class-probability vectors.
    """
    n, m = preds.n_instances, preds.n_modalities
    raw = np.zeros((n, m))
    if preds.task == REGRESSION:
        for j in range(m):
            for i in range(n):
                p = GaussianParams(float(preds.uni_mean[j, i]), float(preds.uni_var[j, i]))
                q = GaussianParams(float(preds.multi_mean[i]), float(preds.multi_var[i]))
                raw[i, j] = gaussian_kl(p, q)
    else:
        for j in range(m):
            for i in range(n):
                p = CategoricalDist(preds.uni_probs[j, i])
                q = CategoricalDist(preds.multi_probs[i])
                raw[i, j] = categorical_kl(p, q)
    return raw


def combine_local(raw: np.ndarray) -> np.ndarray:
    """Instance-level weights only: each row of raw, L1-normalized."""
    return _normalize_rows(raw)


def combine_bilevel(raw: np.ndarray, mi: np.ndarray, prenormalize: bool = False) -> np.ndarray:
    """Bi-level weights: raw KL entries rescaled by modality MI, then row-normalized.

    With prenormalize=True the raw rows are L1-normalized before the MI
    rescaling; the default multiplies the raw divergences directly, which is
    equivalent after the final normalization but kept selectable for
    comparison.
    """
    raw = np.asarray(raw, dtype=np.float64)
    mi = np.asarray(mi, dtype=np.float64)
    if mi.ndim != 1 or raw.ndim != 2 or mi.shape[0] != raw.shape[1]:
        raise ShapeError(f"MI length {mi.shape} does not match raw columns {raw.shape}")
    if np.any(mi < 0) or not np.all(np.isfinite(mi)):
        raise InvalidInputError("MI entries must be finite and non-negative")
    base = _normalize_rows(raw) if prenormalize else raw
    return _normalize_rows(base * mi[None, :])


def combine_global_kl(raw: np.ndarray) -> np.ndarray:
    """Dataset-averaged KL weights: every row is the normalized column mean."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ShapeError(f"expected a non-empty (N, M) matrix, got shape {raw.shape}")
    means = raw.mean(axis=0, keepdims=True)
    row = _normalize_rows(means)
    return np.repeat(row, raw.shape[0], axis=0)


def combine_global_mi(mi: np.ndarray, n: int) -> np.ndarray:
    """Modality-MI-only weights: n copies of the normalized MI vector."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    mi = np.asarray(mi, dtype=np.float64)
    if mi.ndim != 1:
        raise ShapeError(f"MI must be a vector, got shape {mi.shape}")
    row = _normalize_rows(mi[None, :])
    return np.repeat(row, n, axis=0)


@dataclass(frozen=True)
class SmoothingState:
    """Adaptive EMA state: current factor, previous smoothed weights and metric."""

    alpha: float = ALPHA_INIT
    alpha_step: float = ALPHA_STEP
    alpha_min: float = ALPHA_MIN
    alpha_max: float = ALPHA_MAX
    prev_weights: np.ndarray | None = None
    prev_metric: float | None = None
    epoch: int = 0

    def __post_init__(self):
        if not (self.alpha_min <= self.alpha <= self.alpha_max):
            raise InvalidInputError(
                f"alpha {self.alpha} outside [{self.alpha_min}, {self.alpha_max}]"
            )
        if self.prev_weights is not None:
            validate_weight_matrix(self.prev_weights)


def smooth_update(
    state: SmoothingState,
    new_weights: np.ndarray,
    current_metric: float,
    metric_improves_when: str = LOWER_IS_BETTER,
) -> tuple[np.ndarray, SmoothingState]:
    """Blend new weights into the previous smoothed weights with adaptive alpha.

    Alpha steps up when the metric strictly improved since the last update
    and down otherwise, clamped to [alpha_min, alpha_max]; the blended rows
    are re-normalized to absorb float drift. The first update passes the new
    weights through unchanged.
    """
    if metric_improves_when not in (LOWER_IS_BETTER, HIGHER_IS_BETTER):
        raise InvalidInputError(f"unknown direction {metric_improves_when!r}")
    validate_weight_matrix(new_weights)

    alpha = state.alpha
    if state.prev_metric is not None:
        if metric_improves_when == LOWER_IS_BETTER:
            improved = current_metric < state.prev_metric
        else:
            improved = current_metric > state.prev_metric
        step = state.alpha_step if improved else -state.alpha_step
        alpha = min(max(alpha + step, state.alpha_min), state.alpha_max)

    if state.prev_weights is None:
        smoothed = new_weights.copy()
    else:
        if state.prev_weights.shape != new_weights.shape:
            raise ShapeError(
                f"shape drift: prev {state.prev_weights.shape} vs new {new_weights.shape}"
            )
        smoothed = _normalize_rows(alpha * new_weights + (1.0 - alpha) * state.prev_weights)

    next_state = replace(
        state,
        alpha=alpha,
        prev_weights=smoothed,
        prev_metric=float(current_metric),
        epoch=state.epoch + 1,
    )
    return smoothed, next_state


def write_weight_trajectory_csv(path, epochs, matrices) -> None:
    """Write per-epoch weight matrices as rows of (epoch, instance, modality, weight)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "instance", "modality", "weight"])
        for epoch, w in zip(epochs, matrices):
            for i in range(w.shape[0]):
                for m in range(w.shape[1]):
                    writer.writerow([epoch, i, m, repr(float(w[i, m]))])


def write_alpha_trajectory_csv(path, epochs, alphas) -> None:
    """Write the smoothing-factor trajectory as rows of (epoch, alpha)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "alpha"])
        for epoch, alpha in zip(epochs, alphas):
            writer.writerow([epoch, repr(float(alpha))])
