"""Built-in regression models: OLS and gradient-boosted stumps.

Just enough model zoo for the full fit / explain / decompose pipeline to run
without external ML dependencies, including the underfit-to-overfit sweep
(boosted stumps tuned to a requested training fit). Fitted models are
immutable and safe for concurrent prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (
    InvalidValue,
    NoValidSplit,
    ShapeError,
    SingularDesign,
    TargetUnreachable,
)
from .metrics import baseline_r2


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    coefficients: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.coefficients, dtype=float)
        if beta.ndim != 1:
            raise ShapeError("coefficients must be a vector")
        if not (np.all(np.isfinite(beta)) and math.isfinite(float(self.intercept))):
            raise InvalidValue("model parameters must be finite")
        beta = beta.copy()
        beta.flags.writeable = False
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def feature_count(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, row) -> float:
        return float(self.intercept + self.coefficients @ np.asarray(row, dtype=float))

    def predict_batch(self, rows) -> np.ndarray:
        return self.intercept + np.asarray(rows, dtype=float) @ self.coefficients


@dataclass(frozen=True)
class Stump:
    feature_index: int
    threshold: float
    left_value: float   # rows with value <= threshold
    right_value: float


@dataclass(frozen=True)
class StumpEnsemble:
    init_value: float
    stumps: tuple[Stump, ...]
    learning_rate: float
    n_features: int

    @property
    def feature_count(self) -> int:
        return self.n_features

    def predict(self, row) -> float:
        r = np.asarray(row, dtype=float)
        total = self.init_value
        for s in self.stumps:
            total += self.learning_rate * (
                s.left_value if r[s.feature_index] <= s.threshold else s.right_value
            )
        return float(total)

    def predict_batch(self, rows) -> np.ndarray:
        x = np.asarray(rows, dtype=float)
        out = np.full(x.shape[0], self.init_value)
        lr = self.learning_rate
        for s in self.stumps:
            out += lr * np.where(
                x[:, s.feature_index] <= s.threshold, s.left_value, s.right_value
            )
        return out

    def truncated(self, n_stumps: int) -> "StumpEnsemble":
        return StumpEnsemble(
            init_value=self.init_value,
            stumps=self.stumps[:n_stumps],
            learning_rate=self.learning_rate,
            n_features=self.n_features,
        )


def predict(model, row) -> float:
    """Evaluate a fitted model on one feature row."""
    return model.predict(row)


def fit_ols(dataset: Dataset) -> LinearModel:
    """Least squares with intercept, solved via QR orthogonalization.

    QR rather than normal equations so near-collinear simulation designs
    don't lose half the working precision; exact rank deficiency raises
    SingularDesign.
    """
    if dataset.y is None:
        raise InvalidValue("dataset has no outcome column to fit")
    x, y = dataset.x, dataset.y
    n, f = x.shape
    if n <= f:
        raise SingularDesign(f"need more rows ({n}) than features ({f}) plus intercept")
    design = np.column_stack([np.ones(n), x])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * n * np.finfo(float).eps:
        raise SingularDesign("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    return LinearModel(intercept=float(beta[0]), coefficients=beta[1:])


def _split_candidates(x: np.ndarray):
    """Per feature: (sort order, boundary positions, thresholds).

    Thresholds sit at midpoints between consecutive distinct sorted values;
    a boundary at position i splits sorted rows [0..i] from [i+1..].
    """
    candidates = []
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        boundaries = np.nonzero(xs[1:] > xs[:-1])[0]
        thresholds = (xs[boundaries] + xs[boundaries + 1]) / 2.0
        candidates.append((order, boundaries, thresholds))
    return candidates


def _best_stump(x: np.ndarray, residual: np.ndarray, candidates) -> Stump:
    n = x.shape[0]
    best_score = -np.inf
    best: Stump | None = None
    for f, (order, boundaries, thresholds) in enumerate(candidates):
        if boundaries.size == 0:
            continue
        rs = residual[order]
        csum = np.cumsum(rs)
        total = csum[-1]
        n_left = boundaries + 1
        left_sum = csum[boundaries]
        right_sum = total - left_sum
        n_right = n - n_left
        # maximizing L^2/nL + R^2/nR minimizes the squared error of the fit
        scores = left_sum**2 / n_left + right_sum**2 / n_right
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score = float(scores[k])
            best = Stump(
                feature_index=f,
                threshold=float(thresholds[k]),
                left_value=float(left_sum[k] / n_left[k]),
                right_value=float(right_sum[k] / n_right[k]),
            )
    assert best is not None
    return best


def _boost(dataset: Dataset, iterations: int, learning_rate: float):
    """Shared boosting loop; returns stumps plus the per-iteration training fit."""
    if dataset.y is None:
        raise InvalidValue("dataset has no outcome column to fit")
    if iterations < 1:
        raise InvalidValue("iterations must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise InvalidValue("learning_rate must be in (0, 1]")
    x, y = dataset.x, dataset.y
    if x.shape[0] < 2:
        raise InvalidValue("need at least 2 rows to boost")
    candidates = _split_candidates(x)
    if all(b.size == 0 for _, b, _ in candidates):
        raise NoValidSplit("every feature column is constant")

    init = float(y.mean())
    pred = np.full(x.shape[0], init)
    stumps: list[Stump] = []
    r2_history: list[float] = []
    for _ in range(iterations):
        stump = _best_stump(x, y - pred, candidates)
        pred = pred + learning_rate * np.where(
            x[:, stump.feature_index] <= stump.threshold,
            stump.left_value,
            stump.right_value,
        )
        stumps.append(stump)
        r2_history.append(baseline_r2(y, pred))
    return init, stumps, r2_history


def fit_stump_ensemble(
    dataset: Dataset, iterations: int, learning_rate: float = 0.1
) -> StumpEnsemble:
    """Gradient boosting on squared error with depth-1 trees.

    Each round greedily picks the (feature, threshold) minimizing the
    residual sum of squares over midpoint thresholds; ties go to the lower
    feature index, then the lower threshold. Training fit is non-decreasing
    in the iteration count.
    """
    init, stumps, _ = _boost(dataset, iterations, learning_rate)
    return StumpEnsemble(
        init_value=init,
        stumps=tuple(stumps),
        learning_rate=learning_rate,
        n_features=dataset.n_features,
    )


def tune_iterations(
    dataset: Dataset,
    target_r2: float,
    learning_rate: float = 0.1,
    max_iterations: int = 20000,
    tolerance: float = 0.01,
):
    """Search the iteration count whose training fit is closest to a target.

    The training fit is non-decreasing in iterations, so a single incremental
    pass to the first crossing finds the best count. Returns
    ``(model, achieved_r2, iterations)``; raises TargetUnreachable when no
    count lands within the tolerance.
    """
    if not 0.0 < target_r2 < 1.0:
        raise InvalidValue("target_r2 must be in (0, 1)")
    if dataset.y is None:
        raise InvalidValue("dataset has no outcome column to fit")
    x, y = dataset.x, dataset.y
    candidates = _split_candidates(x)
    if all(b.size == 0 for _, b, _ in candidates):
        raise NoValidSplit("every feature column is constant")

    init = float(y.mean())
    pred = np.full(x.shape[0], init)
    stumps: list[Stump] = []
    best_k = 0
    best_gap = math.inf
    for k in range(1, max_iterations + 1):
        stump = _best_stump(x, y - pred, candidates)
        pred = pred + learning_rate * np.where(
            x[:, stump.feature_index] <= stump.threshold,
            stump.left_value,
            stump.right_value,
        )
        stumps.append(stump)
        r2 = baseline_r2(y, pred)
        gap = abs(r2 - target_r2)
        if gap < best_gap:
            best_gap = gap
            best_k = k
            best_r2 = r2
        if r2 >= target_r2:
            break
    if best_gap > tolerance:
        raise TargetUnreachable(
            f"closest training fit to {target_r2} is {best_r2:.4f} "
            f"at {best_k} iterations (gap {best_gap:.4f} > {tolerance})"
        )
    model = StumpEnsemble(
        init_value=init,
        stumps=tuple(stumps[:best_k]),
        learning_rate=learning_rate,
        n_features=dataset.n_features,
    )
    return model, best_r2, best_k
