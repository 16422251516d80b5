"""
L2-regularized logistic regression trained by deterministic Newton/IRLS.

Used both as the reported model and as the throwaway hypothetical models
retrained inside expected-fairness evaluation, so training must be a pure,
bit-reproducible function of its inputs.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

logger = logging.getLogger(__name__)

PROBA_CLIP = 1e-12
MAX_HALVINGS = 30


class TrainingError(ValueError):
    """Raised when a classifier cannot be trained on the given data."""


class DimensionError(ValueError):
    """Raised when a feature vector does not match the model dimension."""


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Weight vector plus unpenalized intercept of a logistic model."""

    theta: np.ndarray
    intercept: float
    trained_on: int = 0
    n_iter: int = 0
    loss_trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        if theta.ndim != 1:
            raise DimensionError("theta must be a vector")
        if not (np.isfinite(theta).all() and np.isfinite(self.intercept)):
            raise TrainingError("classifier weights must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "intercept": self.intercept,
            "d": self.d,
            "trained_on": self.trained_on,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearClassifier":
        theta = np.asarray(data["theta"], dtype=float)
        if "d" in data and int(data["d"]) != theta.shape[0]:
            raise DimensionError(f"model declares d={data['d']} but has {theta.shape[0]} weights")
        return cls(theta=theta, intercept=data["intercept"], trained_on=int(data.get("trained_on", 0)))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LinearClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _check_dim(clf: LinearClassifier, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim not in (1, 2) or X.shape[-1] != clf.d:
        raise DimensionError(f"expected {clf.d} features, got shape {X.shape}")
    return X


def linear_score(clf: LinearClassifier, X: np.ndarray) -> Union[float, np.ndarray]:
    """θᵀX + intercept for one vector or each row of a matrix."""
    X = _check_dim(clf, X)
    score = X @ clf.theta + clf.intercept
    return float(score) if X.ndim == 1 else score


def predict_proba(clf: LinearClassifier, X: np.ndarray) -> Union[float, np.ndarray]:
    """P(y=1|X), clamped to [1e-12, 1 - 1e-12]."""
    z = np.asarray(linear_score(clf, X))
    p = np.clip(_sigmoid(z), PROBA_CLIP, 1.0 - PROBA_CLIP)
    return float(p) if p.ndim == 0 else p


def predict(clf: LinearClassifier, X: np.ndarray, threshold: float = 0.5) -> Union[int, np.ndarray]:
    """Hard label: 1 iff P(y=1|X) >= threshold."""
    p = np.asarray(predict_proba(clf, X))
    labels = (p >= threshold).astype(int)
    return int(labels) if labels.ndim == 0 else labels


# ============================================================================
# Training
# ============================================================================

def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _penalty_mask(d: int) -> np.ndarray:
    mask = np.ones(d + 1)
    mask[-1] = 0.0
    return mask


def regularized_loss(w: np.ndarray, X: np.ndarray, y: np.ndarray, reg_strength: float) -> float:
    """Σ log-loss + (reg_strength/2)·‖θ‖², with w = (θ, intercept)."""
    z = _design(X) @ w
    theta = w[:-1]
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * reg_strength * theta @ theta)


def loss_gradient(w: np.ndarray, X: np.ndarray, y: np.ndarray, reg_strength: float) -> np.ndarray:
    A = _design(X)
    p = _sigmoid(A @ w)
    return A.T @ (p - y) + reg_strength * _penalty_mask(X.shape[1]) * w


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # lexsort treats its last key as primary; sort by first column first
    keys = np.column_stack([X, y]).T[::-1]
    return np.lexsort(keys)


def train(
    X: np.ndarray,
    y: np.ndarray,
    reg_strength: float = 1.0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> LinearClassifier:
    """
    Fit the L2-regularized logistic model by Newton iterations from zero.

    Rows are put in a canonical order first so the result does not depend on
    the order of the labeled pool. Steps are halved until the regularized loss
    does not increase. Stops when the gradient norm is at most `tol` or after
    `max_iter` iterations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise TrainingError("need at least one labeled record")
    if X.shape[1] < 1:
        raise TrainingError("need at least one feature")
    if y.shape != (X.shape[0],):
        raise TrainingError("labels do not match the number of records")
    if reg_strength <= 0:
        raise TrainingError(f"reg_strength must be positive, got {reg_strength}")
    if not np.isfinite(X).all():
        raise TrainingError("non-finite feature values")

    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    n, d = X.shape
    A = _design(X)
    reg = reg_strength * _penalty_mask(d)

    w = np.zeros(d + 1)
    loss = regularized_loss(w, X, y, reg_strength)
    trace = [loss]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = _sigmoid(A @ w)
        grad = A.T @ (p - y) + reg * w
        if np.linalg.norm(grad) <= tol:
            iterations -= 1
            break
        hessian = (A.T * (p * (1.0 - p))) @ A + np.diag(reg)
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian, grad, rcond=None)[0]

        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = w - scale * step
            new_loss = regularized_loss(candidate, X, y, reg_strength)
            if new_loss <= loss:
                break
            scale *= 0.5
        else:
            logger.debug("Line search made no progress; stopping")
            break
        w, loss = candidate, new_loss
        trace.append(loss)

    return LinearClassifier(
        theta=w[:-1],
        intercept=w[-1],
        trained_on=n,
        n_iter=iterations,
        loss_trace=tuple(trace),
    )
