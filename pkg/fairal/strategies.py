"""
Sample-selection strategies: random, entropy-based active learning, fair
active learning with expected unfairness reduction (FAL), and the
covariance-based surrogate (FBC) with its constant-time aggregates.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from fairal import fairness, glm
from fairal.dataset import Candidates
from fairal.models import MeasureName

logger = logging.getLogger(__name__)


class EmptyPoolError(ValueError):
    """Raised when a strategy is asked to select from an empty pool."""


class DistributionError(ValueError):
    """Raised for a malformed probability vector."""


@dataclass(frozen=True)
class FitParams:
    """Hyperparameters for every classifier trained during a run."""
    reg_strength: float = 1.0
    max_iter: int = 100
    tol: float = 1e-6

    def train(self, X: np.ndarray, y: np.ndarray) -> glm.LinearClassifier:
        return glm.train(X, y, self.reg_strength, self.max_iter, self.tol)


@dataclass(frozen=True)
class SelectionScore:
    candidate_id: int
    entropy_term: float
    fairness_term: float
    combined: float
    raw_entropy: float
    raw_fairness: float


def _require_candidates(candidates: Candidates) -> None:
    if len(candidates) == 0:
        raise EmptyPoolError("no unlabeled candidates left")


# ============================================================================
# Entropy and random sampling
# ============================================================================

def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats with 0·ln 0 = 0."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise DistributionError("expected a non-empty probability vector")
    if (probs < 0).any() or (probs > 1).any() or abs(probs.sum() - 1.0) > 1e-9:
        raise DistributionError(f"not a probability distribution: {probs}")
    nz = probs[probs > 0]
    return float(-np.sum(nz * np.log(nz)))


def binary_entropy(p1: np.ndarray) -> np.ndarray:
    """Entropy of (1 - p1, p1) for each entry; p1 is already clamped away from 0 and 1."""
    p1 = np.asarray(p1, dtype=float)
    p0 = 1.0 - p1
    return -(p0 * np.log(p0) + p1 * np.log(p1))


def select_entropy(candidates: Candidates, clf: glm.LinearClassifier) -> int:
    """Candidate whose predictive distribution has maximal entropy; ties → smallest id."""
    _require_candidates(candidates)
    h = binary_entropy(glm.predict_proba(clf, candidates.X))
    return int(candidates.ids[int(np.argmax(h))])


def select_random(candidates: Candidates, rng: np.random.Generator) -> int:
    _require_candidates(candidates)
    return int(candidates.ids[int(rng.integers(len(candidates)))])


def subsample_candidates(candidates: Candidates, m: Optional[int], rng: np.random.Generator) -> Candidates:
    """Random subset of m candidates, kept in ascending id order."""
    if m is None or m >= len(candidates):
        return candidates
    rows = np.sort(rng.choice(len(candidates), size=m, replace=False))
    return Candidates(ids=candidates.ids[rows], X=candidates.X[rows], S=candidates.S[rows])


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """(v - min) / (max - min); a constant vector maps to zeros."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def _combine(
    candidates: Candidates,
    raw_entropy: np.ndarray,
    raw_fairness: np.ndarray,
    alpha: float,
) -> tuple[int, list[SelectionScore]]:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    h = minmax_normalize(raw_entropy)
    f = minmax_normalize(raw_fairness)
    combined = alpha * h + (1.0 - alpha) * f
    best = int(np.argmax(combined))
    scores = [
        SelectionScore(
            candidate_id=int(cid),
            entropy_term=float(h[j]),
            fairness_term=float(f[j]),
            combined=float(combined[j]),
            raw_entropy=float(raw_entropy[j]),
            raw_fairness=float(raw_fairness[j]),
        )
        for j, cid in enumerate(candidates.ids)
    ]
    return int(candidates.ids[best]), scores


# ============================================================================
# FAL: expected unfairness reduction
# ============================================================================

def expected_fairness(
    x: np.ndarray,
    L_X: np.ndarray,
    L_y: np.ndarray,
    clf: glm.LinearClassifier,
    V_X: np.ndarray,
    V_S: np.ndarray,
    measure: Union[MeasureName, str],
    threshold: float = 0.5,
    fit: FitParams = FitParams(),
) -> float:
    """
    Σ_k F(C^k)·P(y=k|x), where C^k is retrained on L plus (x, k) and
    P comes from the current classifier.
    """
    if len(L_y) < 1:
        raise glm.TrainingError("expected fairness needs at least one labeled record")
    p1 = glm.predict_proba(clf, x)
    X_aug = np.vstack([L_X, x])
    total = 0.0
    for k, p_k in ((0, 1.0 - p1), (1, p1)):
        clf_k = fit.train(X_aug, np.append(L_y, k))
        total += fairness.evaluate(clf_k, V_X, V_S, measure, threshold) * p_k
    return total


def select_fal(
    candidates: Candidates,
    L_X: np.ndarray,
    L_y: np.ndarray,
    clf: glm.LinearClassifier,
    V_X: np.ndarray,
    V_S: np.ndarray,
    measure: Union[MeasureName, str],
    alpha: float,
    threshold: float = 0.5,
    fit: FitParams = FitParams(),
) -> tuple[int, list[SelectionScore]]:
    """
    argmax over candidates of α·H̃ + (1-α)·F̃, where H̃ is normalized entropy
    and F̃ is the normalized expected fairness improvement F(C_{t-1}) - E[F^i].

    The fairness term is not evaluated when α = 1. A candidate whose expected
    fairness is undefined gets the worst defined improvement; if the current
    model's disparity is undefined the fairness term is zero for everyone.
    """
    _require_candidates(candidates)
    raw_entropy = binary_entropy(glm.predict_proba(clf, candidates.X))
    raw_fairness = np.zeros(len(candidates))

    if alpha < 1.0:
        try:
            current = fairness.evaluate(clf, V_X, V_S, measure, threshold)
        except fairness.UndefinedMeasureError:
            logger.debug("Current disparity undefined; fairness term skipped")
            current = None

        if current is not None:
            improvements = np.full(len(candidates), np.nan)
            for j in range(len(candidates)):
                try:
                    expected = expected_fairness(
                        candidates.X[j], L_X, L_y, clf, V_X, V_S, measure, threshold, fit
                    )
                except fairness.UndefinedMeasureError:
                    continue
                improvements[j] = current - expected
            defined = ~np.isnan(improvements)
            if defined.any():
                raw_fairness = np.where(defined, improvements, improvements[defined].min())

    return _combine(candidates, raw_entropy, raw_fairness, alpha)


# ============================================================================
# FBC: covariance aggregates
# ============================================================================

@dataclass(frozen=True, eq=False)
class SensitiveCov:
    """cov(S, x_i) over the initial unlabeled pool; fixed for a run."""
    cov_sx: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov_sx, dtype=float, copy=True)
        cov.setflags(write=False)
        object.__setattr__(self, "cov_sx", cov)


def init_sensitive_cov(X_U: np.ndarray, S_U: np.ndarray) -> SensitiveCov:
    """Population covariance E[S·x_i] - E[S]·E[x_i] for every feature."""
    X_U = np.asarray(X_U, dtype=float)
    S_U = np.asarray(S_U, dtype=float)
    if X_U.shape[0] == 0:
        raise EmptyPoolError("cannot compute sensitive covariance of an empty pool")
    cov = (S_U @ X_U) / len(S_U) - S_U.mean() * X_U.mean(axis=0)
    return SensitiveCov(cov_sx=cov)


@dataclass(frozen=True, eq=False)
class CovAggregates:
    """Running sums over L: n, G_y = Σy, G_x[i] = Σx_i, G_z[i] = Σx_i·y."""

    n: int
    G_y: float
    G_x: np.ndarray
    G_z: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "CovAggregates":
        return cls(n=0, G_y=0.0, G_x=np.zeros(d), G_z=np.zeros(d))

    @classmethod
    def from_labeled(cls, L_X: np.ndarray, L_y: np.ndarray) -> "CovAggregates":
        agg = cls.empty(np.asarray(L_X).shape[1])
        for x, y in zip(L_X, L_y):
            agg = update_aggregates(agg, x, y)
        return agg

    @property
    def d(self) -> int:
        return self.G_x.shape[0]


def update_aggregates(agg: CovAggregates, x: np.ndarray, y: float) -> CovAggregates:
    x = np.asarray(x, dtype=float)
    if x.shape != (agg.d,):
        raise glm.DimensionError(f"expected {agg.d} features, got shape {x.shape}")
    return CovAggregates(n=agg.n + 1, G_y=agg.G_y + y, G_x=agg.G_x + x, G_z=agg.G_z + x * y)


def _population_cov(g_z, g_x, g_y, n):
    # Shared by the maintained and hypothetical forms so both round identically
    return g_z / n - (g_x / n) * (g_y / n)


def cov_from_aggregates(agg: CovAggregates, i: Optional[int] = None) -> Union[float, np.ndarray]:
    """cov_L(x_i, y) for feature i, or the whole vector when i is None."""
    if agg.n < 1:
        raise ValueError("covariance needs at least one labeled record")
    if i is None:
        return _population_cov(agg.G_z, agg.G_x, agg.G_y, agg.n)
    return float(_population_cov(agg.G_z[i], agg.G_x[i], agg.G_y, agg.n))


def hypothetical_cov(agg: CovAggregates, x: np.ndarray, i: int, k: int) -> float:
    """cov(x_i, y) after adding (x, k) to L, in O(1)."""
    if agg.n < 1:
        raise ValueError("hypothetical covariance needs at least one labeled record")
    x_i = float(x[i])
    return float(_population_cov(agg.G_z[i] + x_i * k, agg.G_x[i] + x_i, agg.G_y + k, agg.n + 1))


def _hypothetical_cov_matrix(agg: CovAggregates, X: np.ndarray, k: int) -> np.ndarray:
    """hypothetical_cov for every candidate row and feature at once."""
    return _population_cov(agg.G_z + X * k, agg.G_x + X, agg.G_y + k, agg.n + 1)


def expected_cov_improvement(agg: CovAggregates, x: np.ndarray, clf: glm.LinearClassifier) -> np.ndarray:
    """Per-feature Σ_k (|cov_i| - |cov_i after (x, k)|)·P(y=k|x)."""
    x = np.asarray(x, dtype=float)
    p1 = glm.predict_proba(clf, x)
    current = np.abs(cov_from_aggregates(agg))
    hyp0 = np.abs(_hypothetical_cov_matrix(agg, x[None, :], 0)[0])
    hyp1 = np.abs(_hypothetical_cov_matrix(agg, x[None, :], 1)[0])
    return (current - hyp0) * (1.0 - p1) + (current - hyp1) * p1


def covariance_weights(theta: np.ndarray, sens_cov: SensitiveCov, use_abs: bool = True) -> np.ndarray:
    """Per-feature multiplier θ_i·cov(S, x_i), by magnitude unless use_abs is False."""
    weights = np.asarray(theta, dtype=float) * sens_cov.cov_sx
    return np.abs(weights) if use_abs else weights


def fbc_score(
    x: np.ndarray,
    agg: CovAggregates,
    clf: glm.LinearClassifier,
    sens_cov: SensitiveCov,
    use_abs: bool = True,
) -> float:
    """Expected fairness improvement by covariance for one candidate."""
    weights = covariance_weights(clf.theta, sens_cov, use_abs)
    return float(weights @ expected_cov_improvement(agg, x, clf))


def select_fbc(
    candidates: Candidates,
    agg: CovAggregates,
    clf: glm.LinearClassifier,
    sens_cov: SensitiveCov,
    alpha: float,
    use_abs: bool = True,
) -> tuple[int, list[SelectionScore]]:
    """FAL objective with the fairness term replaced by the FbC score, O(|U|·d)."""
    _require_candidates(candidates)
    p1 = glm.predict_proba(clf, candidates.X)
    raw_entropy = binary_entropy(p1)

    current = np.abs(cov_from_aggregates(agg))
    gain0 = current - np.abs(_hypothetical_cov_matrix(agg, candidates.X, 0))
    gain1 = current - np.abs(_hypothetical_cov_matrix(agg, candidates.X, 1))
    improvement = gain0 * (1.0 - p1)[:, None] + gain1 * p1[:, None]
    raw_fairness = improvement @ covariance_weights(clf.theta, sens_cov, use_abs)

    return _combine(candidates, raw_entropy, raw_fairness, alpha)


def covariance_identity_fixture(n: int = 200, d: int = 5, seed: int = 0) -> dict[str, float]:
    """
    Compare cov(S, θᵀX) computed directly with θᵀ·cov(S, X) on random data.
    The two agree for any θ because covariance is linear in its second argument.
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    S = rng.integers(0, 2, size=n)
    X[:, 0] += S
    theta = rng.normal(size=d)
    scores = X @ theta
    direct = float(np.mean(S * scores) - S.mean() * scores.mean())
    via_features = float(theta @ init_sensitive_cov(X, S).cov_sx)
    return {"direct": direct, "via_features": via_features, "abs_error": abs(direct - via_features)}


# ============================================================================
# Debug output
# ============================================================================

SCORE_FIELDS = ["candidate_id", "entropy_term", "fairness_term", "combined", "raw_entropy", "raw_fairness"]


def dump_scores(scores: list[SelectionScore], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SCORE_FIELDS)
        for s in scores:
            writer.writerow([s.candidate_id, *(format(getattr(s, k), ".17g") for k in SCORE_FIELDS[1:])])
    return path
