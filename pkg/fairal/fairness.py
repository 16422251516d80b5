"""
Demographic-parity disparity measures over a 2x2 (S, ŷ) contingency table,
plus the executable measure-disagreement counterexample.

Cell layout of a JointTable:

            ŷ=0   ŷ=1
    S=0      a     b
    S=1      c     d
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from fairal import glm
from fairal.models import MeasureName

logger = logging.getLogger(__name__)


class UndefinedMeasureError(ValueError):
    """A measure needs a conditional probability whose marginal is zero."""


class ContingencyError(ValueError):
    """Raised for malformed prediction/sensitive vectors."""


@dataclass(frozen=True)
class JointTable:
    """Counts (or probability masses) of the four (S, ŷ) cells."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ContingencyError(f"negative cell in {self}")

    @property
    def n(self) -> float:
        return self.a + self.b + self.c + self.d

    def swapped(self) -> "JointTable":
        """Same table with the two sensitive groups exchanged."""
        return JointTable(a=self.c, b=self.d, c=self.a, d=self.b)

    def _require_mass(self) -> float:
        n = self.n
        if n <= 0:
            raise UndefinedMeasureError("empty contingency table")
        return n


def contingency(preds: np.ndarray, S: np.ndarray) -> JointTable:
    preds = np.asarray(preds)
    S = np.asarray(S)
    if preds.ndim != 1 or S.ndim != 1 or len(preds) != len(S):
        raise ContingencyError(f"length mismatch: {preds.shape} predictions vs {S.shape} sensitive values")
    if len(preds) == 0:
        raise ContingencyError("no predictions")
    if not (np.isin(preds, (0, 1)).all() and np.isin(S, (0, 1)).all()):
        raise ContingencyError("predictions and sensitive values must be 0/1")

    pos = preds == 1
    grp = S == 1
    return JointTable(
        a=int(np.sum(~grp & ~pos)),
        b=int(np.sum(~grp & pos)),
        c=int(np.sum(grp & ~pos)),
        d=int(np.sum(grp & pos)),
    )


# ============================================================================
# Measures
# ============================================================================

def mutual_information(t: JointTable) -> float:
    """I(ŷ; S) in nats, with 0·ln(0) = 0."""
    n = t._require_mass()
    p_s = ((t.a + t.b) / n, (t.c + t.d) / n)
    p_y = ((t.a + t.c) / n, (t.b + t.d) / n)
    cells = ((t.a, 0, 0), (t.b, 0, 1), (t.c, 1, 0), (t.d, 1, 1))
    total = 0.0
    for count, s, yhat in cells:
        if count > 0:
            p = count / n
            total += p * math.log(p / (p_s[s] * p_y[yhat]))
    return max(total, 0.0)


def covariance_measure(t: JointTable) -> float:
    """|cov(S, ŷ)| of the indicator variables, population form."""
    n = t._require_mass()
    return abs(t.d / n - ((t.c + t.d) / n) * ((t.b + t.d) / n))


def _acceptance_rates(t: JointTable) -> tuple[float, float]:
    if t.a + t.b <= 0 or t.c + t.d <= 0:
        raise UndefinedMeasureError("acceptance rate undefined: a sensitive group is empty")
    return t.b / (t.a + t.b), t.d / (t.c + t.d)


def _composition_rates(t: JointTable) -> tuple[float, float]:
    n = t._require_mass()
    if t.b + t.d <= 0:
        raise UndefinedMeasureError("composition undefined: no positive predictions")
    return t.d / (t.b + t.d), (t.c + t.d) / n


def _ratio_gap(p: float, q: float) -> float:
    if p <= 0 or q <= 0:
        raise UndefinedMeasureError(f"ratio undefined for probabilities {p} and {q}")
    r = p / q
    return 1.0 - min(r, 1.0 / r)


def abs_diff_acceptance(t: JointTable) -> float:
    """|P(ŷ=1|S=0) - P(ŷ=1|S=1)|"""
    p0, p1 = _acceptance_rates(t)
    return abs(p0 - p1)


def abs_diff_composition(t: JointTable) -> float:
    """|P(S=1|ŷ=1) - P(S=1)|"""
    cond, marginal = _composition_rates(t)
    return abs(cond - marginal)


def ratio_acceptance(t: JointTable) -> float:
    return _ratio_gap(*_acceptance_rates(t))


def ratio_composition(t: JointTable) -> float:
    return _ratio_gap(*_composition_rates(t))


MEASURES: dict[MeasureName, Callable[[JointTable], float]] = {
    MeasureName.MUTUAL_INFO: mutual_information,
    MeasureName.COVARIANCE: covariance_measure,
    MeasureName.ABS_DIFF_ACCEPTANCE: abs_diff_acceptance,
    MeasureName.ABS_DIFF_COMPOSITION: abs_diff_composition,
    MeasureName.RATIO_ACCEPTANCE: ratio_acceptance,
    MeasureName.RATIO_COMPOSITION: ratio_composition,
}


def disparity(t: JointTable, measure: Union[MeasureName, str]) -> float:
    return MEASURES[MeasureName(measure)](t)


def evaluate(
    clf: glm.LinearClassifier,
    V_X: np.ndarray,
    V_S: np.ndarray,
    measure: Union[MeasureName, str],
    threshold: float = 0.5,
) -> float:
    """Disparity of the classifier's hard predictions over the verification set."""
    if len(V_X) == 0:
        raise ContingencyError("verification set is empty")
    preds = np.atleast_1d(glm.predict(clf, V_X, threshold))
    return disparity(contingency(preds, V_S), measure)


# ============================================================================
# Measure disagreement counterexample
# ============================================================================

def disagreement_tables(p: float, eps: float, construction: str = "low_acceptance") -> tuple[JointTable, JointTable]:
    """
    Joint probability tables of two classifiers C and C' over a population
    with P(S=1) = p.

    C accepts half of each group, perturbed by eps. With construction
    "low_acceptance", C' keeps C's acceptance gap at eps/(2p) but accepts only
    about a quarter of group 0, which shrinks the denominator of the
    composition measure. With "as_written" both tables are the literal
    mirrored pair, for which the acceptance gaps coincide.
    """
    if not 0.5 < p < 1.0:
        raise ValueError(f"p must lie in (0.5, 1), got {p}")
    if not 0.0 < eps < (1.0 - p) / 2:
        raise ValueError(f"eps must lie in (0, (1-p)/2), got {eps}")

    c_table = JointTable(
        a=(1 - p - eps) / 2, b=(1 - p + eps) / 2,
        c=(p + eps) / 2, d=(p - eps) / 2,
    )
    if construction == "as_written":
        c_prime = JointTable(
            a=(1 - p + eps) / 2, b=(1 - p - eps) / 2,
            c=(p - eps) / 2, d=(p + eps) / 2,
        )
    elif construction == "low_acceptance":
        base = (1 - p) / 4
        top = base + eps / (2 * p)
        c_prime = JointTable(
            a=(1 - p) * (1 - base), b=(1 - p) * base,
            c=p * (1 - top), d=p * top,
        )
    else:
        raise ValueError(f"unknown construction {construction!r}")
    return c_table, c_prime


def measure_disagreement_fixture(p: float, eps: float, construction: str = "low_acceptance") -> dict[str, float]:
    """F1 (acceptance difference) and F2 (composition difference) of C and C'."""
    c_table, c_prime = disagreement_tables(p, eps, construction)
    return {
        "F1_C": abs_diff_acceptance(c_table),
        "F1_Cprime": abs_diff_acceptance(c_prime),
        "F2_C": abs_diff_composition(c_table),
        "F2_Cprime": abs_diff_composition(c_prime),
    }


def preference_flips(values: dict[str, float]) -> bool:
    """True when F1 prefers C' while F2 prefers C."""
    return values["F1_Cprime"] < values["F1_C"] and values["F2_C"] < values["F2_Cprime"]
