"""
Tabular data ingestion, standardization, splitting and the labeled/unlabeled
pools with their budgeted labeling oracle.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for unreadable or malformed datasets."""


class OracleError(RuntimeError):
    """Raised when the labeling oracle refuses a request."""


class BudgetExhaustedError(OracleError):
    pass


class NotInPoolError(OracleError):
    pass


# ============================================================================
# Schema
# ============================================================================

class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class LabelRule(BaseModel):
    """Numeric label binarization: y = 1 iff value > gt."""
    gt: float


class DatasetSchema(BaseModel):
    """Column roles for a CSV file."""

    features: list[str] = Field(min_length=1)
    sensitive: str
    label: str
    kinds: dict[str, ColumnKind] = {}

    # Keep only rows whose raw sensitive value is one of these two
    sensitive_keep: Optional[list[str]] = None
    # Raw sensitive category mapped to 1 (default: lexicographically larger)
    sensitive_positive: Optional[str] = None
    # Raw label category mapped to 1 (default: lexicographically larger)
    positive_label: Optional[str] = None
    positive_if: Optional[LabelRule] = None

    @model_validator(mode="after")
    def _check_roles(self) -> "DatasetSchema":
        if self.sensitive in self.features:
            raise ValueError(f"sensitive column {self.sensitive!r} may not be a feature")
        if self.label in self.features:
            raise ValueError(f"label column {self.label!r} may not be a feature")
        if self.sensitive_keep is not None and len(self.sensitive_keep) != 2:
            raise ValueError("sensitive_keep must name exactly two categories")
        return self

    def kind_of(self, column: str) -> ColumnKind:
        return self.kinds.get(column, ColumnKind.NUMERIC)


def load_schema(path: Union[str, Path]) -> DatasetSchema:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"schema file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return DatasetSchema.model_validate(json.load(f))


# ============================================================================
# Dataset
# ============================================================================

@dataclass(frozen=True, eq=False)
class DataPoint:
    id: int
    X: np.ndarray
    S: int
    y: int


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-feature statistics used to standardize, for reuse on held-out data."""
    kept: tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Column-oriented dataset. Row i is the point with id i.

    `source_ids` keeps the row index in the originally loaded table so splits
    and subsamples stay traceable.
    """

    X: np.ndarray
    S: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    K: int = 2
    source_ids: Optional[np.ndarray] = None
    standardization: Optional[Standardization] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim != 2:
            raise DatasetError("feature matrix must be two-dimensional")
        S = np.array(self.S, dtype=int, copy=True)
        y = np.array(self.y, dtype=int, copy=True)
        n = X.shape[0]
        if S.shape != (n,) or y.shape != (n,):
            raise DatasetError("X, S and y must have the same number of rows")
        if len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names does not match the number of columns")
        if n and not np.isin(S, (0, 1)).all():
            raise DatasetError("sensitive attribute must be 0/1")
        if n and (y.min() < 0 or y.max() >= self.K):
            raise DatasetError(f"labels must lie in 0..{self.K - 1}")
        source = np.arange(n) if self.source_ids is None else np.array(self.source_ids, dtype=int)
        for arr in (X, S, y, source):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "source_ids", source)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def point(self, i: int) -> DataPoint:
        return DataPoint(id=i, X=self.X[i], S=int(self.S[i]), y=int(self.y[i]))

    @property
    def points(self) -> list[DataPoint]:
        return [self.point(i) for i in range(self.n)]

    def take(self, rows: np.ndarray) -> "Dataset":
        """Subset of rows, re-indexed densely from 0."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            X=self.X[rows],
            S=self.S[rows],
            y=self.y[rows],
            feature_names=self.feature_names,
            K=self.K,
            source_ids=self.source_ids[rows],
            standardization=self.standardization,
        )


def _binary_codes(values: list[str], positive: Optional[str], column: str) -> np.ndarray:
    categories = sorted(set(values))
    if len(categories) > 2:
        raise DatasetError(
            f"column {column!r} has {len(categories)} categories, expected at most 2: {categories[:5]}"
        )
    if positive is not None:
        if positive not in categories:
            raise DatasetError(f"category {positive!r} not present in column {column!r}")
        one = positive
    else:
        one = categories[-1] if len(categories) == 2 else None
    return np.array([1 if v == one else 0 for v in values], dtype=int)


def load_csv(path: Union[str, Path], schema: DatasetSchema) -> Dataset:
    """Parse a CSV file into a Dataset according to the schema's column roles."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"dataset file is empty: {path}")
        rows = [[cell.strip() for cell in row] for row in reader if row]

    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DatasetError(f"data row {r}: expected {len(header)} cells, got {len(row)}")

    index = {name: i for i, name in enumerate(header)}
    for column in [*schema.features, schema.sensitive, schema.label]:
        if column not in index:
            raise DatasetError(f"unknown column {column!r} (header: {header})")

    s_col = index[schema.sensitive]
    if schema.sensitive_keep is not None:
        keep = set(schema.sensitive_keep)
        before = len(rows)
        rows = [row for row in rows if row[s_col] in keep]
        logger.info(f"Kept {len(rows)} of {before} rows with {schema.sensitive} in {sorted(keep)}")
    if not rows:
        raise DatasetError(f"no data rows in {path}")

    S = _binary_codes([row[s_col] for row in rows], schema.sensitive_positive, schema.sensitive)

    y_col = index[schema.label]
    if schema.positive_if is not None:
        try:
            raw = np.array([float(row[y_col]) for row in rows])
        except ValueError as e:
            raise DatasetError(f"non-numeric cell in label column {schema.label!r}: {e}") from e
        y = (raw > schema.positive_if.gt).astype(int)
    else:
        y = _binary_codes([row[y_col] for row in rows], schema.positive_label, schema.label)

    columns: list[np.ndarray] = []
    names: list[str] = []
    for feature in schema.features:
        col = index[feature]
        raw_values = [row[col] for row in rows]
        if schema.kind_of(feature) == ColumnKind.CATEGORICAL:
            # One-hot with the first sorted category as the dropped reference
            for category in sorted(set(raw_values))[1:]:
                columns.append(np.array([1.0 if v == category else 0.0 for v in raw_values]))
                names.append(f"{feature}={category}")
        else:
            values = np.empty(len(rows))
            for r, cell in enumerate(raw_values):
                try:
                    values[r] = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"non-numeric cell {cell!r} in feature column {feature!r} at data row {r + 1}"
                    ) from None
            columns.append(values)
            names.append(feature)

    X = np.column_stack(columns) if columns else np.empty((len(rows), 0))
    logger.info(f"Loaded {len(rows)} rows, {X.shape[1]} features from {path}")
    return Dataset(X=X, S=S, y=y, feature_names=tuple(names))


def write_csv(ds: Dataset, path: Union[str, Path], sensitive: str = "s", label: str = "y") -> Path:
    """Write a dataset back out with one column per feature plus sensitive and label columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([*ds.feature_names, sensitive, label])
        for i in range(ds.n):
            writer.writerow([*(format(v, ".17g") for v in ds.X[i]), int(ds.S[i]), int(ds.y[i])])
    return path


# ============================================================================
# Standardization and splitting
# ============================================================================

def standardize(ds: Dataset) -> Dataset:
    """
    Standardize every feature to zero mean and unit population variance.
    Constant columns are dropped with a warning.
    """
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    kept = tuple(int(i) for i in np.flatnonzero(std > 1e-12))
    dropped = [ds.feature_names[i] for i in range(ds.d) if i not in kept]
    if dropped:
        logger.warning(f"Dropping constant feature columns: {dropped}")

    stats = Standardization(kept=kept, mean=mean[list(kept)], std=std[list(kept)])
    return apply_standardization(ds, stats)


def apply_standardization(ds: Dataset, stats: Standardization) -> Dataset:
    """Apply previously computed statistics (e.g. training-pool statistics to the test set)."""
    cols = list(stats.kept)
    X = (ds.X[:, cols] - stats.mean) / stats.std
    return Dataset(
        X=X,
        S=ds.S,
        y=ds.y,
        feature_names=tuple(ds.feature_names[i] for i in cols),
        K=ds.K,
        source_ids=ds.source_ids,
        standardization=stats,
    )


def split(ds: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random train/test split; the train side gets ceil(n * train_frac) rows."""
    if not 0.0 < train_frac < 1.0:
        raise DatasetError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = math.ceil(round(ds.n * train_frac, 9))
    if n_train <= 0 or n_train >= ds.n:
        raise DatasetError(f"split of {ds.n} rows at {train_frac} leaves one side empty")

    order = np.random.default_rng(seed).permutation(ds.n)
    train_rows = np.sort(order[:n_train])
    test_rows = np.sort(order[n_train:])
    return ds.take(train_rows), ds.take(test_rows)


def subsample(ds: Dataset, m: int, seed: int) -> Dataset:
    """Random subset of m rows (the whole dataset when m >= n)."""
    if m >= ds.n:
        return ds
    rows = np.sort(np.random.default_rng(seed).choice(ds.n, size=m, replace=False))
    return ds.take(rows)


# ============================================================================
# Pools and oracle
# ============================================================================

class Oracle:
    """Dataset-backed labeling oracle; labels are hidden until purchased."""

    def __init__(self, labels: np.ndarray, budget: int):
        if budget < 0:
            raise OracleError(f"budget must be nonnegative, got {budget}")
        self._labels = np.array(labels, dtype=int, copy=True)
        self._labels.setflags(write=False)
        self.budget = budget
        self.calls_made = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.calls_made

    def reveal_seed(self, point_id: int) -> int:
        """Reveal a seed label; does not count as a purchase."""
        return int(self._labels[point_id])

    def purchase(self, point_id: int) -> int:
        if self.calls_made >= self.budget:
            raise BudgetExhaustedError(f"labeling budget of {self.budget} exhausted")
        self.calls_made += 1
        return int(self._labels[point_id])


@dataclass(frozen=True, eq=False)
class Candidates:
    """Unlabeled points offered to a selection strategy, ids ascending."""
    ids: np.ndarray
    X: np.ndarray
    S: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class PoolState:
    """
    Unlabeled pool U, labeled pool L, frozen verification snapshot V and the
    remaining oracle budget. Mutated only through `oracle_label`.
    """

    dataset: Dataset
    oracle: Oracle
    unlabeled: set[int]
    labeled_ids: list[int] = field(default_factory=list)
    labeled_y: list[int] = field(default_factory=list)
    verification_ids: tuple[int, ...] = ()

    @property
    def budget_remaining(self) -> int:
        return self.oracle.remaining

    @property
    def V_X(self) -> np.ndarray:
        return self.dataset.X[list(self.verification_ids)]

    @property
    def V_S(self) -> np.ndarray:
        return self.dataset.S[list(self.verification_ids)]

    @property
    def L_X(self) -> np.ndarray:
        return self.dataset.X[self.labeled_ids] if self.labeled_ids else np.empty((0, self.dataset.d))

    @property
    def L_S(self) -> np.ndarray:
        return self.dataset.S[self.labeled_ids] if self.labeled_ids else np.empty(0, dtype=int)

    @property
    def L_y(self) -> np.ndarray:
        return np.array(self.labeled_y, dtype=int)

    @property
    def labeled(self) -> list[tuple[np.ndarray, int, int]]:
        """L as (X, S, y) records in labeling order."""
        return [
            (self.dataset.X[i], int(self.dataset.S[i]), y)
            for i, y in zip(self.labeled_ids, self.labeled_y)
        ]

    def candidates(self) -> Candidates:
        ids = np.array(sorted(self.unlabeled), dtype=int)
        return Candidates(ids=ids, X=self.dataset.X[ids], S=self.dataset.S[ids])


def init_pool(train: Dataset, n_seed_labels: int, budget: int, seed: int) -> PoolState:
    """Snapshot V, reveal n_seed_labels random seed labels for free, set the budget."""
    if n_seed_labels < 0 or n_seed_labels > train.n:
        raise DatasetError(f"cannot seed {n_seed_labels} labels from a pool of {train.n}")
    if budget < 0:
        raise DatasetError(f"budget must be nonnegative, got {budget}")

    oracle = Oracle(train.y, budget)
    pool = PoolState(
        dataset=train,
        oracle=oracle,
        unlabeled=set(range(train.n)),
        verification_ids=tuple(range(train.n)),
    )
    seeds = np.random.default_rng(seed).choice(train.n, size=n_seed_labels, replace=False)
    for point_id in sorted(int(i) for i in seeds):
        pool.unlabeled.discard(point_id)
        pool.labeled_ids.append(point_id)
        pool.labeled_y.append(oracle.reveal_seed(point_id))
    return pool


def oracle_label(pool: PoolState, point_id: int) -> int:
    """Buy the label of an unlabeled point and move it from U to L."""
    point_id = int(point_id)
    if point_id not in pool.unlabeled:
        raise NotInPoolError(f"point {point_id} is not in the unlabeled pool")
    if pool.budget_remaining <= 0:
        raise BudgetExhaustedError("labeling budget exhausted")

    label = pool.oracle.purchase(point_id)
    pool.unlabeled.remove(point_id)
    pool.labeled_ids.append(point_id)
    pool.labeled_y.append(label)
    return label
