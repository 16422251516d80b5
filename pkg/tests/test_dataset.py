import json
from pathlib import Path

import numpy as np
import pytest

from fairal.dataset import (
    BudgetExhaustedError,
    Dataset,
    DatasetError,
    DatasetSchema,
    NotInPoolError,
    Oracle,
    OracleError,
    apply_standardization,
    init_pool,
    load_csv,
    load_schema,
    oracle_label,
    split,
    standardize,
    subsample,
    write_csv,
)

REPO_ROOT = Path(__file__).resolve().parent.parent


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _dataset(n: int, d: int = 2, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(
        X=rng.normal(size=(n, d)),
        S=rng.integers(0, 2, size=n),
        y=rng.integers(0, 2, size=n),
        feature_names=tuple(f"f{i}" for i in range(d)),
    )


# ============================================================================
# load_csv
# ============================================================================

def test_load_four_row_file(tmp_path):
    path = _write(tmp_path / "d.csv", "a,b,s,y\n1,2,m,0\n3,4,f,1\n5,6,m,1\n7,8,f,0\n")
    ds = load_csv(path, DatasetSchema(features=["a", "b"], sensitive="s", label="y"))
    assert ds.n == 4
    assert ds.d == 2
    np.testing.assert_array_equal(ds.X[:, 0], [1, 3, 5, 7])
    # "f" < "m" lexicographically, so f -> 0
    np.testing.assert_array_equal(ds.S, [1, 0, 1, 0])
    np.testing.assert_array_equal(ds.y, [0, 1, 1, 0])
    np.testing.assert_array_equal(ds.source_ids, [0, 1, 2, 3])


def test_categorical_columns_are_one_hot_with_reference_dropped(tmp_path):
    path = _write(tmp_path / "d.csv", "a,c,s,y\n1,x,0,0\n2,y,1,1\n3,z,0,1\n")
    schema = DatasetSchema(features=["a", "c"], kinds={"c": "categorical"}, sensitive="s", label="y")
    ds = load_csv(path, schema)
    assert ds.feature_names == ("a", "c=y", "c=z")
    np.testing.assert_array_equal(ds.X[:, 1:], [[0, 0], [1, 0], [0, 1]])


def test_label_threshold_and_sensitive_filter(tmp_path):
    path = _write(
        tmp_path / "d.csv",
        "age,race,recid\n20,A,0\n30,B,2\n40,C,1\n50,A,3\n",
    )
    schema = DatasetSchema(
        features=["age"], sensitive="race", sensitive_keep=["A", "B"],
        label="recid", positive_if={"gt": 0},
    )
    ds = load_csv(path, schema)
    assert ds.n == 3
    np.testing.assert_array_equal(ds.S, [0, 1, 0])
    np.testing.assert_array_equal(ds.y, [0, 1, 1])


def test_positive_overrides(tmp_path):
    path = _write(tmp_path / "d.csv", "a,s,y\n1,m,<=50K\n2,f,>50K\n")
    schema = DatasetSchema(
        features=["a"], sensitive="s", sensitive_positive="f", label="y", positive_label="<=50K",
    )
    ds = load_csv(path, schema)
    np.testing.assert_array_equal(ds.S, [0, 1])
    np.testing.assert_array_equal(ds.y, [1, 0])


def test_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_csv(tmp_path / "nope.csv", DatasetSchema(features=["a"], sensitive="s", label="y"))


def test_unknown_column(tmp_path):
    path = _write(tmp_path / "d.csv", "a,s,y\n1,0,0\n")
    with pytest.raises(DatasetError, match="unknown column 'b'"):
        load_csv(path, DatasetSchema(features=["a", "b"], sensitive="s", label="y"))


def test_non_numeric_feature_cell(tmp_path):
    path = _write(tmp_path / "d.csv", "a,s,y\n1,0,0\nhello,1,1\n")
    with pytest.raises(DatasetError, match="non-numeric"):
        load_csv(path, DatasetSchema(features=["a"], sensitive="s", label="y"))


def test_sensitive_with_three_categories(tmp_path):
    path = _write(tmp_path / "d.csv", "a,s,y\n1,x,0\n2,y,1\n3,z,1\n")
    with pytest.raises(DatasetError, match="at most 2"):
        load_csv(path, DatasetSchema(features=["a"], sensitive="s", label="y"))


def test_short_row_rejected(tmp_path):
    path = _write(tmp_path / "d.csv", "a,b,s,y\n1,2,x,0\n3,4\n5,6,z,1\n")
    with pytest.raises(DatasetError, match="data row 2: expected 4 cells, got 2"):
        load_csv(path, DatasetSchema(features=["a", "b"], sensitive="s", label="y"))


def test_long_row_rejected(tmp_path):
    path = _write(tmp_path / "d.csv", "a,s,y\n1,0,0,9\n")
    with pytest.raises(DatasetError, match="expected 3 cells, got 4"):
        load_csv(path, DatasetSchema(features=["a"], sensitive="s", label="y"))


def test_schema_rejects_sensitive_feature():
    with pytest.raises(ValueError):
        DatasetSchema(features=["a", "s"], sensitive="s", label="y")


def test_shipped_sample_loads():
    schema = load_schema(REPO_ROOT / "schemas" / "sample_compas.json")
    ds = load_csv(REPO_ROOT / "data" / "sample_compas.csv", schema)
    assert ds.n == 60
    assert ds.feature_names == ("age", "priors_count", "charge_degree=M")
    assert set(np.unique(ds.S)) == {0, 1}


def test_write_csv_round_trip(tmp_path):
    ds = Dataset(
        X=[[0.1, -2.5], [1.0 / 3.0, 4.0], [7.25, 1e-9]], S=[0, 1, 1], y=[1, 0, 1], feature_names=("a", "b"),
    )
    path = write_csv(ds, tmp_path / "out.csv")
    back = load_csv(path, DatasetSchema(features=list(ds.feature_names), sensitive="s", label="y"))
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)


# ============================================================================
# standardize
# ============================================================================

def test_standardize_three_points():
    ds = Dataset(X=[[1.0], [2.0], [3.0]], S=[0, 1, 0], y=[0, 1, 1], feature_names=("a",))
    out = standardize(ds)
    np.testing.assert_allclose(out.X[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    assert out.standardization.mean[0] == pytest.approx(2.0)


def test_standardize_moments_and_fixed_point():
    ds = _dataset(50, d=4, seed=3)
    once = standardize(ds)
    np.testing.assert_allclose(once.X.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(once.X.var(axis=0), 1.0, atol=1e-9)
    twice = standardize(once)
    np.testing.assert_allclose(twice.X, once.X, atol=1e-12)


def test_constant_column_dropped(caplog):
    ds = Dataset(X=[[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]], S=[0, 1, 0], y=[0, 1, 1], feature_names=("c", "a"))
    out = standardize(ds)
    assert out.d == 1
    assert out.feature_names == ("a",)
    assert "constant" in caplog.text


def test_test_set_uses_training_statistics():
    train = Dataset(X=[[0.0], [2.0]], S=[0, 1], y=[0, 1], feature_names=("a",))
    test = Dataset(X=[[4.0]], S=[0], y=[1], feature_names=("a",))
    stats = standardize(train).standardization
    out = apply_standardization(test, stats)
    assert out.X[0, 0] == pytest.approx(3.0)


# ============================================================================
# split / subsample
# ============================================================================

def test_split_sizes_and_determinism():
    ds = _dataset(10)
    train, test = split(ds, 0.6, seed=7)
    assert (train.n, test.n) == (6, 4)
    again, _ = split(ds, 0.6, seed=7)
    np.testing.assert_array_equal(train.source_ids, again.source_ids)
    assert sorted([*train.source_ids, *test.source_ids]) == list(range(10))
    np.testing.assert_array_equal(train.X, ds.X[train.source_ids])


def test_split_full_scale_sizes():
    ds = Dataset(X=np.zeros((5875, 1)), S=np.zeros(5875), y=np.zeros(5875), feature_names=("a",))
    train, test = split(ds, 0.6, seed=0)
    assert (train.n, test.n) == (3525, 2350)


def test_split_seed_sensitivity():
    ds = _dataset(100)
    a, _ = split(ds, 0.6, seed=1)
    b, _ = split(ds, 0.6, seed=2)
    assert set(a.source_ids) != set(b.source_ids)


@pytest.mark.parametrize("frac", [0.0, 1.0, 1.5])
def test_split_bad_fraction(frac):
    with pytest.raises(DatasetError):
        split(_dataset(10), frac, seed=0)


def test_split_degenerate_side():
    with pytest.raises(DatasetError, match="empty"):
        split(_dataset(1), 0.6, seed=0)


def test_subsample():
    ds = _dataset(30)
    sub = subsample(ds, 10, seed=1)
    assert sub.n == 10
    assert len(set(sub.source_ids)) == 10
    assert subsample(ds, 100, seed=1) is ds


# ============================================================================
# Pools and oracle
# ============================================================================

def test_init_pool_default_sizes():
    pool = init_pool(_dataset(40), n_seed_labels=6, budget=200, seed=0)
    assert len(pool.labeled_ids) == 6
    assert pool.budget_remaining == 200
    assert len(pool.unlabeled) == 34
    assert len(pool.verification_ids) == 40
    assert pool.oracle.calls_made == 0


def test_init_pool_without_seed_labels():
    pool = init_pool(_dataset(10), n_seed_labels=0, budget=5, seed=0)
    assert pool.labeled_ids == []
    assert pool.unlabeled == set(range(10))
    assert pool.L_X.shape == (0, 2)


def test_init_pool_deterministic():
    ds = _dataset(40)
    a = init_pool(ds, 6, 10, seed=4)
    b = init_pool(ds, 6, 10, seed=4)
    assert a.labeled_ids == b.labeled_ids


def test_init_pool_too_many_seeds():
    with pytest.raises(DatasetError):
        init_pool(_dataset(5), n_seed_labels=6, budget=1, seed=0)


def test_oracle_label_last_unit_of_budget():
    ds = _dataset(10)
    pool = init_pool(ds, 2, budget=1, seed=0)
    target = min(pool.unlabeled)
    assert oracle_label(pool, target) == ds.y[target]
    assert pool.budget_remaining == 0
    assert pool.oracle.calls_made == 1
    with pytest.raises(BudgetExhaustedError):
        oracle_label(pool, min(pool.unlabeled))


def test_oracle_enforces_its_own_budget():
    oracle = Oracle(np.array([0, 1, 1]), budget=2)
    assert oracle.purchase(1) == 1
    assert oracle.purchase(0) == 0
    assert oracle.remaining == 0
    with pytest.raises(BudgetExhaustedError):
        oracle.purchase(2)
    assert oracle.calls_made == 2
    assert oracle.reveal_seed(2) == 1


def test_oracle_rejects_negative_budget():
    with pytest.raises(OracleError):
        Oracle(np.array([0, 1]), budget=-1)


def test_oracle_refuses_labeled_point():
    pool = init_pool(_dataset(10), 2, budget=5, seed=0)
    with pytest.raises(NotInPoolError):
        oracle_label(pool, pool.labeled_ids[0])


def test_pool_bookkeeping_across_calls():
    ds = _dataset(30)
    pool = init_pool(ds, 3, budget=10, seed=1)
    v_before = pool.V_X.copy()
    total = len(pool.unlabeled) + len(pool.labeled_ids)
    for step in range(10):
        oracle_label(pool, max(pool.unlabeled))
        assert len(pool.labeled_ids) == 3 + step + 1
        assert pool.budget_remaining == 10 - step - 1
        assert len(pool.unlabeled) + len(pool.labeled_ids) == total
        assert not pool.unlabeled & set(pool.labeled_ids)
    np.testing.assert_array_equal(pool.V_X, v_before)
    assert len(pool.labeled) == 13


def test_labels_identical_across_runs():
    ds = _dataset(20)
    first = init_pool(ds, 0, budget=20, seed=0)
    second = init_pool(ds, 0, budget=20, seed=9)
    for i in range(20):
        assert oracle_label(first, i) == oracle_label(second, i) == ds.y[i]


def test_dataset_is_read_only():
    ds = _dataset(3)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_shipped_schemas_parse():
    for name in ("compas", "adult", "german"):
        schema = DatasetSchema.model_validate(json.loads((REPO_ROOT / "schemas" / f"{name}.json").read_text()))
        assert schema.sensitive not in schema.features
