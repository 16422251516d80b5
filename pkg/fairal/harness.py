"""
Experiment orchestration: the per-split budget loop, multi-split repetition,
metric aggregation and output files, synthetic scenario generators and the
run ledger.
"""

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.metrics import accuracy_score, precision_score, recall_score

from fairal import fairness, glm, schedule, strategies
from fairal.config import ExperimentConfig, SyntheticSource, settings
from fairal.dataset import (
    Dataset,
    apply_standardization,
    init_pool,
    load_csv,
    load_schema,
    oracle_label,
    split,
    standardize,
    subsample,
)
from fairal.models import StrategyName

logger = logging.getLogger(__name__)

CSV_FIELDS = [
    "split_id", "iteration", "strategy", "alpha", "accuracy", "precision",
    "recall", "disparity", "measure", "wall_time_s",
]
SUMMARY_METRICS = ["alpha", "accuracy", "precision", "recall", "disparity", "wall_time_s"]

# Boundary x1 + x2 = 1 and a tilted line through the square's centre
TRUE_BOUNDARY = (1.0, 1.0, -1.0)
TILTED_BOUNDARY = (1.0, 0.8, -0.9)


class ExperimentError(RuntimeError):
    """Raised when a split or an experiment cannot complete."""


class ScenarioError(ValueError):
    pass


class LedgerError(RuntimeError):
    pass


@dataclass
class MetricsRecord:
    split_id: int
    iteration: int
    strategy: str
    alpha: float
    accuracy: float
    precision: float
    recall: float
    disparity: Optional[float]
    measure: str
    wall_time_s: float
    n_labeled: Optional[int] = None
    selected_id: Optional[int] = None


@dataclass
class SplitResult:
    split_id: int
    seed: int
    records: list[MetricsRecord]
    model: glm.LinearClassifier
    train_source_ids: tuple[int, ...]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: list[int]
    splits: list[SplitResult]
    summary: dict = field(default_factory=dict)

    @property
    def records(self) -> list[MetricsRecord]:
        return [r for s in self.splits for r in s.records]


# ============================================================================
# Synthetic scenarios
# ============================================================================

@dataclass(frozen=True)
class ScenarioParams:
    """Red group uniform on the unit square, blue group Gaussian, labels from a line."""

    n_red: int = 10_000
    n_blue: int = 10_000
    blue_mean: tuple[float, float] = (0.8, 0.2)
    blue_cov: tuple[tuple[float, float], tuple[float, float]] = ((0.011, -0.009), (-0.009, 0.011))
    boundary: tuple[float, float, float] = TRUE_BOUNDARY


def make_synthetic_scenario(params: ScenarioParams, seed: int) -> Dataset:
    """
    Two-group construction: S = 0 for red, 1 for blue; y = 1 iff
    w1·x1 + w2·x2 + b > 0 for boundary (w1, w2, b).
    """
    if params.n_red < 0 or params.n_blue < 0 or params.n_red + params.n_blue == 0:
        raise ScenarioError("group counts must be nonnegative and not both zero")
    cov = np.asarray(params.blue_cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ScenarioError("blue covariance must be a symmetric 2x2 matrix")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ScenarioError("blue covariance must be positive definite") from None

    rng = np.random.default_rng(seed)
    red = rng.uniform(0.0, 1.0, size=(params.n_red, 2))
    blue = rng.multivariate_normal(np.asarray(params.blue_mean, dtype=float), cov, size=params.n_blue)
    X = np.vstack([red, blue])
    S = np.concatenate([np.zeros(params.n_red, dtype=int), np.ones(params.n_blue, dtype=int)])
    y = linear_rule(X, params.boundary)
    return Dataset(X=X, S=S, y=y, feature_names=("x1", "x2"))


def linear_rule(X: np.ndarray, boundary: Sequence[float]) -> np.ndarray:
    w1, w2, b = boundary
    return (w1 * X[:, 0] + w2 * X[:, 1] + b > 0).astype(int)


def acceptance_rates(ds: Dataset, boundary: Sequence[float]) -> dict[str, float]:
    """P(ŷ=1 | group) when predicting with the given line."""
    preds = linear_rule(ds.X, boundary)
    return {
        "red": float(preds[ds.S == 0].mean()) if (ds.S == 0).any() else float("nan"),
        "blue": float(preds[ds.S == 1].mean()) if (ds.S == 1).any() else float("nan"),
    }


def make_compas_like(n: int, seed: int) -> Dataset:
    """
    Biased recidivism-style data: prior counts and a proxy feature are shifted
    for group 1 and drive the label, so label rates differ by group.
    """
    rng = np.random.default_rng(seed)
    S = (rng.random(n) < 0.5).astype(int)
    age = rng.normal(0.0, 1.0, n)
    priors = rng.poisson(1.0 + 1.5 * S).astype(float)
    proxy = rng.normal(0.9 * S, 1.0, n)
    charge = (rng.random(n) < 0.35 + 0.15 * S).astype(float)
    juvenile = rng.poisson(0.2 + 0.3 * S).astype(float)
    z = -1.0 + 0.45 * priors + 0.6 * proxy - 0.5 * age + 0.4 * charge + 0.3 * juvenile
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-z))).astype(int)
    X = np.column_stack([age, priors, proxy, charge, juvenile])
    return Dataset(X=X, S=S, y=y, feature_names=("age", "priors_count", "proxy", "charge_degree", "juv_count"))


def load_dataset(config: ExperimentConfig) -> Dataset:
    """Raw (unstandardized) dataset for a config, after optional row subsampling."""
    source = config.dataset
    if source.synthetic is not None:
        ds = _synthetic_dataset(source.synthetic, config.base_seed)
    else:
        ds = load_csv(source.path, load_schema(source.schema_path))
    if config.row_subsample is not None:
        ds = subsample(ds, config.row_subsample, config.base_seed)
    return ds


def _synthetic_dataset(source: SyntheticSource, seed: int) -> Dataset:
    if source.kind == "compas_like":
        return make_compas_like(source.n, seed)
    params = ScenarioParams(
        n_red=source.n_red,
        n_blue=source.n_blue,
        blue_mean=tuple(source.blue_mean),
        blue_cov=tuple(tuple(row) for row in source.blue_cov),
        boundary=tuple(source.boundary),
    )
    return make_synthetic_scenario(params, seed)


# ============================================================================
# Split loop
# ============================================================================

def _classification_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float, float]:
    """Accuracy, precision and recall with label 1 positive; empty ratios are 0."""
    accuracy = float(accuracy_score(y_true, y_pred))
    precision = float(precision_score(y_true, y_pred, pos_label=1, zero_division=0))
    recall = float(recall_score(y_true, y_pred, pos_label=1, zero_division=0))
    return accuracy, precision, recall


def _fit_params(config: ExperimentConfig) -> strategies.FitParams:
    return strategies.FitParams(reg_strength=config.reg_strength, max_iter=config.max_iter, tol=config.tol)


def execute_split(
    config: ExperimentConfig,
    split_seed: int,
    split_id: int = 0,
    dataset: Optional[Dataset] = None,
    score_dir: Optional[Path] = None,
) -> SplitResult:
    """One repetition of the active learning loop; see `run_split`."""
    raw = dataset if dataset is not None else load_dataset(config)
    train_raw, test_raw = split(raw, config.train_frac, split_seed)
    train_ds = standardize(train_raw)
    test_ds = apply_standardization(test_raw, train_ds.standardization)

    pool_seed, select_seed = np.random.SeedSequence(split_seed).generate_state(2)
    pool = init_pool(train_ds, config.n_seed_labels, config.budget, int(pool_seed))
    rng = np.random.default_rng(select_seed)
    fit = _fit_params(config)
    alpha_schedule = schedule.from_config(config.alpha)
    strategy = StrategyName(config.strategy)
    measure = config.measure.value
    V_X, V_S = pool.V_X, pool.V_S

    clf = fit.train(pool.L_X, pool.L_y)
    sens_cov = agg = None
    if strategy == StrategyName.FBC:
        sens_cov = strategies.init_sensitive_cov(V_X, V_S)
        agg = strategies.CovAggregates.from_labeled(pool.L_X, pool.L_y)

    logger.info(
        f"Split {split_id} (seed {split_seed}): {strategy.value}, "
        f"{train_ds.n} train / {test_ds.n} test, d={train_ds.d}, budget {config.budget}"
    )

    records: list[MetricsRecord] = []
    for t in range(config.budget):
        if not pool.unlabeled:
            logger.warning(f"Split {split_id}: unlabeled pool exhausted after {t} iterations")
            break

        started = time.perf_counter()
        uses_alpha = strategy in (StrategyName.FAL, StrategyName.FBC)
        alpha_t = schedule.alpha_at(alpha_schedule, t, config.budget) if uses_alpha else 1.0
        candidates = pool.candidates()
        scores = None

        if strategy == StrategyName.RANDOM:
            chosen = strategies.select_random(candidates, rng)
        elif strategy == StrategyName.ENTROPY:
            chosen = strategies.select_entropy(candidates, clf)
        elif strategy == StrategyName.FAL:
            subset = strategies.subsample_candidates(candidates, config.candidate_subsample, rng)
            chosen, scores = strategies.select_fal(
                subset, pool.L_X, pool.L_y, clf, V_X, V_S, measure, alpha_t, config.threshold, fit
            )
        else:
            chosen, scores = strategies.select_fbc(candidates, agg, clf, sens_cov, alpha_t, config.use_abs)

        label = oracle_label(pool, chosen)
        if agg is not None:
            agg = strategies.update_aggregates(agg, train_ds.X[chosen], label)
        clf = fit.train(pool.L_X, pool.L_y)
        elapsed = time.perf_counter() - started

        if scores is not None and score_dir is not None:
            strategies.dump_scores(scores, score_dir / f"scores_split{split_id}_t{t}.csv")

        accuracy, precision, recall = _classification_metrics(
            test_ds.y, glm.predict(clf, test_ds.X, config.threshold)
        )
        try:
            disparity = fairness.evaluate(clf, V_X, V_S, measure, config.threshold)
        except fairness.UndefinedMeasureError as e:
            logger.debug(f"Split {split_id} t={t}: disparity undefined ({e})")
            disparity = None

        records.append(MetricsRecord(
            split_id=split_id,
            iteration=t,
            strategy=strategy.value,
            alpha=alpha_t,
            accuracy=accuracy,
            precision=precision,
            recall=recall,
            disparity=disparity,
            measure=measure,
            wall_time_s=elapsed if settings.record_timing else 0.0,
            n_labeled=len(pool.labeled_ids),
            selected_id=int(chosen),
        ))
        logger.debug(f"Split {split_id} t={t}: picked {chosen} (y={label}), acc={accuracy:.4f}, disp={disparity}")

    logger.info(f"Split {split_id} finished: {len(records)} iterations, |L|={len(pool.labeled_ids)}")
    return SplitResult(
        split_id=split_id,
        seed=split_seed,
        records=records,
        model=clf,
        train_source_ids=tuple(int(i) for i in train_ds.source_ids),
    )


def run_split(config: ExperimentConfig, split_seed: int, split_id: int = 0) -> list[MetricsRecord]:
    """
    Load, standardize and split the data, seed the pool, then for each of the
    B iterations pick a candidate, buy its label, retrain and record test
    accuracy/precision/recall and disparity on V.
    """
    return execute_split(config, split_seed, split_id).records


# ============================================================================
# Multi-split experiments
# ============================================================================

def _worker_count(n_splits: int) -> int:
    if settings.fal_threads is not None:
        return max(1, min(settings.fal_threads, n_splits))
    return max(1, min(n_splits, os.cpu_count() or 1))


def run_experiment(config: ExperimentConfig, out_dir: Optional[Path] = None) -> ExperimentResult:
    """Run n_splits splits with seeds base_seed + i and aggregate pointwise."""
    dataset = load_dataset(config)
    seeds = [config.base_seed + i for i in range(config.n_splits)]
    score_dir = out_dir if (out_dir is not None and settings.dump_scores) else None

    def _one(split_id: int) -> SplitResult:
        try:
            return execute_split(config, seeds[split_id], split_id, dataset, score_dir)
        except Exception as e:
            logger.exception(f"Split {split_id} (seed {seeds[split_id]}) failed")
            raise ExperimentError(f"split {split_id} (seed {seeds[split_id]}) failed: {e}") from e

    workers = _worker_count(config.n_splits)
    logger.info(f"Running {config.n_splits} splits of {config.name!r} on {workers} worker(s)")
    if workers == 1:
        splits = [_one(i) for i in range(config.n_splits)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            splits = list(pool.map(_one, range(config.n_splits)))

    memberships = {s.train_source_ids for s in splits}
    if len(memberships) != len(splits):
        raise ExperimentError("two splits drew identical training sets; check the seed configuration")

    result = ExperimentResult(config=config, seeds=seeds, splits=splits)
    result.summary = summarize(result.records)
    return result


def _mean_std(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def summarize(records: list[MetricsRecord]) -> dict:
    """Per-iteration mean and sample standard deviation of each metric across splits."""
    by_iteration: dict[int, list[MetricsRecord]] = {}
    for r in records:
        by_iteration.setdefault(r.iteration, []).append(r)

    iterations = []
    for t in sorted(by_iteration):
        group = by_iteration[t]
        row: dict = {"iteration": t, "n_splits": len(group)}
        for metric in SUMMARY_METRICS:
            values = [getattr(r, metric) for r in group if getattr(r, metric) is not None]
            row[f"{metric}_mean"], row[f"{metric}_std"] = _mean_std(values)
        iterations.append(row)
    return {"iterations": iterations, "final": iterations[-1] if iterations else None}


# ============================================================================
# Output files
# ============================================================================

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_metrics(
    records: list[MetricsRecord],
    fmt: str,
    path: Union[str, Path],
    config: Optional[ExperimentConfig] = None,
    seeds: Optional[list[int]] = None,
) -> Path:
    """Write records as CSV (fixed header) or JSON (records + config echo + seeds)."""
    if not records:
        raise ValueError("no metrics records to write")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown metrics format {fmt!r}, expected 'csv' or 'json'")

    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_FIELDS)
            for r in records:
                writer.writerow([_fmt(getattr(r, name)) for name in CSV_FIELDS])
    else:
        payload = {
            "config": config.model_dump(mode="json", by_alias=True) if config is not None else None,
            "seeds": seeds,
            "records": [asdict(r) for r in records],
        }
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


def _parse_optional(cell: str) -> Optional[float]:
    return float(cell) if cell != "" else None


def read_metrics(path: Union[str, Path]) -> list[MetricsRecord]:
    """Read records back from a metrics CSV/JSON file, or every raw_split*.csv in a directory."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("raw_split*.csv"), key=lambda p: int(p.stem.removeprefix("raw_split")))
        if not files:
            raise FileNotFoundError(f"no raw_split*.csv files in {path}")
        return [r for file in files for r in read_metrics(file)]

    if path.suffix == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [MetricsRecord(**r) for r in payload["records"]]

    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(MetricsRecord(
                split_id=int(row["split_id"]),
                iteration=int(row["iteration"]),
                strategy=row["strategy"],
                alpha=float(row["alpha"]),
                accuracy=float(row["accuracy"]),
                precision=float(row["precision"]),
                recall=float(row["recall"]),
                disparity=_parse_optional(row["disparity"]),
                measure=row["measure"],
                wall_time_s=float(row["wall_time_s"]),
            ))
    return records


def compare_metrics(a: list[MetricsRecord], b: list[MetricsRecord]) -> dict:
    """
    Per-iteration deltas (a minus b) of mean accuracy and mean disparity over
    the iterations both inputs share.
    """
    sa, sb = summarize(a), summarize(b)
    rows_b = {row["iteration"]: row for row in sb["iterations"]}
    rows = []
    for row_a in sa["iterations"]:
        row_b = rows_b.get(row_a["iteration"])
        if row_b is None:
            continue
        delta = {"iteration": row_a["iteration"]}
        for metric in ("accuracy", "disparity"):
            va, vb = row_a[f"{metric}_mean"], row_b[f"{metric}_mean"]
            delta[f"{metric}_delta"] = None if va is None or vb is None else va - vb
        rows.append(delta)
    return {"iterations": rows, "final": rows[-1] if rows else None}


def write_outputs(result: ExperimentResult, out_dir: Union[str, Path]) -> list[Path]:
    """`<out>/raw_split<i>.csv`, `<out>/summary.json`, `<out>/metrics.json`, `<out>/model_split<i>.json`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for s in result.splits:
        if s.records:
            written.append(emit_metrics(s.records, "csv", out_dir / f"raw_split{s.split_id}.csv"))
        written.append(s.model.save(out_dir / f"model_split{s.split_id}.json"))
    written.append(emit_metrics(result.records, "json", out_dir / "metrics.json", result.config, result.seeds))

    summary = {
        "config": result.config.model_dump(mode="json", by_alias=True),
        "seeds": result.seeds,
        **result.summary,
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    written.append(summary_path)
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written


# ============================================================================
# Run ledger
# ============================================================================

def start_run(config: ExperimentConfig, out_dir: Optional[Path]) -> Optional[int]:
    """Open a ledger row with status running; returns its id."""
    if not settings.record_runs:
        return None
    from fairal.database import get_db_session, init_db
    from fairal.models import ExperimentRun, RunStatus

    init_db()
    with get_db_session() as db:
        run = ExperimentRun(
            name=config.name,
            strategy=config.strategy.value,
            measure=config.measure.value,
            budget=config.budget,
            n_splits=config.n_splits,
            base_seed=config.base_seed,
            config_json=config.model_dump_json(by_alias=True),
            out_dir=str(out_dir) if out_dir is not None else None,
            status=RunStatus.RUNNING.value,
        )
        db.add(run)
        db.flush()
        return run.id


def record_run(result: ExperimentResult, out_dir: Optional[Path], run_id: Optional[int] = None) -> Optional[int]:
    """Store the finished run and its records in the ledger; returns the run id.

    With a run_id from `start_run` the open row is completed in place.
    """
    if not settings.record_runs:
        return None
    from fairal.database import get_db_session
    from fairal.models import ExperimentRun, IterationMetric, RunStatus

    if run_id is None:
        run_id = start_run(result.config, out_dir)
    final = result.summary.get("final") or {}
    with get_db_session() as db:
        run = db.get(ExperimentRun, run_id)
        if run is None:
            raise LedgerError(f"no ledger run with id {run_id}")
        run.status = RunStatus.COMPLETED.value
        run.completed_at = datetime.utcnow()
        run.final_mean_accuracy = final.get("accuracy_mean")
        run.final_mean_disparity = final.get("disparity_mean")
        for r in result.records:
            db.add(IterationMetric(
                run_id=run.id,
                split_id=r.split_id,
                iteration=r.iteration,
                alpha=r.alpha,
                accuracy=r.accuracy,
                precision=r.precision,
                recall=r.recall,
                disparity=r.disparity,
                wall_time_s=r.wall_time_s,
            ))
    logger.info(f"Recorded run {run_id} in the ledger")
    return run_id


def mark_run_failed(run_id: Optional[int], error: str) -> None:
    """Close an open ledger row with status failed and the error text."""
    if run_id is None or not settings.record_runs:
        return
    from fairal.database import get_db_session
    from fairal.models import ExperimentRun, RunStatus

    with get_db_session() as db:
        run = db.get(ExperimentRun, run_id)
        if run is None:
            raise LedgerError(f"no ledger run with id {run_id}")
        run.status = RunStatus.FAILED.value
        run.completed_at = datetime.utcnow()
        run.details = error
    logger.warning(f"Run {run_id} marked failed: {error}")


def list_runs(limit: int = 20) -> list[dict]:
    from fairal.database import get_db_session, init_db
    from fairal.models import ExperimentRun

    init_db()
    with get_db_session() as db:
        runs = db.query(ExperimentRun).order_by(ExperimentRun.id.desc()).limit(limit).all()
        return [{
            "id": r.id,
            "name": r.name,
            "strategy": r.strategy,
            "measure": r.measure,
            "status": r.status,
            "started_at": r.started_at.isoformat() if r.started_at else None,
            "final_mean_accuracy": r.final_mean_accuracy,
            "final_mean_disparity": r.final_mean_disparity,
            "out_dir": r.out_dir,
            "details": r.details,
        } for r in runs]
