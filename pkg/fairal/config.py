"""
Configuration management for the fair active learning harness.
Process settings come from environment variables and .env file;
experiment settings come from JSON config files.
"""

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from fairal.models import MeasureName, StrategyName


class Settings(BaseSettings):
    """Process-level settings with validation."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    app_name: str = "Fair Active Learning Bench"
    debug: bool = False

    # Run ledger
    database_url: str = "sqlite:///./data/fal_runs.db"
    record_runs: bool = True

    # Parallel split workers (FAL_THREADS), None = min(n_splits, cpu count)
    fal_threads: Optional[int] = Field(default=None, ge=1)

    # Flag-gated per-iteration SelectionScore dumps
    dump_scores: bool = False

    # Write measured iteration wall time; false writes 0.0 so metrics files are byte-reproducible
    record_timing: bool = True

    # Data paths
    data_dir: Path = Path("./data")
    log_file: str = "fairal.log"


settings = Settings()

# Ensure data directory exists
settings.data_dir.mkdir(parents=True, exist_ok=True)


# ============================================================================
# Experiment configuration
# ============================================================================

class FixedAlpha(BaseModel):
    kind: Literal["fixed"] = "fixed"
    value: float = Field(ge=0.0, le=1.0)


class LinearDecayAlpha(BaseModel):
    kind: Literal["linear_decay"] = "linear_decay"
    hi: float = Field(default=1.0, ge=0.0, le=1.0)
    lo: float = Field(default=0.0, ge=0.0, le=1.0)
    steps: int = Field(default=11, ge=1)


AlphaConfig = Annotated[Union[FixedAlpha, LinearDecayAlpha], Field(discriminator="kind")]


class SyntheticSource(BaseModel):
    """Parameters for a generated dataset instead of a CSV file."""

    kind: Literal["compas_like", "two_group"] = "compas_like"
    n: int = Field(default=1000, ge=4)
    # two_group (uniform red square / blue ellipse) parameters
    n_red: int = Field(default=500, ge=1)
    n_blue: int = Field(default=500, ge=1)
    blue_mean: list[float] = [0.8, 0.2]
    blue_cov: list[list[float]] = [[0.011, -0.009], [-0.009, 0.011]]
    boundary: list[float] = [1.0, 1.0, -1.0]


class DatasetSource(BaseModel):
    path: Optional[Path] = None
    schema_path: Optional[Path] = Field(default=None, alias="schema")
    synthetic: Optional[SyntheticSource] = None

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _one_source(self) -> "DatasetSource":
        if self.synthetic is None and (self.path is None or self.schema_path is None):
            raise ValueError("dataset needs either path + schema or synthetic parameters")
        return self


class ExperimentConfig(BaseModel):
    """One experiment: a strategy run over n_splits random splits."""

    name: str = "experiment"
    dataset: DatasetSource
    strategy: StrategyName = StrategyName.FAL
    measure: MeasureName = MeasureName.MUTUAL_INFO
    alpha: AlphaConfig = Field(default_factory=LinearDecayAlpha)
    budget: int = Field(default=200, ge=1)
    n_seed_labels: int = Field(default=6, ge=1)
    n_splits: int = Field(default=10, ge=1)
    train_frac: float = Field(default=0.6, gt=0.0, lt=1.0)
    base_seed: int = 0

    # Classifier hyperparameters
    reg_strength: float = Field(default=1.0, gt=0.0)
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)

    candidate_subsample: Optional[int] = Field(default=None, ge=1)
    row_subsample: Optional[int] = Field(default=None, ge=1)
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)
    use_abs: bool = True


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a JSON experiment config; relative dataset paths resolve next to the file."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)

    config = ExperimentConfig.model_validate(raw)
    base = path.parent
    ds = config.dataset
    if ds.path is not None and not ds.path.is_absolute():
        ds.path = base / ds.path
    if ds.schema_path is not None and not ds.schema_path.is_absolute():
        ds.schema_path = base / ds.schema_path
    return config
