"""
Shared enums and the run-ledger database models.
Uses SQLAlchemy with SQLite (or PostgreSQL).
"""

from datetime import datetime
from enum import Enum

from sqlalchemy import (
    Column, Integer, String, Float, DateTime, Text, ForeignKey, Index
)
from sqlalchemy.orm import relationship, declarative_base

Base = declarative_base()


class StrategyName(str, Enum):
    RANDOM = "random"
    ENTROPY = "entropy"
    FAL = "fal"
    FBC = "fbc"


class MeasureName(str, Enum):
    MUTUAL_INFO = "mutual_info"
    COVARIANCE = "covariance"
    ABS_DIFF_ACCEPTANCE = "abs_diff_acceptance"
    ABS_DIFF_COMPOSITION = "abs_diff_composition"
    RATIO_ACCEPTANCE = "ratio_acceptance"
    RATIO_COMPOSITION = "ratio_composition"


class RunStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class ExperimentRun(Base):
    """One `run` invocation of the harness."""
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    name = Column(String(200), nullable=False)
    strategy = Column(String(50), nullable=False)
    measure = Column(String(50), nullable=False)
    budget = Column(Integer, nullable=False)
    n_splits = Column(Integer, nullable=False)
    base_seed = Column(Integer, nullable=False)
    config_json = Column(Text, nullable=False)
    out_dir = Column(String(500), nullable=True)

    status = Column(String(50), default=RunStatus.RUNNING.value)
    started_at = Column(DateTime, default=datetime.utcnow)
    completed_at = Column(DateTime, nullable=True)

    final_mean_accuracy = Column(Float, nullable=True)
    final_mean_disparity = Column(Float, nullable=True)
    details = Column(Text, nullable=True)

    metrics = relationship("IterationMetric", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<ExperimentRun {self.id}: {self.name} ({self.strategy}/{self.measure})>"


class IterationMetric(Base):
    """One MetricsRecord stored against its run."""
    __tablename__ = "iteration_metrics"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), nullable=False)
    split_id = Column(Integer, nullable=False)
    iteration = Column(Integer, nullable=False)
    alpha = Column(Float, nullable=False)
    accuracy = Column(Float, nullable=False)
    precision = Column(Float, nullable=False)
    recall = Column(Float, nullable=False)
    disparity = Column(Float, nullable=True)
    wall_time_s = Column(Float, nullable=False)

    run = relationship("ExperimentRun", back_populates="metrics")

    __table_args__ = (
        Index("idx_iteration_metrics_run_split_iter", "run_id", "split_id", "iteration"),
    )
