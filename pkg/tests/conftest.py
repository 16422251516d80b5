"""Shared fixtures."""

import numpy as np
import pytest

from fairal import glm
from fairal.config import ExperimentConfig, settings
from fairal.dataset import Candidates


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Keep logs and the run ledger inside the test's tmp dir; deterministic timing column."""
    monkeypatch.setattr(settings, "data_dir", tmp_path)
    monkeypatch.setattr(settings, "database_url", f"sqlite:///{tmp_path / 'runs.db'}")
    monkeypatch.setattr(settings, "record_runs", False)
    monkeypatch.setattr(settings, "record_timing", False)
    monkeypatch.setattr(settings, "dump_scores", False)
    monkeypatch.setattr(settings, "fal_threads", 1)


@pytest.fixture
def make_config():
    """Factory for small synthetic experiment configs."""
    def _make(**overrides) -> ExperimentConfig:
        base = {
            "name": "test",
            "dataset": {"synthetic": {"kind": "compas_like", "n": 80}},
            "strategy": "entropy",
            "measure": "mutual_info",
            "alpha": {"kind": "linear_decay", "hi": 1.0, "lo": 0.0, "steps": 11},
            "budget": 10,
            "n_seed_labels": 6,
            "n_splits": 1,
            "train_frac": 0.6,
            "base_seed": 0,
        }
        base.update(overrides)
        return ExperimentConfig.model_validate(base)
    return _make


@pytest.fixture
def small_pool():
    """Factory for a random selection state: candidates, labeled set, current model, V."""
    def _make(n_pool: int = 24, n_labeled: int = 6, d: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n_pool + n_labeled, d))
        S = (X[:, 0] + rng.normal(scale=0.7, size=len(X)) > 0).astype(int)
        y = (X @ rng.normal(size=d) + 0.5 * S + rng.normal(scale=0.5, size=len(X)) > 0).astype(int)
        L_X, L_y = X[:n_labeled], y[:n_labeled]
        ids = np.arange(n_labeled, n_labeled + n_pool)
        candidates = Candidates(ids=ids, X=X[n_labeled:], S=S[n_labeled:])
        clf = glm.train(L_X, L_y)
        return candidates, L_X, L_y, clf, X, S
    return _make
