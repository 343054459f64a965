"""Shared fixtures."""

import numpy as np
import pandas as pd
import pytest

from core.env import make_synthetic, make_test_set


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_env():
    return make_synthetic(seed=0)


@pytest.fixture(scope="session")
def synthetic_test(synthetic_env):
    return make_test_set(synthetic_env, n_test=100_000, seed=2024)


@pytest.fixture
def small_settings(monkeypatch):
    """Fewer Thompson sampling rounds so collection-heavy tests stay quick."""
    from config import settings

    monkeypatch.setattr(settings, "TS_MC_DRAWS", 200)
    return settings


@pytest.fixture
def classification_csv(tmp_path):
    """Three classes with labels first seen in the order 5, 2, 9."""
    gen = np.random.default_rng(3)
    n = 60
    labels = np.array([5, 2, 2, 9] * (n // 4))
    df = pd.DataFrame(
        {
            "f1": gen.normal(size=n) + labels,
            "f2": gen.normal(size=n),
            "flat": np.full(n, 4.0),
            "species": labels,
        }
    )
    path = tmp_path / "toy.csv"
    df.to_csv(path, index=False)
    return path
