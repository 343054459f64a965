"""
Bandit Environments Module

Provides the context/potential-outcome environments the experiments run on:

- a synthetic quadratic problem with three Uniform[-2, 2] covariates and two
  arms whose means depend only on the first coordinate,
- a correctly specified linear problem used as a sanity check for the
  collection agent,
- an adapter turning a multi-class classification table into a bandit
  problem (each class is an arm, the expected reward is the one-hot label).

Environments are immutable after construction and safe to share between
replications; every draw takes an explicit numpy Generator.

Usage:
    from core.env import make_synthetic, make_test_set, sample_step

    env = make_synthetic(seed=0)
    rng = np.random.default_rng(7)
    x, potentials = sample_step(env, rng)
    test = make_test_set(env, n_test=100_000, seed=1)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from config import settings

from .exceptions import (
    DataFileNotFoundError,
    DataLoaderError,
    DimensionMismatchError,
    EmptyTableError,
    MissingColumnError,
    MissingLabelError,
    NonNumericFeatureError,
    SingleClassError,
)

logger = logging.getLogger(__name__)

CONTEXT_LOW = -2.0
CONTEXT_HIGH = 2.0


class EnvKind(str, Enum):
    SYNTHETIC = "synthetic"
    LINEAR = "linear"
    CLASSIFICATION = "classification"


@dataclass(frozen=True, eq=False)
class Environment:
    """A contextual bandit problem: context law, mean rewards and noise."""

    kind: EnvKind
    p: int
    K: int
    noise_sd: float
    bound_M: float
    name: str
    # Linear: K x p coefficient matrix
    coef: np.ndarray | None = None
    # Classification: standardized n x p features and 0..K-1 labels
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    label_values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.K < 2 or self.p < 1 or self.noise_sd < 0:
            raise ValueError(
                f"Invalid environment shape: p={self.p}, K={self.K}, "
                f"noise_sd={self.noise_sd}"
            )
        if self.kind is EnvKind.CLASSIFICATION:
            if self.features is None or self.labels is None:
                raise ValueError("Classification environment needs a table.")
            if self.features.shape[1] != self.p:
                raise ValueError(
                    f"Feature matrix has {self.features.shape[1]} columns, "
                    f"expected {self.p}"
                )
            if len(self.labels) and (
                self.labels.min() < 0 or self.labels.max() >= self.K
            ):
                raise ValueError(f"Labels must lie in 0..{self.K - 1}")

    @property
    def n_rows(self) -> int:
        """Number of table rows (Classification only)."""
        return 0 if self.features is None else int(self.features.shape[0])


@dataclass(frozen=True, eq=False)
class TestSet:
    """Noise-free evaluation sample: contexts and their true mean rewards."""

    __test__ = False  # keep pytest from collecting this class

    contexts: np.ndarray
    true_means: np.ndarray

    @property
    def n_test(self) -> int:
        return int(self.contexts.shape[0])


def make_synthetic(seed: int = 0) -> Environment:
    """Quadratic two-arm problem: mu_1(x) = x1^2 - 1, mu_2(x) = 1 - x1^2.

    The seed is accepted for interface symmetry; the environment itself holds
    no random state.
    """
    logger.debug(f"Creating synthetic environment (seed={seed})")
    return Environment(
        kind=EnvKind.SYNTHETIC, p=3, K=2, noise_sd=1.0, bound_M=3.0, name="synthetic"
    )


def make_linear(seed: int = 0, coef: np.ndarray | None = None) -> Environment:
    """Linear problem mu_w(x) = x . beta_w over Uniform[-2, 2]^3 contexts."""
    if coef is None:
        coef = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    coef = np.asarray(coef, dtype=float)
    if coef.ndim != 2:
        raise ValueError("coef must be a K x p matrix")
    bound = float(np.abs(coef).sum(axis=1).max() * max(-CONTEXT_LOW, CONTEXT_HIGH))
    logger.debug(f"Creating linear environment (seed={seed}, K={coef.shape[0]})")
    return Environment(
        kind=EnvKind.LINEAR,
        p=coef.shape[1],
        K=coef.shape[0],
        noise_sd=1.0,
        bound_M=bound,
        name="linear",
        coef=coef,
    )


def _check_dim(env: Environment, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (env.p,):
        raise DimensionMismatchError(
            f"Context has shape {x.shape}, environment expects ({env.p},)"
        )
    return x


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((len(labels), K))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def true_means_batch(env: Environment, contexts: np.ndarray) -> np.ndarray:
    """Mean reward of every arm at every row of `contexts` (n x K)."""
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2 or contexts.shape[1] != env.p:
        raise DimensionMismatchError(
            f"Contexts have shape {contexts.shape}, expected (n, {env.p})"
        )
    if env.kind is EnvKind.SYNTHETIC:
        base = contexts[:, 0] ** 2 - 1.0
        return np.column_stack([base, -base])
    if env.kind is EnvKind.LINEAR:
        return contexts @ env.coef.T
    return _one_hot(np.array([_row_label(env, x) for x in contexts]), env.K)


def _row_label(env: Environment, x: np.ndarray) -> int:
    matches = np.flatnonzero(np.all(env.features == x, axis=1))
    if matches.size == 0:
        raise DataLoaderError("Context does not match any row of the table.")
    return int(env.labels[matches[0]])


def true_means(env: Environment, x: np.ndarray) -> np.ndarray:
    """Vector (mu(x; w_1), ..., mu(x; w_K)).

    For a classification environment `x` is resolved to the first table row
    with identical (standardized) coordinates and the one-hot label of that
    row is returned.
    """
    x = _check_dim(env, x)
    return true_means_batch(env, x[None, :])[0]


def _draw_contexts(env: Environment, n: int, rng: np.random.Generator):
    """Returns (contexts, row indices or None)."""
    if env.kind is EnvKind.CLASSIFICATION:
        if env.n_rows == 0:
            raise EmptyTableError("Cannot draw from an empty classification table.")
        rows = rng.integers(env.n_rows, size=n)
        return env.features[rows], rows
    return rng.uniform(CONTEXT_LOW, CONTEXT_HIGH, size=(n, env.p)), None


def _means_for(env: Environment, contexts: np.ndarray, rows) -> np.ndarray:
    if rows is not None:
        return _one_hot(env.labels[rows], env.K)
    return true_means_batch(env, contexts)


def sample_step(env: Environment, rng: np.random.Generator):
    """Draws one context and the noisy potential reward of every arm.

    Consumes one context draw (p uniforms, or one row index) followed by K
    Gaussian noise draws.
    """
    contexts, rows = _draw_contexts(env, 1, rng)
    means = _means_for(env, contexts, rows)[0]
    noise = rng.normal(0.0, env.noise_sd, size=env.K)
    return contexts[0].copy(), means + noise


def make_test_set(env: Environment, n_test: int, seed) -> TestSet:
    """Noise-free test sample drawn from the environment's context law."""
    if n_test < 1:
        raise ValueError(f"n_test must be at least 1, got {n_test}")
    rng = np.random.default_rng(seed)
    contexts, rows = _draw_contexts(env, n_test, rng)
    logger.info(f"Drew test set of {n_test} contexts from '{env.name}'")
    return TestSet(contexts=contexts, true_means=_means_for(env, contexts, rows))


def default_n_test(env: Environment) -> int:
    """100000 for simulated problems, min(cap, 10 x rows) for classification."""
    if env.kind is EnvKind.CLASSIFICATION:
        return min(settings.CLASSIFICATION_N_TEST_CAP, 10 * env.n_rows)
    return settings.SYNTHETIC_N_TEST


def _standardize(features: np.ndarray, name: str) -> np.ndarray:
    mean = features.mean(axis=0)
    sd = features.std(axis=0)
    flat = sd == 0
    if flat.any():
        logger.warning(
            f"{int(flat.sum())} constant feature column(s) in '{name}' set to 0"
        )
    safe_sd = np.where(flat, 1.0, sd)
    return np.where(flat, 0.0, (features - mean) / safe_sd)


def load_classification_csv(path, label_column: str) -> Environment:
    """Loads a classification CSV as a bandit environment.

    Labels are relabeled 0..K-1 in order of first appearance and features are
    standardized per column (zero-variance columns become 0).

    Raises:
        DataFileNotFoundError: the file does not exist.
        MissingColumnError: the label column is absent.
        NonNumericFeatureError: a feature cell is not numeric.
        MissingLabelError: a label cell is empty.
        EmptyTableError: the file has no rows.
        SingleClassError: all labels are identical.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        logger.error(f"Classification CSV not found at {path}")
        raise DataFileNotFoundError(f"CSV file not found at {path}") from None
    except pd.errors.EmptyDataError:
        raise EmptyTableError(f"CSV file {path} is empty") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        logger.error(f"Could not parse CSV {path}: {e}")
        raise DataLoaderError(f"Failed to parse CSV {path}: {e}") from e

    if label_column not in df.columns:
        raise MissingColumnError(
            f"Label column '{label_column}' not in {list(df.columns)}"
        )
    if df.empty:
        raise EmptyTableError(f"CSV file {path} has no rows")

    raw = df.drop(columns=[label_column])
    if raw.shape[1] == 0:
        raise MissingColumnError(f"CSV file {path} has no feature columns")
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise NonNumericFeatureError(
            f"Non-numeric feature at row {row + 1}, column '{raw.columns[col]}': "
            f"{raw.iat[row, col]!r}"
        )

    codes, uniques = pd.factorize(df[label_column], sort=False)
    if np.any(codes < 0):
        row = int(np.flatnonzero(codes < 0)[0])
        raise MissingLabelError(
            f"Empty label in column '{label_column}' at row {row + 1}"
        )
    if len(uniques) < 2:
        raise SingleClassError(
            f"single-class table: label column '{label_column}' has one value"
        )

    features = _standardize(numeric.to_numpy(dtype=float), path.stem)
    env = Environment(
        kind=EnvKind.CLASSIFICATION,
        p=features.shape[1],
        K=len(uniques),
        noise_sd=1.0,
        bound_M=1.0,
        name=path.stem,
        features=features,
        labels=codes.astype(np.int64),
        label_values=tuple(uniques.tolist()),
    )
    logger.info(
        f"Loaded '{env.name}': {env.n_rows} rows, p={env.p}, K={env.K} "
        f"(labels {env.label_values})"
    )
    return env
