"""
File Formats Module

Readers and writers for every file the command line exchanges:

- logged bandit data: `t, x_1..x_p, action, reward, propensity`
- score matrices: `t, score_0..score_{K-1}` (the reweighted AIPW elements)
- results: `env, T, scheme, rep, regret, agent_regret, wall_ms`
- tree policies: one line in the text form of `core.treepolicy`

Readers validate content and name the offending row and column; low-level
pandas and OS errors are wrapped in the application's exception classes.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import (
    DataFileNotFoundError,
    DataLoaderError,
    EmptyTableError,
    LoggedDataError,
    MissingColumnError,
    ResultsWriteError,
)
from .treepolicy import TreePolicy, format_tree, parse_tree

logger = logging.getLogger(__name__)

LOGGED_FIXED_COLUMNS = ("t", "action", "reward", "propensity")
RESULT_COLUMNS = ("env", "T", "scheme", "rep", "regret", "agent_regret", "wall_ms")
SORT_KEYS = ["env", "T", "scheme", "rep"]


@dataclass(frozen=True)
class LoggedData:
    """A logged bandit dataset in time order."""

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray

    @property
    def T(self) -> int:
        return int(self.actions.shape[0])

    @property
    def p(self) -> int:
        return int(self.contexts.shape[1])


@dataclass(frozen=True)
class ResultRow:
    env: str
    T: int
    scheme: str
    rep: int
    regret: float
    agent_regret: float
    wall_ms: float


def _read_csv(path) -> pd.DataFrame:
    path = Path(path)
    try:
        return pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        logger.error(f"Input file not found at {path}")
        raise DataFileNotFoundError(f"File not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise EmptyTableError(f"File {path} is empty") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        logger.error(f"Could not parse {path}: {e}")
        raise DataLoaderError(f"Failed to parse {path}: {e}") from e


def _write_frame(df: pd.DataFrame, path) -> None:
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise ResultsWriteError(f"Failed to write {path}: {e}") from e
    logger.info(f"Wrote {len(df)} rows to {path}")


def _numeric(df: pd.DataFrame, path) -> pd.DataFrame:
    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise LoggedDataError(
            f"{path}: row {row + 1}, column '{df.columns[col]}' is not a number: "
            f"{df.iat[row, col]!r}"
        )
    return numeric


def write_logged_csv(data: LoggedData, path) -> None:
    columns = {"t": np.arange(1, data.T + 1)}
    for j in range(data.p):
        columns[f"x_{j + 1}"] = data.contexts[:, j]
    columns["action"] = data.actions
    columns["reward"] = data.rewards
    columns["propensity"] = data.propensities
    _write_frame(pd.DataFrame(columns), path)


def read_logged_csv(path) -> LoggedData:
    """Reads and validates a logged-data CSV.

    Raises:
        DataFileNotFoundError: the file does not exist.
        MissingColumnError: a fixed column or x_1 is absent, or x_j are not
            numbered consecutively.
        LoggedDataError: a non-numeric cell, a time index out of sequence, a
            negative or fractional action, or a propensity outside (0, 1].
    """
    df = _read_csv(path)
    missing = [c for c in LOGGED_FIXED_COLUMNS if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {missing}")
    x_cols = [c for c in df.columns if c.startswith("x_")]
    expected = [f"x_{j + 1}" for j in range(len(x_cols))]
    if not x_cols or x_cols != expected:
        raise MissingColumnError(
            f"{path}: context columns must be x_1..x_p, got {x_cols}"
        )
    if df.empty:
        raise EmptyTableError(f"{path} has no rows")

    num = _numeric(df[["t", *x_cols, "action", "reward", "propensity"]], path)
    t = num["t"].to_numpy()
    out_of_order = np.flatnonzero(t != np.arange(1, len(t) + 1))
    if out_of_order.size:
        row = int(out_of_order[0])
        raise LoggedDataError(
            f"{path}: row {row + 1} has t={t[row]}, expected {row + 1}"
        )
    actions = num["action"].to_numpy()
    bad = np.flatnonzero((actions < 0) | (actions != np.floor(actions)))
    if bad.size:
        row = int(bad[0])
        raise LoggedDataError(
            f"{path}: row {row + 1} has invalid action {actions[row]}"
        )
    propensities = num["propensity"].to_numpy(dtype=float)
    bad = np.flatnonzero((propensities <= 0) | (propensities > 1))
    if bad.size:
        row = int(bad[0])
        raise LoggedDataError(
            f"{path}: row {row + 1} has propensity {propensities[row]} outside (0, 1]"
        )

    data = LoggedData(
        contexts=num[x_cols].to_numpy(dtype=float),
        actions=actions.astype(np.int64),
        rewards=num["reward"].to_numpy(dtype=float),
        propensities=propensities,
    )
    logger.info(f"Read {data.T} logged rows with p={data.p} from {path}")
    return data


def write_scores_csv(weighted: np.ndarray, path) -> None:
    """Writes a T x K score matrix as `t, score_0..score_{K-1}`."""
    columns = [f"score_{w}" for w in range(weighted.shape[1])]
    df = pd.DataFrame(weighted, columns=columns)
    df.insert(0, "t", np.arange(1, weighted.shape[0] + 1))
    _write_frame(df, path)


def emit_results(rows: list[ResultRow], path) -> None:
    """Writes results sorted by (env, T, scheme, rep); empty rows give a header."""
    df = pd.DataFrame([asdict(r) for r in rows], columns=list(RESULT_COLUMNS))
    if not df.empty:
        df = df.sort_values(SORT_KEYS, kind="stable").reset_index(drop=True)
    _write_frame(df, path)


def read_results(path) -> pd.DataFrame:
    df = _read_csv(path)
    missing = [c for c in RESULT_COLUMNS if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing result column(s) {missing}")
    df = df.astype({"env": str, "scheme": str})
    numeric = ["T", "rep", "regret", "agent_regret", "wall_ms"]
    df[numeric] = _numeric(df[numeric], path)
    return df


def write_tree(tree: TreePolicy, path) -> None:
    path = Path(path)
    try:
        path.write_text(format_tree(tree) + "\n", encoding="utf-8")
    except OSError as e:
        raise ResultsWriteError(f"Failed to write tree to {path}: {e}") from e
    logger.info(f"Wrote tree policy to {path}")


def read_tree(path) -> TreePolicy:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFileNotFoundError(f"Tree file not found: {path}") from None
    return parse_tree(text.strip())
