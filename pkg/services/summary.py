"""
Results Summary Service

Aggregates one or more results CSVs:

- per (env, T, scheme): mean regret, standard error across replications and
  replication count,
- per learner scheme at each env's largest horizon: mean and median of the
  normalized regret (mean regret over the largest mean learner regret among
  all envs), the number of envs where the scheme has the smallest mean
  regret, and, when `uniform` is present, the number of envs where the scheme
  beats it.
"""

import logging

import numpy as np
import pandas as pd

from core.data_io import read_results
from core.exceptions import EmptyTableError

from .experiment import AGENT_SCHEME

logger = logging.getLogger(__name__)

BASELINE_SCHEME = "uniform"


def load_results(paths) -> pd.DataFrame:
    frames = [read_results(p) for p in paths]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    if df.empty:
        raise EmptyTableError("No result rows to summarize")
    return df


def cell_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Mean regret, standard error and count per (env, T, scheme)."""
    grouped = df.groupby(["env", "T", "scheme"], sort=True)["regret"]
    out = grouped.agg(mean_regret="mean", sd="std", n="count").reset_index()
    # single replication -> undefined standard error (NaN)
    out["se"] = out["sd"] / np.sqrt(out["n"])
    return out.drop(columns="sd")[["env", "T", "scheme", "mean_regret", "se", "n"]]


def scheme_summary(df: pd.DataFrame) -> pd.DataFrame:
    """Cross-env comparison of learner schemes at each env's largest T."""
    learners = df[df["scheme"] != AGENT_SCHEME]
    if learners.empty:
        raise EmptyTableError("No learner rows to compare")
    last_t = learners.groupby("env")["T"].transform("max")
    final = learners[learners["T"] == last_t]
    means = final.groupby(["env", "scheme"])["regret"].mean().unstack("scheme")

    scale = float(np.nanmax(means.to_numpy()))
    normalized = means / scale if scale > 0 else means * 0.0
    best = means.min(axis=1)
    wins = means.eq(best, axis=0).sum(axis=0)

    out = pd.DataFrame(
        {
            "mean_normalized": normalized.mean(axis=0),
            "median_normalized": normalized.median(axis=0),
            "wins": wins.astype(int),
            "n_envs": means.notna().sum(axis=0).astype(int),
        }
    )
    if BASELINE_SCHEME in means.columns:
        beats = means.lt(means[BASELINE_SCHEME], axis=0).sum(axis=0)
        out["beats_uniform"] = beats.astype(int)
    out.index.name = "scheme"
    logger.info(f"Compared {len(out)} scheme(s) across {len(means)} env(s)")
    return out.reset_index()
