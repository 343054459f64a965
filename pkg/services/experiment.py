"""
Experiment Service Module

Orchestrates the end-to-end protocol behind the `run` command:

1. draw one shared noise-free test set and its best-in-class reference,
2. per replication, collect data with the floored Thompson sampling agent up
   to the largest horizon, recording strictly-past nuisance predictions,
3. per horizon prefix and weight scheme, build reweighted AIPW scores, run
   the exact tree search and measure regret; the frozen agent is scored at
   every horizon too.

Replications run through joblib; rows are sorted before they are returned,
so the output does not depend on worker scheduling.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from config import settings
from core.agent import AgentState, FloorSchedule, GreedyPolicy, select_and_log
from core.aipw import ScoreMatrix, WeightScheme
from core.data_io import LoggedData, ResultRow
from core.env import (
    EnvKind,
    Environment,
    TestSet,
    default_n_test,
    load_classification_csv,
    make_linear,
    make_synthetic,
    make_test_set,
    sample_step,
)
from core.evaluation import agent_regret, best_in_class, regret
from core.exceptions import ConfigError, DataFileNotFoundError
from core.nuisance import NuisanceModel
from core.treepolicy import SearchResult, TreeClassSpec, exact_search

logger = logging.getLogger(__name__)

# --- Defaults ---
DEFAULT_HORIZONS = [1000, 1778, 3162, 5623, 10000]
AGENT_SCHEME = "agent"
LIST_KEYS = {"horizons", "schemes"}


def default_schemes(alpha: float) -> list[str]:
    """h_t = t^(-beta) for beta in {0, alpha/2, alpha, 2 alpha}."""
    return [
        "uniform",
        f"power:{alpha / 2:g}",
        f"power:{alpha:g}",
        f"power:{2 * alpha:g}",
    ]


class ExperimentConfig(BaseModel):
    """Validated settings of one `run` invocation."""

    model_config = ConfigDict(extra="forbid")

    env: EnvKind = EnvKind.SYNTHETIC
    csv_path: Path | None = None
    label: str | None = None
    alpha: float = Field(0.5, ge=0.0, le=1.0)
    depth: int = 2
    horizons: list[int] = Field(default_factory=lambda: list(DEFAULT_HORIZONS))
    schemes: list[str] | None = None
    n_reps: int = Field(50, ge=1)
    n_test: int | None = Field(None, ge=1)
    base_seed: int = Field(0, ge=0)
    output: Path = Path("results.csv")

    @field_validator("depth")
    @classmethod
    def _check_depth(cls, v: int) -> int:
        if v not in (1, 2, 3):
            raise ValueError(f"depth must be 1, 2 or 3, got {v}")
        return v

    @field_validator("horizons")
    @classmethod
    def _check_horizons(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one horizon is required")
        if v[0] < 1:
            raise ValueError(f"horizons must be positive, got {v[0]}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"horizons must be strictly increasing, got {v}")
        return v

    @field_validator("schemes")
    @classmethod
    def _check_schemes(cls, v: list[str] | None) -> list[str] | None:
        if v is None:
            return v
        if not v:
            raise ValueError("at least one weight scheme is required")
        tokens = []
        for token in v:
            try:
                tokens.append(WeightScheme.parse(token).token)
            except ConfigError as e:
                raise ValueError(str(e)) from None
        if len(set(tokens)) != len(tokens):
            raise ValueError(f"duplicate weight schemes in {v}")
        return tokens

    @model_validator(mode="after")
    def _check_env(self) -> "ExperimentConfig":
        if self.env is EnvKind.CLASSIFICATION and (
            self.csv_path is None or not self.label
        ):
            raise ValueError("classification runs need both csv_path and label")
        if self.schemes is None:
            self.schemes = default_schemes(self.alpha)
        return self

    @property
    def weight_schemes(self) -> list[WeightScheme]:
        return [WeightScheme.parse(token) for token in self.schemes]

    @classmethod
    def from_sources(cls, path=None, **overrides) -> "ExperimentConfig":
        """Config file values overridden by non-None keyword arguments."""
        values = read_config_file(path) if path is not None else {}
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            details = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigError(f"Invalid experiment configuration: {details}") from None


def read_config_file(path) -> dict:
    """Parses `key = value` lines; `#` starts a comment, lists are comma-separated."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataFileNotFoundError(f"Config file not found: {path}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    logger.debug(f"Read {len(values)} keys from config file {path}")
    return values


def load_environment(config: ExperimentConfig) -> Environment:
    if config.env is EnvKind.SYNTHETIC:
        return make_synthetic(config.base_seed)
    if config.env is EnvKind.LINEAR:
        return make_linear(config.base_seed)
    return load_classification_csv(config.csv_path, config.label)


@dataclass
class CollectionRun:
    """Everything one replication's collection loop records."""

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    probs: np.ndarray
    muhat: np.ndarray
    snapshots: dict[int, GreedyPolicy] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.actions.shape[0])

    def logged(self, T: int | None = None) -> LoggedData:
        T = self.horizon if T is None else T
        return LoggedData(
            contexts=self.contexts[:T],
            actions=self.actions[:T],
            rewards=self.rewards[:T],
            propensities=self.propensities[:T],
        )


def collect(
    env: Environment,
    horizon: int,
    alpha: float,
    seed,
    snapshots=(),
    nuisance: NuisanceModel | None = None,
) -> CollectionRun:
    """Runs the agent for `horizon` steps on one Generator seeded with `seed`.

    The nuisance prediction for step t is taken before step t's sample is
    added, so row t of `muhat` only depends on steps 1..t-1. The greedy
    policy is frozen after every step listed in `snapshots`.
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be at least 1, got {horizon}")
    wanted = set(snapshots)
    if any(t < 1 or t > horizon for t in wanted):
        raise ConfigError(f"snapshot times {sorted(wanted)} outside 1..{horizon}")

    rng = np.random.default_rng(seed)
    sched = FloorSchedule(alpha, env.K)
    state = AgentState(env.p, env.K)
    model = NuisanceModel(env.p, env.K) if nuisance is None else nuisance

    run = CollectionRun(
        contexts=np.empty((horizon, env.p)),
        actions=np.empty(horizon, dtype=np.int64),
        rewards=np.empty(horizon),
        propensities=np.empty(horizon),
        probs=np.empty((horizon, env.K)),
        muhat=np.empty((horizon, env.K)),
    )
    for t in range(1, horizon + 1):
        step = sample_step(env, rng)
        run.muhat[t - 1] = model.predict(step[0])
        sample = select_and_log(state, step, t, sched, rng)
        model.update(sample)
        run.contexts[t - 1] = sample.x
        run.actions[t - 1] = sample.w
        run.rewards[t - 1] = sample.y
        run.propensities[t - 1] = sample.e
        run.probs[t - 1] = sample.probs
        if t in wanted:
            run.snapshots[t] = state.greedy_policy()
    logger.info(
        f"Collected {horizon} steps on '{env.name}' (alpha={alpha}, seed={seed})"
    )
    return run


def learn_policy(
    contexts: np.ndarray,
    actions: np.ndarray,
    rewards: np.ndarray,
    propensities: np.ndarray,
    muhat: np.ndarray,
    scheme: WeightScheme,
    sched: FloorSchedule,
    depth: int,
) -> tuple[SearchResult, ScoreMatrix]:
    """Reweighted AIPW scores and the tree maximizing them."""
    scores = ScoreMatrix.from_logged(actions, rewards, propensities, muhat)
    scores = scores.reweighted(scheme, sched)
    spec = TreeClassSpec(L=depth, p=contexts.shape[1], K=muhat.shape[1])
    return exact_search(scores.weighted, contexts, spec), scores


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def run_replication(
    config: ExperimentConfig,
    env: Environment,
    test: TestSet,
    best_value: float,
    rep: int,
) -> list[ResultRow]:
    """All result rows of replication `rep` (seed base_seed XOR rep)."""
    seed = config.base_seed ^ rep
    horizons = config.horizons
    run = collect(env, horizons[-1], config.alpha, seed, snapshots=horizons)
    sched = FloorSchedule(config.alpha, env.K)
    spec = TreeClassSpec(L=config.depth, p=env.p, K=env.K)

    rows = []
    for T in horizons:
        start = time.perf_counter()
        agent = agent_regret(run.snapshots[T], test, spec, best_value)
        rows.append(
            ResultRow(
                env=env.name,
                T=T,
                scheme=AGENT_SCHEME,
                rep=rep,
                regret=agent.regret,
                agent_regret=agent.regret,
                wall_ms=_elapsed_ms(start),
            )
        )
        for scheme in config.weight_schemes:
            start = time.perf_counter()
            result, _ = learn_policy(
                run.contexts[:T],
                run.actions[:T],
                run.rewards[:T],
                run.propensities[:T],
                run.muhat[:T],
                scheme,
                sched,
                config.depth,
            )
            report = regret(result.tree, test, spec, best_value)
            rows.append(
                ResultRow(
                    env=env.name,
                    T=T,
                    scheme=scheme.token,
                    rep=rep,
                    regret=report.regret,
                    agent_regret=agent.regret,
                    wall_ms=_elapsed_ms(start),
                )
            )
    logger.info(f"Replication {rep} finished ({len(rows)} rows)")
    return rows


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Full protocol; rows sorted by (env, T, scheme, rep)."""
    env = load_environment(config)
    n_test = config.n_test or default_n_test(env)
    test = make_test_set(env, n_test, seed=config.base_seed ^ settings.TEST_SEED_SALT)
    spec = TreeClassSpec(L=config.depth, p=env.p, K=env.K)
    _, best_value = best_in_class(test, spec)

    logger.info(
        f"Running {config.n_reps} replication(s) on '{env.name}': "
        f"horizons={config.horizons}, schemes={config.schemes}, "
        f"n_jobs={settings.N_JOBS}"
    )
    per_rep = Parallel(n_jobs=settings.N_JOBS)(
        delayed(run_replication)(config, env, test, best_value, rep)
        for rep in range(config.n_reps)
    )
    rows = [row for rep_rows in per_rep for row in rep_rows]
    rows.sort(key=lambda r: (r.env, r.T, r.scheme, r.rep))
    return rows
