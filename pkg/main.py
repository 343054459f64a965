"""
Command-Line Entry Point

Subcommands:
    simulate   collect logged data with the floored Thompson sampling agent
    learn      logged CSV -> tree policy (text form), optional score export
    evaluate   tree policy + environment -> regret report
    run        full replicated experiment -> results CSV
    bound      regret bound, tree entropy bound and rate exponent
    convert    classification CSV -> environment sanity report
    summarize  results CSV(s) -> per-cell and cross-env scheme tables

Exit codes: 0 success, 2 usage or configuration error, 3 data validation
error, 4 I/O error.
"""

import argparse
import logging
import sys

import numpy as np

from config import settings
from core.agent import FloorSchedule
from core.aipw import (
    RegretBoundInputs,
    SchemeKind,
    WeightScheme,
    rate_exponent,
    regret_bound,
    tree_entropy_bound,
    weight_sequence,
)
from core.data_io import (
    emit_results,
    read_logged_csv,
    read_tree,
    write_logged_csv,
    write_scores_csv,
    write_tree,
)
from core.env import (
    EnvKind,
    default_n_test,
    load_classification_csv,
    make_test_set,
)
from core.evaluation import regret
from core.exceptions import AppError, ConfigError
from core.nuisance import sequential_predictions
from core.treepolicy import TreeClassSpec, format_tree, validate_tree
from services.experiment import (
    ExperimentConfig,
    collect,
    learn_policy,
    load_environment,
    run_experiment,
)
from services.summary import cell_summary, load_results, scheme_summary

logger = logging.getLogger(__name__)


def _configure_logging() -> None:
    logging.basicConfig(
        level=settings.LOG_LEVEL.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _env_config(args, **extra) -> ExperimentConfig:
    return ExperimentConfig.from_sources(
        env=args.env, csv_path=args.csv, label=args.label, **extra
    )


def _add_env_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--env", choices=[k.value for k in EnvKind], default=EnvKind.SYNTHETIC.value
    )
    parser.add_argument("--csv", help="classification CSV (with --env classification)")
    parser.add_argument("--label", help="label column of the classification CSV")


def _comma_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


# --- Subcommands ---


def cmd_simulate(args) -> int:
    config = _env_config(args, alpha=args.alpha, base_seed=args.seed)
    env = load_environment(config)
    run = collect(env, args.T, config.alpha, config.base_seed)
    write_logged_csv(run.logged(), args.out)
    print(f"Wrote {args.T} logged steps on '{env.name}' to {args.out}")
    return 0


def cmd_learn(args) -> int:
    data = read_logged_csv(args.logged)
    K = args.K if args.K is not None else max(2, int(data.actions.max()) + 1)
    if data.actions.max() >= K:
        raise ConfigError(f"Logged action {data.actions.max()} needs K > {K}")
    scheme = WeightScheme.parse(args.scheme)
    sched = FloorSchedule(args.alpha, K)
    muhat = sequential_predictions(
        data.contexts, data.actions, data.rewards, data.propensities, K
    )
    result, scores = learn_policy(
        data.contexts,
        data.actions,
        data.rewards,
        data.propensities,
        muhat,
        scheme,
        sched,
        args.depth,
    )
    if args.scores_out:
        write_scores_csv(scores.weighted, args.scores_out)
    if args.out:
        write_tree(result.tree, args.out)
    print(format_tree(result.tree))
    print(f"objective = {result.objective:.17g}")
    return 0


def cmd_evaluate(args) -> int:
    config = _env_config(args, base_seed=args.seed, depth=args.depth)
    env = load_environment(config)
    spec = TreeClassSpec(L=config.depth, p=env.p, K=env.K)
    tree = read_tree(args.tree)
    validate_tree(tree, spec)
    n_test = args.n_test or default_n_test(env)
    test = make_test_set(env, n_test, seed=config.base_seed ^ settings.TEST_SEED_SALT)
    report = regret(tree, test, spec)
    print(f"policy_value = {report.policy_value:.10g}")
    print(f"best_value = {report.best_value:.10g}")
    print(f"regret = {report.regret:.10g}")
    print(f"n_test = {report.n_test}")
    return 0


def cmd_run(args) -> int:
    overrides = {
        "env": args.env,
        "csv_path": args.csv,
        "label": args.label,
        "alpha": args.alpha,
        "depth": args.depth,
        "horizons": _comma_list(args.horizons) if args.horizons else None,
        "schemes": _comma_list(args.schemes) if args.schemes else None,
        "n_reps": args.n_reps,
        "n_test": args.n_test,
        "base_seed": args.seed,
        "output": args.out,
    }
    config = ExperimentConfig.from_sources(args.config, **overrides)
    rows = run_experiment(config)
    emit_results(rows, config.output)
    print(f"Wrote {len(rows)} result rows to {config.output}")
    return 0


def cmd_bound(args) -> int:
    scheme = WeightScheme.parse(args.scheme)
    sched = FloorSchedule(args.alpha, args.K)
    kappa = args.kappa
    if kappa is None:
        kappa = tree_entropy_bound(args.L, args.p, args.K)
    inputs = RegretBoundInputs(
        M=args.M,
        T=args.T,
        delta=args.delta,
        kappa=kappa,
        h=weight_sequence(scheme, args.T, sched),
        g=sched.sequence(args.T),
    )
    beta = {
        SchemeKind.UNIFORM: 0.0,
        SchemeKind.POWER: scheme.beta,
        SchemeKind.FLOOR: args.alpha,
    }[scheme.kind]
    print(f"kappa = {kappa:.6f}")
    print(f"regret_bound = {regret_bound(inputs):.6g}")
    print(f"rate_exponent = {rate_exponent(args.alpha, beta):g}")
    return 0


def cmd_convert(args) -> int:
    env = load_classification_csv(args.csv, args.label)
    counts = np.bincount(env.labels, minlength=env.K)
    print(f"name = {env.name}")
    print(f"rows = {env.n_rows}")
    print(f"p = {env.p}")
    print(f"K = {env.K}")
    for code, (raw, count) in enumerate(zip(env.label_values, counts)):
        print(f"arm {code}: label {raw!r}, {count} rows")
    print(f"default n_test = {default_n_test(env)}")
    return 0


def cmd_summarize(args) -> int:
    df = load_results(args.results)
    cells = cell_summary(df)
    schemes = scheme_summary(df)
    print(cells.to_string(index=False))
    print()
    print(schemes.to_string(index=False))
    if args.out_prefix:
        cells.to_csv(f"{args.out_prefix}_cells.csv", index=False)
        schemes.to_csv(f"{args.out_prefix}_schemes.csv", index=False)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="policylearn",
        description="Offline policy learning from adaptively collected data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="collect and dump a logged CSV")
    _add_env_args(p)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="learn a tree policy from a logged CSV")
    p.add_argument("--logged", required=True)
    p.add_argument("--scheme", default="uniform", help="uniform, floor, power:<beta>")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--depth", type=int, default=2, choices=[1, 2, 3])
    p.add_argument("--K", type=int, help="number of arms (default: inferred)")
    p.add_argument("--out", help="write the tree text form here")
    p.add_argument("--scores-out", help="write the reweighted score matrix here")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="regret of a tree policy")
    _add_env_args(p)
    p.add_argument("--tree", required=True)
    p.add_argument("--depth", type=int, default=2, choices=[1, 2, 3])
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="replicated experiment")
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--env", choices=[k.value for k in EnvKind])
    p.add_argument("--csv")
    p.add_argument("--label")
    p.add_argument("--alpha", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--horizons", help="comma-separated, strictly increasing")
    p.add_argument("--schemes", help="comma-separated scheme tokens")
    p.add_argument("--n-reps", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bound", help="regret and entropy bounds")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--scheme", default="floor")
    p.add_argument("--kappa", type=float, help="override the tree entropy bound")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("convert", help="classification CSV sanity report")
    p.add_argument("--csv", required=True)
    p.add_argument("--label", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("summarize", help="aggregate results CSVs")
    p.add_argument("results", nargs="+")
    p.add_argument("--out-prefix", help="also write <prefix>_cells/_schemes.csv")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AppError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        # invariant violations raised by plain constructors
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
