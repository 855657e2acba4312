"""Command-line interface.

Subcommands: simulate (write a synthetic dataset CSV), weights (estimate
subgroup weights for a dataset CSV), fit (fit one weighted Cox model),
experiment (run the full repetition pipeline into a report directory).

Exit codes: 0 success, 1 usage, 2 data, 3 numerical. Every error path
prints a single `error:<kind>: message` line to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_echo, load_config
from .cox import PathConfig, cv_select_lambda, fit_cox_lasso_path
from .data import (
    SurvivalDataset,
    _format_number,
    read_dataset_csv,
    write_dataset_csv,
)
from .exceptions import DataError, NumericalError, UsageError
from .pipeline import ExperimentSettings, run_experiment
from .report import write_report_dir
from .rng import derive_seed
from .simulate import SimulationScenario, generate_scenario
from .weights import (
    ClassifierSpec,
    build_classification_features,
    compute_weights,
    cross_validated_probabilities,
    fixed_weights,
    group_auc,
)

_CLASSIFIERS = {
    "lasso": "multinomial_lasso",
    "ridge": "multinomial_ridge",
    "rf": "random_forest",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subcox",
        description="Weighted lasso Cox regression for patient subgroups",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset CSV")
    p_sim.add_argument("--n", type=int, required=True, help="rows per subgroup")
    p_sim.add_argument("--p", type=int, required=True, help="number of genes (>= 12)")
    p_sim.add_argument("--epsilon", type=float, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--output", default="dataset.csv")

    p_w = sub.add_parser("weights", help="estimate subgroup weights for a dataset")
    p_w.add_argument("--input", required=True, help="dataset CSV")
    p_w.add_argument("--classifier", choices=sorted(_CLASSIFIERS), default="lasso")
    p_w.add_argument("--folds", type=int, default=10)
    p_w.add_argument("--seed", type=int, default=0)
    p_w.add_argument("--output", default="weights.csv")

    p_fit = sub.add_parser("fit", help="fit one weighted Cox model")
    p_fit.add_argument("--input", required=True, help="dataset CSV")
    p_fit.add_argument(
        "--weights",
        required=True,
        help="weight source: estimated[:lasso|ridge|rf] | fixed:W | subgroup | all",
    )
    p_fit.add_argument("--subgroup", help="target subgroup label")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--folds", type=int, default=10)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="skip CV and fit at this single penalty")
    p_fit.add_argument("--output", default="model.json")

    p_exp = sub.add_parser("experiment", help="run the repetition pipeline")
    p_exp.add_argument("config", help="flat key-value config file")
    p_exp.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker processes (default: config value, else available parallelism)",
    )
    return parser


def cmd_simulate(args) -> int:
    if not 0.0 <= args.epsilon <= 1.0:
        raise UsageError(f"epsilon must lie in [0, 1], got {args.epsilon}")
    if args.n < 2:
        raise UsageError("n must be >= 2")
    if args.p < 12:
        raise UsageError("p must be >= 12")
    scenario = SimulationScenario(
        n_per_subgroup=args.n, p=args.p, epsilon=args.epsilon, seed=args.seed
    )
    dataset = generate_scenario(scenario)
    write_dataset_csv(dataset, args.output)
    sizes = ", ".join(
        f"{lab}={int(np.sum(dataset.subgroups == c + 1))}"
        for c, lab in enumerate(dataset.subgroup_labels)
    )
    censoring = 1.0 - float(dataset.events.mean())
    print(f"wrote {dataset.n} rows to {args.output}")
    print(f"subgroup sizes: {sizes}")
    print(f"censoring rate: {censoring:.3f}")
    return 0


def cmd_weights(args) -> int:
    dataset = read_dataset_csv(args.input)
    spec = ClassifierSpec(
        method=_CLASSIFIERS[args.classifier], cv_folds=args.folds, seed=args.seed
    )
    probs = cross_validated_probabilities(dataset, spec)
    _, labels = build_classification_features(dataset)
    wm = compute_weights(probs, labels)
    S = dataset.subgroup_count
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id," + ",".join(f"w_{s}" for s in range(1, S + 1)) + "\n")
        for i in range(dataset.n):
            row = ",".join(_format_number(v) for v in wm.weights[i])
            fh.write(f"{i + 1},{row}\n")
    print(f"wrote {dataset.n}x{S} weight table to {args.output}")
    for code in range(1, S + 1):
        mask = labels == code
        auc = group_auc(probs.probs[:, code - 1], mask)
        print(f"AUC[{dataset.label_of(code)} vs rest]: {auc:.3f}")
    if set(dataset.subgroup_labels) == {"1A", "1B", "2A", "2B"}:
        g1_cols = [i for i, lab in enumerate(dataset.subgroup_labels) if lab[0] == "1"]
        score = probs.probs[:, g1_cols].sum(axis=1)
        g1_codes = [i + 1 for i in g1_cols]
        auc = group_auc(score, np.isin(labels, g1_codes))
        print(f"AUC[group 1 vs group 2]: {auc:.3f}")
    return 0


def _parse_weight_source(text: str):
    if text == "subgroup":
        return ("subgroup", None)
    if text == "all":
        return ("all", None)
    if text.startswith("fixed:"):
        try:
            w = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad fixed weight in {text!r}") from None
        if not 0.0 <= w <= 1.0:
            raise UsageError(f"fixed weight must lie in [0, 1], got {w}")
        return ("fixed", w)
    if text == "estimated" or text.startswith("estimated:"):
        method = text.split(":", 1)[1] if ":" in text else "lasso"
        if method not in _CLASSIFIERS:
            raise UsageError(f"unknown classifier {method!r}")
        return ("estimated", _CLASSIFIERS[method])
    raise UsageError(f"unknown weight source {text!r}")


def cmd_fit(args) -> int:
    kind, param = _parse_weight_source(args.weights)
    dataset = read_dataset_csv(args.input)
    _, labels = build_classification_features(dataset)

    target_code = None
    if kind != "all":
        if not args.subgroup:
            raise UsageError(f"--subgroup is required for --weights {args.weights}")
        if args.subgroup not in dataset.subgroup_labels:
            raise UsageError(
                f"subgroup {args.subgroup!r} not in dataset "
                f"(has {', '.join(dataset.subgroup_labels)})"
            )
        target_code = dataset.subgroup_labels.index(args.subgroup) + 1

    fit_data = dataset
    if kind == "subgroup":
        w = fixed_weights(labels, target_code, 0.0)
    elif kind == "fixed":
        w = fixed_weights(labels, target_code, param)
    elif kind == "estimated":
        spec = ClassifierSpec(
            method=param, cv_folds=args.folds, seed=derive_seed(args.seed, "clf")
        )
        probs = cross_validated_probabilities(dataset, spec)
        w = compute_weights(probs, labels).column(target_code)
    else:  # combined model with subgroup dummy covariates
        S = dataset.subgroup_count
        dummies = np.zeros((dataset.n, S - 1))
        names = []
        for code in range(2, S + 1):
            dummies[:, code - 2] = (dataset.subgroups == code).astype(float)
            names.append(f"subgroup_{dataset.label_of(code)}")
        fit_data = dataset.with_extra_features(dummies, names)
        w = np.ones(dataset.n)

    config = PathConfig(lambdas=(args.lam,) if args.lam is not None else None)
    path = fit_cox_lasso_path(fit_data, w, config)
    if args.lam is None:
        path = cv_select_lambda(
            fit_data, w, path, k=args.folds, seed=derive_seed(args.seed, "coxcv")
        )
        selected = path.selected_coefficients()
    else:
        selected = path.coefficients(0)

    nonzero = {
        fit_data.feature_names[j]: selected.beta[j] for j in selected.nonzero
    }
    payload = {
        "weight_source": args.weights,
        "target_subgroup": args.subgroup if kind != "all" else None,
        "selected_lambda": selected.lam,
        "n_nonzero": len(nonzero),
        "coefficients": nonzero,
        "lambda_grid": path.lambdas.tolist(),
        "cv_deviance_mean": (
            path.cv_deviance_mean.tolist() if path.cv_deviance_mean is not None else None
        ),
        "cv_deviance_se": (
            path.cv_deviance_se.tolist() if path.cv_deviance_se is not None else None
        ),
    }
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"selected lambda {selected.lam:.6g} with {len(nonzero)} nonzero coefficients"
        f" -> {args.output}"
    )
    return 0


def cmd_experiment(args) -> int:
    config = load_config(args.config)
    threads = args.threads
    if threads is None:
        threads = config.threads if config.threads > 0 else (os.cpu_count() or 1)
    if threads < 1:
        raise UsageError("threads must be >= 1")

    settings = ExperimentSettings(
        suite=config.suite,
        repetitions=config.repetitions,
        master_seed=config.seed,
        path_config=PathConfig(n_lambda=config.cox_n_lambda),
        classifier_spec=ClassifierSpec(
            cv_folds=config.classifier_cv_folds,
            n_trees=config.rf_trees,
            min_node_size=config.rf_min_node_size,
            n_lambda=config.multinomial_n_lambda,
        ),
        cox_cv_folds=config.cox_cv_folds,
        subsample_proportion=config.subsample_proportion,
        threads=threads,
    )
    if config.mode == "simulate":
        scenario = SimulationScenario(
            n_per_subgroup=config.n, p=config.p, epsilon=config.epsilon, seed=0
        )
        report, results = run_experiment(settings, scenario=scenario)
    else:
        dataset = read_dataset_csv(config.input_csv)
        report, results = run_experiment(settings, dataset=dataset)

    out = write_report_dir(config.output_dir, report, results, config_echo(config))
    print(f"wrote report to {out}")
    for m in report.models:
        overall = report.cindex_overall[m]
        text = "NA" if overall is None else f"{overall:.4f}"
        print(f"mean C-index[{m}]: {text}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; normalize the exit code
        return 0 if exc.code == 0 else 1
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "weights":
            return cmd_weights(args)
        if args.command == "fit":
            return cmd_fit(args)
        return cmd_experiment(args)
    except UsageError as exc:
        print(f"error:usage: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error:numerical: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
