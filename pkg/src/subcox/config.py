"""Flat key-value experiment configuration.

Format: one `key = value` pair per line, `#` comments and blank lines
ignored. The environment variables SUBCOX_SEED and SUBCOX_OUTPUT_DIR
override `seed` and `output_dir` (nothing else is overridable).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import UsageError
from .pipeline import ModelSpec, default_suite, parse_suite

_BOOL = {"true": True, "false": False, "1": True, "0": False}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str  # simulate | real
    n: int | None = None
    p: int | None = None
    epsilon: float | None = None
    input_csv: str | None = None
    repetitions: int = 100
    seed: int = 0
    suite: tuple[ModelSpec, ...] = field(default_factory=default_suite)
    output_dir: str = "subcox-report"
    threads: int = 1
    classifier_cv_folds: int = 10
    cox_cv_folds: int = 10
    rf_trees: int = 500
    rf_min_node_size: int = 10
    multinomial_n_lambda: int = 30
    cox_n_lambda: int = 100
    subsample_proportion: float = 0.632

    def __post_init__(self):
        if self.mode not in ("simulate", "real"):
            raise UsageError(f"mode must be 'simulate' or 'real', got {self.mode!r}")
        if self.mode == "simulate":
            if self.n is None or self.p is None or self.epsilon is None:
                raise UsageError("simulate mode needs n, p and epsilon")
            if not 0.0 <= self.epsilon <= 1.0:
                raise UsageError(f"epsilon must lie in [0, 1], got {self.epsilon}")
            if self.n < 2 or self.p < 12:
                raise UsageError("simulate mode needs n >= 2 and p >= 12")
        else:
            if not self.input_csv:
                raise UsageError("real mode needs input_csv")
            if not Path(self.input_csv).exists():
                raise UsageError(f"input_csv does not exist: {self.input_csv}")
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


_SCHEMA = {
    "mode": str,
    "n": int,
    "p": int,
    "epsilon": float,
    "input_csv": str,
    "repetitions": int,
    "seed": int,
    "suite": str,
    "output_dir": str,
    "threads": int,
    "classifier_cv_folds": int,
    "cox_cv_folds": int,
    "rf_trees": int,
    "rf_min_node_size": int,
    "multinomial_n_lambda": int,
    "cox_n_lambda": int,
    "subsample_proportion": float,
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source}: line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise UsageError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"{source}: line {lineno}: duplicate key {key!r}")
        typ = _SCHEMA[key]
        try:
            values[key] = typ(value)
        except ValueError:
            raise UsageError(
                f"{source}: line {lineno}: cannot parse {value!r} as {typ.__name__}"
            ) from None

    if "suite" in values:
        values["suite"] = parse_suite(values["suite"])

    env_seed = os.environ.get("SUBCOX_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"SUBCOX_SEED must be an integer, got {env_seed!r}") from None
    env_out = os.environ.get("SUBCOX_OUTPUT_DIR")
    if env_out is not None:
        values["output_dir"] = env_out

    if "mode" not in values:
        raise UsageError(f"{source}: missing required key 'mode'")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def config_echo(config: ExperimentConfig) -> dict:
    """Config as a JSON-safe mapping, sufficient to reproduce the run."""
    suite_text = ",".join(e.name.replace("fixed_", "fixed:") for e in config.suite)
    echo = {
        "mode": config.mode,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "suite": suite_text,
        "output_dir": config.output_dir,
        "threads": config.threads,
        "classifier_cv_folds": config.classifier_cv_folds,
        "cox_cv_folds": config.cox_cv_folds,
        "rf_trees": config.rf_trees,
        "rf_min_node_size": config.rf_min_node_size,
        "multinomial_n_lambda": config.multinomial_n_lambda,
        "cox_n_lambda": config.cox_n_lambda,
        "subsample_proportion": config.subsample_proportion,
    }
    if config.mode == "simulate":
        echo.update(n=config.n, p=config.p, epsilon=config.epsilon)
    else:
        echo.update(input_csv=config.input_csv)
    return echo
