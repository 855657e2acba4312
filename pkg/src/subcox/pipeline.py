"""Experiment orchestration: repeated train/test generation or splitting,
weight estimation, fitting the model suite per target subgroup, and
aggregation into C-index / inclusion-frequency / mean-coefficient reports.

The default suite has 14 entries: estimated weights via three classifiers
(lasso, ridge, rf), nine fixed weights (0.1 .. 0.9), the subgroup-only model
(sub) and the pooled model with subgroup dummy covariates (all).

Within one repetition every Cox fit shares a single stratified
cross-validation fold assignment, so weight schemes that define the same
fitting problem (e.g. fixed weight 0 versus the subgroup-only model) produce
identical fits.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cox import (
    CoxFitPath,
    PathConfig,
    fit_cox_lasso_cv,
    predict_risk,
)
from .data import SurvivalDataset
from .exceptions import ConcordanceUndefinedError, DataError, NumericalError
from .rng import derive_seed
from .simulate import GROUP_OF_SUBGROUP, SUBGROUP_LABELS, SimulationScenario, generate_scenario
from .survival import concordance_index
from .weights import (
    ClassifierSpec,
    ProbabilityMatrix,
    WeightMatrix,
    build_classification_features,
    compute_weights,
    cross_validated_probabilities,
    fit_multinomial,
    fit_random_forest,
    fixed_weights,
    group_auc,
)

FIXED_WEIGHT_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

_CLASSIFIER_SHORT = {
    "multinomial_lasso": "lasso",
    "multinomial_ridge": "ridge",
    "random_forest": "rf",
}
_CLASSIFIER_LONG = {v: k for k, v in _CLASSIFIER_SHORT.items()}


@dataclass(frozen=True)
class ModelSpec:
    """One suite entry: how training weights are assembled."""

    kind: str  # estimated | fixed | subgroup | combined
    classifier: str | None = None
    w: float | None = None

    def __post_init__(self):
        if self.kind == "estimated":
            if self.classifier not in _CLASSIFIER_SHORT:
                raise DataError(f"unknown classifier {self.classifier!r}")
        elif self.kind == "fixed":
            if self.w is None or not 0.0 <= self.w <= 1.0:
                raise DataError("fixed-weight entries need w in [0, 1]")
        elif self.kind not in ("subgroup", "combined"):
            raise DataError(f"unknown model kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "estimated":
            return _CLASSIFIER_SHORT[self.classifier]
        if self.kind == "fixed":
            return f"fixed_{self.w:g}"
        return "sub" if self.kind == "subgroup" else "all"


def default_suite() -> tuple[ModelSpec, ...]:
    entries = [ModelSpec("estimated", classifier=m) for m in _CLASSIFIER_SHORT]
    entries += [ModelSpec("fixed", w=w) for w in FIXED_WEIGHT_GRID]
    entries += [ModelSpec("subgroup"), ModelSpec("combined")]
    return tuple(entries)


def parse_suite(text: str) -> tuple[ModelSpec, ...]:
    """Parse 'lasso,ridge,rf,fixed:0.3,sub,all' style selections."""
    if text.strip() == "default":
        return default_suite()
    entries = []
    for token in text.split(","):
        token = token.strip()
        if token in _CLASSIFIER_LONG:
            entries.append(ModelSpec("estimated", classifier=_CLASSIFIER_LONG[token]))
        elif token == "sub":
            entries.append(ModelSpec("subgroup"))
        elif token == "all":
            entries.append(ModelSpec("combined"))
        elif token.startswith("fixed:"):
            entries.append(ModelSpec("fixed", w=float(token.split(":", 1)[1])))
        else:
            raise DataError(f"unknown suite entry {token!r}")
    if len(set(e.name for e in entries)) != len(entries):
        raise DataError("suite entries must be unique")
    return tuple(entries)


@dataclass(frozen=True)
class ClassifierEstimate:
    """Per-classifier artifacts of one repetition."""

    probability_matrix: ProbabilityMatrix
    weight_matrix: WeightMatrix
    model: object
    train_group_auc: float | None
    test_group_auc: float | None
    test_ovr_auc: dict[str, float]


@dataclass(frozen=True)
class RepetitionRecord:
    model: str
    subgroup: str
    selected_lambda: float
    beta: np.ndarray
    cindex: float | None


@dataclass(frozen=True)
class RepetitionResult:
    index: int
    seed: int
    records: tuple[RepetitionRecord, ...]
    classifier_estimates: dict[str, ClassifierEstimate] = field(default_factory=dict)

    def record(self, model: str, subgroup: str) -> RepetitionRecord:
        for rec in self.records:
            if rec.model == model and rec.subgroup == subgroup:
                return rec
        raise KeyError((model, subgroup))


def stratified_subsample(
    dataset: SurvivalDataset, proportion: float = 0.632, seed: int = 0
) -> tuple[SurvivalDataset, SurvivalDataset]:
    """Split into train/test within each (subgroup x event) stratum:
    floor(proportion * m + 0.5) rows to train, at least one row per side."""
    if not 0.0 < proportion < 1.0:
        raise DataError("proportion must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for code in range(1, dataset.subgroup_count + 1):
        for ev in (0, 1):
            stratum = np.flatnonzero((dataset.subgroups == code) & (dataset.events == ev))
            m = stratum.size
            label = f"(subgroup={dataset.label_of(code)}, event={ev})"
            if m == 0:
                raise DataError(f"stratum {label} is empty")
            if m < 2:
                raise DataError(
                    f"stratum {label} has a single member and cannot be split"
                )
            k = int(np.floor(proportion * m + 0.5))
            k = min(max(k, 1), m - 1)
            perm = stratum[rng.permutation(m)]
            train_idx.extend(perm[:k].tolist())
            test_idx.extend(perm[k:].tolist())
    return (
        dataset.subset(np.sort(np.asarray(train_idx))),
        dataset.subset(np.sort(np.asarray(test_idx))),
    )


def _group_one_mask(codes, subgroup_labels) -> np.ndarray | None:
    if set(subgroup_labels) != set(SUBGROUP_LABELS):
        return None
    group1_codes = [
        i + 1 for i, lab in enumerate(subgroup_labels) if GROUP_OF_SUBGROUP[lab] == 1
    ]
    return np.isin(codes, group1_codes)


def _group_one_score(probs, subgroup_labels) -> np.ndarray:
    cols = [i for i, lab in enumerate(subgroup_labels) if GROUP_OF_SUBGROUP[lab] == 1]
    return probs[:, cols].sum(axis=1)


def estimate_classifier(
    train: SurvivalDataset,
    test: SurvivalDataset | None,
    spec: ClassifierSpec,
) -> ClassifierEstimate:
    """Out-of-fold weights on the training data plus a full-data model,
    with group-1-vs-2 AUC diagnostics where the subgroup layout defines the
    two latent groups."""
    features, labels = build_classification_features(train)
    if spec.method in ("multinomial_lasso", "multinomial_ridge"):
        penalty = "lasso" if spec.method == "multinomial_lasso" else "ridge"
        model = fit_multinomial(features, labels, penalty, spec=spec)
        prob_matrix = ProbabilityMatrix(
            probs=model.oof_probs, folds=model.folds, method=spec.method
        )
    else:
        prob_matrix = cross_validated_probabilities(train, spec)
        model = fit_random_forest(
            features,
            labels,
            dataclasses.replace(spec, seed=derive_seed(spec.seed, "rf-full")),
        )
    weight_matrix = compute_weights(prob_matrix, labels)

    mask_train = _group_one_mask(train.subgroups, train.subgroup_labels)
    train_auc = None
    if mask_train is not None:
        train_auc = group_auc(
            _group_one_score(prob_matrix.probs, train.subgroup_labels), mask_train
        )

    test_auc = None
    test_ovr: dict[str, float] = {}
    if test is not None:
        test_features, test_codes = build_classification_features(test)
        probs_test = model.predict_proba(test_features)
        for code in range(1, test.subgroup_count + 1):
            in_sub = test_codes == code
            if in_sub.any() and (~in_sub).any():
                test_ovr[test.label_of(code)] = group_auc(
                    probs_test[:, code - 1], in_sub
                )
        mask_test = _group_one_mask(test_codes, test.subgroup_labels)
        if mask_test is not None:
            test_auc = group_auc(
                _group_one_score(probs_test, test.subgroup_labels), mask_test
            )
    return ClassifierEstimate(
        probability_matrix=prob_matrix,
        weight_matrix=weight_matrix,
        model=model,
        train_group_auc=train_auc,
        test_group_auc=test_auc,
        test_ovr_auc=test_ovr,
    )


def _dummy_block(dataset: SurvivalDataset) -> tuple[np.ndarray, list[str]]:
    """One-hot columns for every subgroup except the first (reference)."""
    S = dataset.subgroup_count
    cols = np.zeros((dataset.n, S - 1))
    names = []
    for code in range(2, S + 1):
        cols[:, code - 2] = (dataset.subgroups == code).astype(np.float64)
        names.append(f"subgroup_{dataset.label_of(code)}")
    return cols, names


def _fit_with_cv(dataset, w, path_config, cv_folds, cv_seed) -> CoxFitPath:
    return fit_cox_lasso_cv(
        dataset, w, path_config, k=cv_folds, seed=cv_seed, patience=10
    )


def _cindex_or_none(times, events, scores) -> float | None:
    try:
        return concordance_index(times, events, scores)
    except ConcordanceUndefinedError:
        return None


def run_repetition(
    train: SurvivalDataset,
    test: SurvivalDataset,
    suite: tuple[ModelSpec, ...] = None,
    seed: int = 0,
    path_config: PathConfig | None = None,
    classifier_spec: ClassifierSpec | None = None,
    cox_cv_folds: int = 10,
) -> RepetitionResult:
    """Fit every suite entry for every target subgroup on the training data
    and score test C-indices on the target subgroup's test rows only.

    The pooled 'all' model is fitted once (it does not depend on the target)
    with the subgroup indicator one-hot encoded against the first label.
    """
    suite = suite or default_suite()
    path_config = path_config or PathConfig()
    base_spec = classifier_spec or ClassifierSpec()
    if train.feature_names != test.feature_names:
        raise DataError("train and test must share the feature schema")

    estimates: dict[str, ClassifierEstimate] = {}
    for entry in suite:
        if entry.kind != "estimated" or entry.name in estimates:
            continue
        spec = dataclasses.replace(
            base_spec,
            method=entry.classifier,
            seed=derive_seed(seed, "clf", entry.classifier),
        )
        estimates[entry.name] = estimate_classifier(train, test, spec)

    cv_seed = derive_seed(seed, "coxcv")
    records: list[RepetitionRecord] = []
    for entry in suite:
        if entry.kind == "combined":
            dummies, names = _dummy_block(train)
            aug_train = train.with_extra_features(dummies, names)
            test_dummies, _ = _dummy_block(test)
            aug_test = test.with_extra_features(test_dummies, names)
            path = _fit_with_cv(
                aug_train, np.ones(train.n), path_config, cox_cv_folds, cv_seed
            )
            coefs = path.selected_coefficients()
            for code in range(1, train.subgroup_count + 1):
                mask = aug_test.subgroups == code
                cindex = None
                if mask.any():
                    scores = predict_risk(coefs, aug_test.X[mask])
                    cindex = _cindex_or_none(
                        aug_test.times[mask], aug_test.events[mask], scores
                    )
                records.append(
                    RepetitionRecord(
                        model=entry.name,
                        subgroup=train.label_of(code),
                        selected_lambda=coefs.lam,
                        beta=coefs.beta.copy(),
                        cindex=cindex,
                    )
                )
            continue

        for code in range(1, train.subgroup_count + 1):
            if entry.kind == "estimated":
                w = estimates[entry.name].weight_matrix.column(code)
            elif entry.kind == "fixed":
                w = fixed_weights(train.subgroups, code, entry.w)
            else:  # subgroup-only: weight 0 outside the target
                w = fixed_weights(train.subgroups, code, 0.0)
            path = _fit_with_cv(train, w, path_config, cox_cv_folds, cv_seed)
            coefs = path.selected_coefficients()
            mask = test.subgroups == code
            cindex = None
            if mask.any():
                scores = predict_risk(coefs, test.X[mask])
                cindex = _cindex_or_none(
                    test.times[mask], test.events[mask], scores
                )
            records.append(
                RepetitionRecord(
                    model=entry.name,
                    subgroup=train.label_of(code),
                    selected_lambda=coefs.lam,
                    beta=coefs.beta.copy(),
                    cindex=cindex,
                )
            )

    return RepetitionResult(
        index=0, seed=seed, records=tuple(records), classifier_estimates=estimates
    )


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregates across repetitions. Mean inclusion frequency (MIF) of a
    covariate is the fraction of repetitions with a nonzero coefficient;
    mean coefficients include zeros; C-index means skip undefined values and
    report how many were undefined."""

    models: tuple[str, ...]
    subgroup_labels: tuple[str, ...]
    feature_names: tuple[str, ...]
    repetitions: int
    successes: int
    cindex_mean: dict
    cindex_overall: dict
    cindex_undefined: dict
    mif: dict
    mean_coefficients: dict
    classifier_auc: dict
    failures: tuple = ()


def aggregate(
    results: list[RepetitionResult],
    feature_names: tuple[str, ...],
    subgroup_labels: tuple[str, ...],
    repetitions: int | None = None,
    failures: tuple = (),
) -> ExperimentReport:
    if not results:
        raise DataError("cannot aggregate zero repetition results")
    models = []
    for rec in results[0].records:
        if rec.model not in models:
            models.append(rec.model)
    p = len(feature_names)

    cindex_mean: dict = {}
    cindex_overall: dict = {}
    cindex_undefined: dict = {}
    mif: dict = {}
    mean_coef: dict = {}
    for m in models:
        cindex_mean[m] = {}
        cindex_undefined[m] = {}
        mif[m] = {}
        mean_coef[m] = {}
        all_defined = []
        for s in subgroup_labels:
            recs = [r.record(m, s) for r in results]
            values = [rec.cindex for rec in recs if rec.cindex is not None]
            all_defined.extend(values)
            cindex_mean[m][s] = float(np.mean(values)) if values else None
            cindex_undefined[m][s] = sum(1 for rec in recs if rec.cindex is None)
            betas = np.vstack([rec.beta[:p] for rec in recs])
            mif[m][s] = (betas != 0).mean(axis=0)
            mean_coef[m][s] = betas.mean(axis=0)
        cindex_overall[m] = float(np.mean(all_defined)) if all_defined else None

    classifier_auc: dict = {}
    clf_names = sorted(results[0].classifier_estimates)
    for name in clf_names:
        test_aucs = [
            r.classifier_estimates[name].test_group_auc
            for r in results
            if r.classifier_estimates[name].test_group_auc is not None
        ]
        train_aucs = [
            r.classifier_estimates[name].train_group_auc
            for r in results
            if r.classifier_estimates[name].train_group_auc is not None
        ]
        classifier_auc[name] = {
            "test_group_auc_mean": float(np.mean(test_aucs)) if test_aucs else None,
            "train_oof_group_auc_mean": (
                float(np.mean(train_aucs)) if train_aucs else None
            ),
        }

    return ExperimentReport(
        models=tuple(models),
        subgroup_labels=tuple(subgroup_labels),
        feature_names=tuple(feature_names),
        repetitions=repetitions if repetitions is not None else len(results),
        successes=len(results),
        cindex_mean=cindex_mean,
        cindex_overall=cindex_overall,
        cindex_undefined=cindex_undefined,
        mif=mif,
        mean_coefficients=mean_coef,
        classifier_auc=classifier_auc,
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything run_experiment needs besides the data source."""

    suite: tuple[ModelSpec, ...] = dataclasses.field(default_factory=default_suite)
    repetitions: int = 100
    master_seed: int = 0
    path_config: PathConfig = dataclasses.field(default_factory=PathConfig)
    classifier_spec: ClassifierSpec = dataclasses.field(default_factory=ClassifierSpec)
    cox_cv_folds: int = 10
    subsample_proportion: float = 0.632
    min_success_fraction: float = 0.8
    threads: int = 1


def _repetition_task(args):
    settings, scenario, dataset, rep = args
    seed = derive_seed(settings.master_seed, "rep", rep)
    try:
        if scenario is not None:
            train = generate_scenario(
                dataclasses.replace(
                    scenario, seed=derive_seed(settings.master_seed, "rep", rep, "train")
                )
            )
            test = generate_scenario(
                dataclasses.replace(
                    scenario, seed=derive_seed(settings.master_seed, "rep", rep, "test")
                )
            )
        else:
            train, test = stratified_subsample(
                dataset,
                settings.subsample_proportion,
                derive_seed(settings.master_seed, "rep", rep, "split"),
            )
        result = run_repetition(
            train,
            test,
            settings.suite,
            seed,
            path_config=settings.path_config,
            classifier_spec=settings.classifier_spec,
            cox_cv_folds=settings.cox_cv_folds,
        )
        return rep, dataclasses.replace(result, index=rep), None
    except Exception as exc:  # recorded, repetition skipped
        return rep, None, f"{type(exc).__name__}: {exc}"


def run_experiment(
    settings: ExperimentSettings,
    scenario: SimulationScenario | None = None,
    dataset: SurvivalDataset | None = None,
) -> tuple[ExperimentReport, list[RepetitionResult]]:
    """Run R repetitions with per-repetition seeds derived from the master
    seed. Simulation mode regenerates train and test sets of equal size each
    repetition; real-data mode subsamples the provided dataset (stratified,
    proportion 0.632 by default)."""
    if (scenario is None) == (dataset is None):
        raise DataError("provide exactly one of scenario or dataset")
    if scenario is not None:
        feature_names = tuple(f"gene{j + 1}" for j in range(scenario.p))
        subgroup_labels = SUBGROUP_LABELS
    else:
        feature_names = dataset.feature_names
        subgroup_labels = dataset.subgroup_labels

    tasks = [
        (settings, scenario, dataset, rep) for rep in range(settings.repetitions)
    ]
    outcomes = []
    if settings.threads > 1:
        with ProcessPoolExecutor(max_workers=settings.threads) as pool:
            outcomes = list(pool.map(_repetition_task, tasks))
    else:
        outcomes = [_repetition_task(t) for t in tasks]
    outcomes.sort(key=lambda item: item[0])

    results = [res for _, res, err in outcomes if err is None]
    failures = tuple(
        (rep, derive_seed(settings.master_seed, "rep", rep), err)
        for rep, _, err in outcomes
        if err is not None
    )
    needed = int(np.ceil(settings.min_success_fraction * settings.repetitions))
    if len(results) < needed:
        details = "; ".join(f"rep {r}: {e}" for r, _, e in failures[:5])
        raise NumericalError(
            f"only {len(results)}/{settings.repetitions} repetitions succeeded "
            f"(need {needed}): {details}"
        )
    report = aggregate(
        results,
        feature_names,
        subgroup_labels,
        repetitions=settings.repetitions,
        failures=failures,
    )
    return report, results
