"""Patient-level subgroup weights from cross-validated classification.

The probability of belonging to subgroup s given the outcome tuple and the
covariates is estimated by multinomial logistic regression (lasso or ridge
penalty, scikit-learn backend) or a probability random forest; dividing the
out-of-fold probabilities by the empirical subgroup frequencies yields the
likelihood weights w[i, s] = p(s | y_i, x_i) / p(s).

Multinomial penalty strength is chosen by the prevalidation scheme: one
k-fold pass produces held-out probabilities along a shared lambda grid, the
grid point minimizing the held-out multinomial deviance is selected, and the
held-out probabilities at that point are returned, so every row's
probability comes from a model whose training data excluded that row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier

from ._multinomial import _fit_softmax_at, _softmax_eta
from .cox import stratified_fold_assignment
from .data import SurvivalDataset
from .exceptions import ConvergenceError, DataError
from .rng import derive_seed

METHODS = ("multinomial_lasso", "multinomial_ridge", "random_forest")


@dataclass(frozen=True)
class ClassifierSpec:
    """Classification method plus its hyperparameters.

    Multinomial: geometric penalty grid of n_lambda points anchored at the
    multinomial lambda_max (scaled up by ridge_anchor_scale for the ridge
    penalty, which never zeroes coefficients). Random forest: n_trees trees,
    ceil(sqrt(features)) candidates per split, min_node_size minimum leaf.
    """

    method: str = "multinomial_lasso"
    cv_folds: int = 10
    seed: int = 0
    n_lambda: int = 30
    lambda_min_ratio: float = 1e-3
    ridge_anchor_scale: float = 100.0
    tol: float = 1e-5
    max_iter: int = 2000
    cv_patience: int | None = 8
    n_trees: int = 500
    min_node_size: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"unknown classifier method {self.method!r}")
        if self.cv_folds < 2:
            raise DataError("cv_folds must be >= 2")
        if self.n_trees < 1:
            raise DataError("n_trees must be >= 1")


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Out-of-fold membership probabilities with fold bookkeeping."""

    probs: np.ndarray
    folds: np.ndarray
    method: str

    def __post_init__(self):
        if np.any(self.probs < -1e-12) or np.any(self.probs > 1 + 1e-12):
            raise DataError("probabilities must lie in [0, 1]")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9):
            raise DataError("probability rows must sum to 1")


@dataclass(frozen=True)
class WeightMatrix:
    """w[i, s] = p(s | y_i, x_i) / p(s)."""

    weights: np.ndarray
    prior: np.ndarray

    def column(self, subgroup_code: int) -> np.ndarray:
        return self.weights[:, subgroup_code - 1].copy()


def build_classification_features(
    dataset: SurvivalDataset,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix [time, event, covariates] and subgroup-code labels."""
    features = np.column_stack(
        [dataset.times, dataset.events.astype(np.float64), dataset.X]
    )
    return features, dataset.subgroups.copy()


def _standardize_features(F):
    mean = F.mean(axis=0)
    sd = F.std(axis=0)
    sd_safe = np.where(sd > 1e-12, sd, 1.0)
    return (F - mean) / sd_safe, mean, sd_safe


def _multinomial_lambda_max(F_std, labels, classes) -> float:
    n = F_std.shape[0]
    onehot = (labels[:, None] == classes[None, :]).astype(np.float64)
    resid = onehot - onehot.mean(axis=0)
    return float(np.max(np.abs(resid.T @ F_std)) / n)


def _lambda_grid(lam_max: float, spec: ClassifierSpec, penalty: str) -> np.ndarray:
    anchor = lam_max * (spec.ridge_anchor_scale if penalty == "ridge" else 1.0)
    if anchor <= 0:
        anchor = 1.0
    L = spec.n_lambda
    return anchor * spec.lambda_min_ratio ** (np.arange(L) / (L - 1))


def _proba_in_class_order(clf, F, classes) -> np.ndarray:
    """predict_proba with columns rearranged to the full class list."""
    raw = clf.predict_proba(F)
    out = np.zeros((F.shape[0], classes.size))
    for pos, c in enumerate(clf.classes_):
        out[:, int(np.flatnonzero(classes == c)[0])] = raw[:, pos]
    return out


class _SoftmaxRunner:
    """Warm-started softmax path state on standardized features. Once the
    training deviance saturates (near-separation at small penalties) the last
    stable solution is reused for the remaining grid points."""

    def __init__(self, F_std, onehot, penalty, spec: ClassifierSpec):
        self.FT = np.ascontiguousarray(F_std.T)
        self.onehot = onehot
        self.penalty = penalty
        self.spec = spec
        n, S = onehot.shape
        self.eta = np.zeros((n, S))
        self.coef = np.zeros((S, F_std.shape[1]))
        self.intercept = np.zeros(S)
        self.saturated = False
        self._dev_scale = None
        self._dev_prev = None
        self._any = False

    def step(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        if self.saturated:
            return self.coef, self.intercept
        snapshot = (self.coef.copy(), self.intercept.copy(), self.eta.copy())
        lam_l1 = lam if self.penalty == "lasso" else 0.0
        lam_l2 = lam if self.penalty == "ridge" else 0.0
        cycles = _fit_softmax_at(
            self.FT, self.onehot, self.eta, self.coef, self.intercept,
            lam_l1, lam_l2, self.spec.tol, self.spec.max_iter, 50,
        )
        if cycles < 0:
            if not self._any:
                raise ConvergenceError(
                    f"softmax solver did not stabilize within "
                    f"{self.spec.max_iter} cycles at penalty {lam:.6g}"
                )
            self.coef, self.intercept, self.eta = snapshot
            self.saturated = True
            return self.coef, self.intercept
        self._any = True
        probs = _softmax_eta(np.ascontiguousarray(self.eta))
        dev = -2.0 * float(
            np.mean(np.log(np.clip((probs * self.onehot).sum(axis=1), 1e-300, None)))
        )
        if self._dev_scale is None:
            self._dev_scale = max(dev, 1e-12)
        elif (
            self._dev_prev - dev < 1e-5 * self._dev_scale
            or float(np.max(np.abs(self.coef))) > 30.0
        ):
            self.saturated = True
        self._dev_prev = dev
        return self.coef, self.intercept


def _softmax_path(F_std, onehot, grid, penalty, spec: ClassifierSpec):
    """Coefficient path over the grid; list of (coef, intercept) copies."""
    runner = _SoftmaxRunner(F_std, onehot, penalty, spec)
    out = []
    for lam in grid:
        coef, intercept = runner.step(float(lam))
        out.append((coef.copy(), intercept.copy()))
    return out


@dataclass(frozen=True)
class MultinomialModel:
    """Softmax classifier with zero-sum symmetric parameterization, original
    feature scale. Carries the prevalidated probabilities of its own CV."""

    classes: np.ndarray
    coef: np.ndarray
    intercept: np.ndarray
    penalty: str
    lambda_grid: np.ndarray
    cv_deviance: np.ndarray
    selected_lambda: float
    oof_probs: np.ndarray
    folds: np.ndarray

    def predict_proba(self, features) -> np.ndarray:
        F = np.asarray(features, dtype=np.float64)
        eta = F @ self.coef.T + self.intercept
        eta -= eta.max(axis=1, keepdims=True)
        num = np.exp(eta)
        return num / num.sum(axis=1, keepdims=True)


def _to_original_scale(coef_std, inter_std, mean, sd):
    """Back-transform standardized coefficients and project onto the
    zero-sum parameterization (predictions unchanged)."""
    coef = coef_std / sd
    intercept = inter_std - coef_std @ (mean / sd)
    coef = coef - coef.mean(axis=0)
    intercept = intercept - intercept.mean()
    return coef, intercept


def fit_multinomial(
    features,
    labels,
    penalty: str = "lasso",
    cv_folds: int = 10,
    seed: int = 0,
    spec: ClassifierSpec | None = None,
) -> MultinomialModel:
    """Penalized softmax regression with CV-selected penalty strength.

    The penalty grid is geometric, anchored at the multinomial lambda_max of
    the full data; held-out deviance is computed by the prevalidation pass
    described in the module docstring, then the model is refitted on all rows
    at the selected lambda.
    """
    if penalty not in ("lasso", "ridge"):
        raise DataError(f"penalty must be 'lasso' or 'ridge', got {penalty!r}")
    if spec is None:
        spec = ClassifierSpec(cv_folds=cv_folds, seed=seed)
    else:
        cv_folds, seed = spec.cv_folds, spec.seed
    F = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("need at least two classes to fit a classifier")
    n = F.shape[0]
    if n < 2 * cv_folds:
        raise DataError("need at least 2 rows per fold")
    counts = np.array([(labels == c).sum() for c in classes])
    if np.any(counts < cv_folds):
        raise DataError(
            "every class needs at least cv_folds members; use fewer folds"
        )

    F_all_std, _, _ = _standardize_features(F)
    lam_max = _multinomial_lambda_max(F_all_std, labels, classes)
    grid = _lambda_grid(lam_max, spec, penalty)
    L = grid.size
    onehot_all = (labels[:, None] == classes[None, :]).astype(np.float64)

    rng = np.random.default_rng(derive_seed(seed, "multinomial", penalty))
    folds = stratified_fold_assignment(labels, cv_folds, rng)
    runners = []
    holdouts = []
    for f in range(cv_folds):
        train = folds != f
        if np.unique(labels[train]).size < classes.size:
            raise DataError(f"fold {f} training split lost a class; use fewer folds")
        F_tr, mean, sd = _standardize_features(F[train])
        runners.append(_SoftmaxRunner(F_tr, onehot_all[train], penalty, spec))
        holdouts.append((~train, (F[~train] - mean) / sd))

    # lockstep prevalidation: folds advance together and stop a fixed
    # patience past the running held-out-deviance minimum
    oof = np.zeros((L, n, classes.size))
    label_col = np.searchsorted(classes, labels)
    deviance = np.full(L, np.nan)
    best = 0
    for li in range(L):
        for f in range(cv_folds):
            coef, intercept = runners[f].step(float(grid[li]))
            ho_mask, F_ho = holdouts[f]
            eta_ho = np.ascontiguousarray(F_ho @ coef.T + intercept)
            oof[li, ho_mask] = _softmax_eta(eta_ho)
        true_p = np.clip(oof[li, np.arange(n), label_col], 1e-300, None)
        deviance[li] = -2.0 * float(np.mean(np.log(true_p)))
        if deviance[li] < deviance[best]:
            best = li
        if spec.cv_patience is not None and li - best >= spec.cv_patience:
            break

    F_std, mean, sd = _standardize_features(F)
    final_path = _softmax_path(F_std, onehot_all, grid[: best + 1], penalty, spec)
    coef, intercept = _to_original_scale(*final_path[best], mean, sd)
    return MultinomialModel(
        classes=classes,
        coef=coef,
        intercept=intercept,
        penalty=penalty,
        lambda_grid=grid,
        cv_deviance=deviance,
        selected_lambda=float(grid[best]),
        oof_probs=oof[best],
        folds=folds,
    )


@dataclass(frozen=True)
class RandomForestModel:
    classes: np.ndarray
    forest: RandomForestClassifier

    def predict_proba(self, features) -> np.ndarray:
        return _proba_in_class_order(
            self.forest, np.asarray(features, dtype=np.float64), self.classes
        )

    @property
    def oob_probabilities(self) -> np.ndarray:
        return self.forest.oob_decision_function_


def fit_random_forest(
    features, labels, spec: ClassifierSpec | None = None, oob: bool = False
) -> RandomForestModel:
    """Probability forest: bootstrap trees, ceil(sqrt(F)) candidate features
    per split, class probabilities averaged over the trees' terminal-node
    frequencies."""
    spec = spec or ClassifierSpec(method="random_forest")
    F = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("need at least two classes to fit a classifier")
    forest = RandomForestClassifier(
        n_estimators=spec.n_trees,
        max_features=max(1, math.ceil(math.sqrt(F.shape[1]))),
        min_samples_leaf=spec.min_node_size,
        bootstrap=True,
        oob_score=oob,
        random_state=spec.seed & 0xFFFFFFFF,
        n_jobs=1,
    )
    forest.fit(F, labels)
    return RandomForestModel(classes=classes, forest=forest)


def cross_validated_probabilities(
    dataset: SurvivalDataset, spec: ClassifierSpec
) -> ProbabilityMatrix:
    """Out-of-fold p(s | y, x): each row is predicted by a model whose
    training fold excluded that row. Folds are stratified by subgroup."""
    features, labels = build_classification_features(dataset)
    S = dataset.subgroup_count
    counts = np.bincount(labels, minlength=S + 1)[1:]
    if np.any(counts < spec.cv_folds):
        small = [dataset.subgroup_labels[i] for i in np.flatnonzero(counts < spec.cv_folds)]
        raise DataError(
            f"subgroups {small} have fewer members than cv_folds={spec.cv_folds}; "
            "use fewer folds"
        )
    if np.any(counts == 0):
        raise DataError("every subgroup must occur at least once")

    if spec.method in ("multinomial_lasso", "multinomial_ridge"):
        penalty = "lasso" if spec.method == "multinomial_lasso" else "ridge"
        model = fit_multinomial(
            features, labels, penalty, spec.cv_folds, spec.seed, spec
        )
        return ProbabilityMatrix(
            probs=model.oof_probs, folds=model.folds, method=spec.method
        )

    rng = np.random.default_rng(derive_seed(spec.seed, "rf-folds"))
    folds = stratified_fold_assignment(labels, spec.cv_folds, rng)
    probs = np.zeros((dataset.n, S))
    for f in range(spec.cv_folds):
        train = folds != f
        sub_spec = ClassifierSpec(
            method="random_forest",
            n_trees=spec.n_trees,
            min_node_size=spec.min_node_size,
            seed=derive_seed(spec.seed, "rf-fold", f),
        )
        model = fit_random_forest(features[train], labels[train], sub_spec)
        if model.classes.size < S:
            raise DataError(f"fold {f} training split lost a subgroup; use fewer folds")
        probs[~train] = model.predict_proba(features[~train])
    return ProbabilityMatrix(probs=probs, folds=folds, method=spec.method)


def compute_weights(probs, labels) -> WeightMatrix:
    """Divide membership probabilities by empirical subgroup frequencies."""
    P = probs.probs if isinstance(probs, ProbabilityMatrix) else np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    S = P.shape[1]
    counts = np.bincount(labels, minlength=S + 1)[1:]
    if np.any(counts == 0):
        empty = [int(c + 1) for c in np.flatnonzero(counts == 0)]
        raise DataError(f"subgroups {empty} are empty; prior would be zero")
    prior = counts / labels.size
    return WeightMatrix(weights=P / prior, prior=prior)


def fixed_weights(labels, target_subgroup: int, w: float) -> np.ndarray:
    """1 for members of the target subgroup, w for everyone else."""
    if not 0.0 <= w <= 1.0:
        raise DataError(f"fixed weight must lie in [0, 1], got {w}")
    labels = np.asarray(labels, dtype=np.int64)
    if target_subgroup < 1 or target_subgroup > labels.max():
        raise DataError(f"target subgroup {target_subgroup} out of range")
    return np.where(labels == target_subgroup, 1.0, float(w))


def group_auc(scores, in_group_one) -> float:
    """Mann-Whitney AUC of scores separating group 1 from the rest, with
    half credit for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(in_group_one, dtype=bool)
    if scores.shape != mask.shape:
        raise DataError("scores and group labels must have equal length")
    n1 = int(mask.sum())
    n2 = int((~mask).sum())
    if n1 == 0 or n2 == 0:
        raise DataError("both groups must be present to compute an AUC")
    ranks = rankdata(scores)
    return float((ranks[mask].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n2))
