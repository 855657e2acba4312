import math
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize

from subcox.cox import (
    PathConfig,
    cv_select_lambda,
    fit_cox_lasso_cv,
    fit_cox_lasso_path,
    lambda_max,
    predict_risk,
    weighted_cox_gradient,
    weighted_cox_loglik,
)
from subcox.data import SurvivalDataset
from subcox.exceptions import DataError

from conftest import random_survival_dataset


# ---------------------------------------------------------------------------
# independent oracles (straight formula translations, no shared kernels)
# ---------------------------------------------------------------------------


def naive_loglik(times, events, w, X, beta):
    """sum_i d_i w_i (beta'x_i - ln sum_{t_k >= t_i} w_k exp(beta'x_k)),
    as a literal double loop."""
    n = len(times)
    eta = [float(np.dot(X[i], beta)) for i in range(n)]
    total = 0.0
    for i in range(n):
        if events[i] != 1 or w[i] == 0:
            continue
        denom = 0.0
        for k in range(n):
            if times[k] >= times[i]:
                denom += w[k] * math.exp(eta[k])
        total += w[i] * (eta[i] - math.log(denom))
    return total


def batch_loglik(times, events, w, X, B):
    """Vectorized oracle: log-likelihood for every column of B. Built from
    sorting and suffix sums of the same formula; cross-checked against
    naive_loglik in test_batch_oracle_consistent."""
    order = np.argsort(times, kind="stable")
    t = times[order]
    d = events[order]
    ws = w[order]
    eta = (X @ B)[order]  # n x m
    m = eta.max(axis=0, keepdims=True)
    e = ws[:, None] * np.exp(eta - m)
    suffix = np.cumsum(e[::-1], axis=0)[::-1]
    first = np.searchsorted(t, t, side="left")
    mask = (d == 1) & (ws > 0)
    return np.sum(
        ws[mask, None] * ((eta[mask] - m) - np.log(suffix[first[mask]])), axis=0
    )


def simple_dataset(times, events, X, w=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != len(times):
        X = X.T
    ds = SurvivalDataset(
        times=np.asarray(times, float),
        events=np.asarray(events, int),
        subgroups=np.ones(len(times), dtype=int),
        X=X,
        feature_names=tuple(f"x{j + 1}" for j in range(X.shape[1])),
        subgroup_labels=("A",),
    )
    return ds, (np.ones(len(times)) if w is None else np.asarray(w, float))


class TestWeightedLoglik:
    def test_two_observation_hand_value(self):
        ds, w = simple_dataset([1.0, 2.0], [1, 1], [[0.0], [0.0]])
        assert weighted_cox_loglik(ds, w, np.zeros(1)) == pytest.approx(
            -math.log(2), abs=1e-12
        )

    def test_all_ones_reduces_to_unweighted(self, rng):
        for _ in range(10):
            ds = random_survival_dataset(rng, int(rng.integers(5, 30)), 4)
            beta = rng.standard_normal(4) * 0.5
            value = weighted_cox_loglik(ds, np.ones(ds.n), beta)
            expected = naive_loglik(ds.times, ds.events, np.ones(ds.n), ds.X, beta)
            assert value == pytest.approx(expected, rel=1e-10)

    def test_matches_naive_with_random_weights(self, rng):
        for _ in range(10):
            ds = random_survival_dataset(rng, 20, 3)
            w = rng.uniform(0, 2, 20)
            if not ((ds.events == 1) & (w > 0)).any():
                continue
            beta = rng.standard_normal(3) * 0.4
            assert weighted_cox_loglik(ds, w, beta) == pytest.approx(
                naive_loglik(ds.times, ds.events, w, ds.X, beta), rel=1e-10
            )

    def test_zero_weight_equals_deleted_observation(self, rng):
        ds = random_survival_dataset(rng, 15, 3)
        w = rng.uniform(0.5, 1.5, 15)
        w[4] = 0.0
        beta = rng.standard_normal(3) * 0.3
        keep = np.arange(15) != 4
        ds2 = ds.subset(np.flatnonzero(keep))
        assert weighted_cox_loglik(ds, w, beta) == pytest.approx(
            weighted_cox_loglik(ds2, w[keep], beta), rel=1e-14
        )

    def test_requires_weighted_event(self):
        ds, _ = simple_dataset([1.0, 2.0], [1, 0], [[0.1], [0.2]])
        with pytest.raises(DataError):
            weighted_cox_loglik(ds, np.array([0.0, 1.0]), np.zeros(1))

    def test_batch_oracle_consistent(self, rng):
        for _ in range(10):
            ds = random_survival_dataset(rng, 25, 2)
            w = rng.uniform(0.1, 1.5, 25)
            B = rng.standard_normal((2, 4)) * 0.5
            batch = batch_loglik(ds.times, ds.events, w, ds.X, B)
            for col in range(4):
                assert batch[col] == pytest.approx(
                    naive_loglik(ds.times, ds.events, w, ds.X, B[:, col]),
                    rel=1e-10,
                )


class TestGradient:
    def test_hand_case(self):
        x1, x2 = 0.7, -1.3
        ds, w = simple_dataset([1.0, 2.0], [1, 1], [[x1], [x2]])
        g = weighted_cox_gradient(ds, w, np.zeros(1))
        assert g[0] == pytest.approx(x1 - (x1 + x2) / 2.0, abs=1e-12)

    def test_single_subject_risk_set(self):
        # last subject has an event with only itself at risk
        ds, w = simple_dataset([1.0, 2.0], [0, 1], [[0.4], [0.9]])
        g = weighted_cox_gradient(ds, w, np.zeros(1))
        assert g[0] == pytest.approx(0.9 - 0.9, abs=1e-14)

    def test_finite_differences(self, rng):
        worst = 0.0
        for _ in range(30):
            n = int(rng.integers(5, 31))
            p = int(rng.integers(1, 11))
            ds = random_survival_dataset(rng, n, p)
            w = rng.uniform(0, 1, n)
            if not ((ds.events == 1) & (w > 0)).any():
                continue
            beta = rng.standard_normal(p) * 0.4
            g = weighted_cox_gradient(ds, w, beta)
            h = 1e-6
            fd = np.empty(p)
            for j in range(p):
                step = np.zeros(p)
                step[j] = h
                fd[j] = (
                    weighted_cox_loglik(ds, w, beta + step)
                    - weighted_cox_loglik(ds, w, beta - step)
                ) / (2 * h)
            worst = max(worst, np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g))))
        assert worst <= 1e-5


class TestLambdaMax:
    def test_constant_covariates_degenerate(self):
        ds, w = simple_dataset([1, 2, 3], [1, 1, 1], [[1.0], [1.0], [1.0]])
        with pytest.warns(UserWarning):
            assert lambda_max(ds, w) == 0.0

    def test_unstandardized_matches_gradient_formula(self, rng):
        ds = random_survival_dataset(rng, 30, 5)
        w = rng.uniform(0.2, 1.0, 30)
        value = lambda_max(ds, w, standardize=False)
        g = weighted_cox_gradient(ds, w, np.zeros(5))
        assert value == pytest.approx(np.max(np.abs(g)) / w.sum(), rel=1e-12)

    def test_kkt_boundary(self, rng):
        for _ in range(10):
            ds = random_survival_dataset(rng, 40, 8)
            w = rng.uniform(0.1, 1.0, 40)
            lm = lambda_max(ds, w)
            hi = fit_cox_lasso_path(ds, w, PathConfig(lambdas=(lm * 1.0001,)))
            lo = fit_cox_lasso_path(ds, w, PathConfig(lambdas=(lm * 0.99,)))
            assert np.all(hi.betas == 0.0)
            assert np.any(lo.betas != 0.0)


def zoom_grid_search(times, events, w, X, lam, penalty_scale, W, half=4.0):
    """Dense 2-D grid maximizer of loglik/W - lam * sum penalty_scale|b|,
    refined by zooming; independent of the path solver."""
    center = np.zeros(2)
    spacing = None
    for stage in range(7):
        if spacing is None:
            lo, hi, m = -half, half, 41
            g1 = np.linspace(center[0] + lo, center[0] + hi, m)
            g2 = np.linspace(center[1] + lo, center[1] + hi, m)
        else:
            g1 = np.linspace(center[0] - 3 * spacing, center[0] + 3 * spacing, 31)
            g2 = np.linspace(center[1] - 3 * spacing, center[1] + 3 * spacing, 31)
        B = np.array(np.meshgrid(g1, g2)).reshape(2, -1)
        ll = batch_loglik(times, events, w, X, B)
        obj = ll / W - lam * (penalty_scale @ np.abs(B))
        center = B[:, int(np.argmax(obj))]
        spacing = g1[1] - g1[0]
    return center


class TestPathSolver:
    def test_zero_at_lambda_max(self, rng):
        ds = random_survival_dataset(rng, 50, 6)
        w = rng.uniform(0.3, 1.2, 50)
        path = fit_cox_lasso_path(ds, w)
        assert np.all(path.betas[0] == 0.0)
        assert path.lambdas[0] == pytest.approx(lambda_max(ds, w), rel=1e-12)

    def test_grid_search_oracle_unstandardized(self, rng):
        for _ in range(3):
            ds = random_survival_dataset(rng, 50, 2)
            w = rng.uniform(0.3, 1.2, 50)
            config = PathConfig(n_lambda=12, standardize=False, early_stop=False)
            path = fit_cox_lasso_path(ds, w, config)
            W = w.sum()
            for li, lam in enumerate(path.lambdas):
                oracle = zoom_grid_search(
                    ds.times, ds.events, w, ds.X, lam, np.ones(2), W
                )
                assert np.max(np.abs(path.betas[li] - oracle)) <= 1e-3

    def test_grid_search_oracle_standardized(self, rng):
        # with standardization the solver maximizes the objective whose
        # penalty weights each original-scale coefficient by its weighted sd
        ds = random_survival_dataset(rng, 60, 2)
        w = rng.uniform(0.3, 1.2, 60)
        W = w.sum()
        xbar = (w @ ds.X) / W
        sd = np.sqrt((w @ (ds.X - xbar) ** 2) / W)
        config = PathConfig(n_lambda=8, early_stop=False)
        path = fit_cox_lasso_path(ds, w, config)
        for li, lam in enumerate(path.lambdas):
            oracle = zoom_grid_search(ds.times, ds.events, w, ds.X, lam, sd, W)
            assert np.max(np.abs(path.betas[li] - oracle)) <= 1e-3

    def test_terminal_lambda_approaches_unpenalized(self, rng):
        ds = random_survival_dataset(rng, 200, 3)
        w = np.ones(200)
        config = PathConfig(n_lambda=100, early_stop=False)
        path = fit_cox_lasso_path(ds, w, config)
        assert path.lambdas[-1] == pytest.approx(path.lambdas[0] * 1e-4)

        def negll(beta):
            return -weighted_cox_loglik(ds, w, beta)

        res = minimize(negll, np.zeros(3), method="BFGS", options={"gtol": 1e-9})
        assert np.max(np.abs(path.betas[-1] - res.x)) <= 1e-2

    def test_deletion_equivalence_along_shared_grid(self, rng):
        for _ in range(5):
            ds = random_survival_dataset(rng, 30, 4)
            w = rng.uniform(0.2, 1.5, 30)
            i = int(rng.integers(30))
            w0 = w.copy()
            w0[i] = 0.0
            if not ((ds.events == 1) & (w0 > 0)).any():
                continue
            grid = tuple(lambda_max(ds, w0) * 0.8 ** np.arange(15))
            p1 = fit_cox_lasso_path(ds, w0, PathConfig(lambdas=grid))
            keep = np.flatnonzero(np.arange(30) != i)
            p2 = fit_cox_lasso_path(ds.subset(keep), w[keep], PathConfig(lambdas=grid))
            assert np.max(np.abs(p1.betas - p2.betas)) <= 1e-9

    def test_weight_rescaling_invariance(self, rng):
        ds = random_survival_dataset(rng, 80, 5)
        w = rng.uniform(0.3, 1.2, 80)
        base = fit_cox_lasso_path(ds, w)
        grid = tuple(base.lambdas)
        for c in (2.0, 3.7):
            scaled = fit_cox_lasso_path(ds, c * w, PathConfig(lambdas=grid))
            assert np.max(np.abs(base.betas - scaled.betas)) <= 1e-9

    def test_objective_ascent_within_lambda(self, rng):
        ds = random_survival_dataset(rng, 60, 8)
        w = rng.uniform(0.2, 1.0, 60)
        path = fit_cox_lasso_path(ds, w, PathConfig(n_lambda=30, collect_trace=True))
        assert path.irls_objectives is not None
        for trace in path.irls_objectives:
            if trace.size > 1:
                assert np.all(np.diff(trace) >= -1e-10)

    def test_explicit_grid_validation(self, rng):
        ds = random_survival_dataset(rng, 20, 2)
        with pytest.raises(DataError):
            fit_cox_lasso_path(ds, np.ones(20), PathConfig(lambdas=(0.1, 0.2)))
        with pytest.raises(DataError):
            fit_cox_lasso_path(ds, np.ones(20), PathConfig(lambdas=(-0.1,)))

    def test_too_small_dataset(self):
        ds, w = simple_dataset([1.0], [1], [[0.5]])
        with pytest.raises(DataError):
            fit_cox_lasso_path(ds, w)


class TestPredictRisk:
    def test_zero_beta(self, rng):
        ds = random_survival_dataset(rng, 10, 3)
        path = fit_cox_lasso_path(ds, np.ones(10))
        coefs = path.coefficients(0)
        assert np.all(predict_risk(coefs, ds.X) == 0.0)

    def test_unit_vector_selects_column(self, rng):
        from subcox.cox import CoxCoefficients

        X = rng.standard_normal((7, 4))
        beta = np.zeros(4)
        beta[0] = 1.0
        scores = predict_risk(CoxCoefficients(beta=beta, lam=0.1), X)
        assert np.array_equal(scores, X[:, 0])

    def test_matches_dot_product(self, rng):
        from subcox.cox import CoxCoefficients

        X = rng.standard_normal((9, 5))
        beta = rng.standard_normal(5)
        scores = predict_risk(CoxCoefficients(beta=beta, lam=0.0), X)
        expected = np.array([float(np.dot(X[i], beta)) for i in range(9)])
        assert np.allclose(scores, expected, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        from subcox.cox import CoxCoefficients

        with pytest.raises(DataError):
            predict_risk(CoxCoefficients(beta=np.zeros(3), lam=0.0), np.zeros((4, 2)))


def subgrouped_dataset(rng, n, p, n_subgroups=2, beta=None):
    X = rng.standard_normal((n, p))
    b = np.zeros(p) if beta is None else beta
    rate = np.exp(X @ b)
    t = rng.exponential(1.0 / rate)
    c = rng.exponential(1.0 / rate)
    times = np.minimum(t, c)
    events = (t <= c).astype(int)
    if events.sum() == 0:
        events[0] = 1
    codes = 1 + (np.arange(n) % n_subgroups)
    return SurvivalDataset(
        times=times,
        events=events,
        subgroups=codes,
        X=X,
        feature_names=tuple(f"x{j + 1}" for j in range(p)),
        subgroup_labels=tuple(chr(ord("A") + i) for i in range(n_subgroups)),
    )


class TestCrossValidation:
    def test_leave_one_out_degenerate_case(self, rng):
        # all-events tiny dataset: k = n folds each hold one event
        n = 12
        ds = subgrouped_dataset(rng, n, 2)
        ds = SurvivalDataset(
            times=ds.times,
            events=np.ones(n, dtype=int),
            subgroups=ds.subgroups,
            X=ds.X,
            feature_names=ds.feature_names,
            subgroup_labels=ds.subgroup_labels,
        )
        path = fit_cox_lasso_path(ds, np.ones(n), PathConfig(n_lambda=20))
        out = cv_select_lambda(ds, np.ones(n), path, k=n, seed=3)
        assert out.selected_lambda in out.lambdas

    def test_fold_without_events_errors(self, rng):
        ds = subgrouped_dataset(rng, 12, 2)
        events = np.zeros(12, dtype=int)
        events[:3] = 1
        ds = SurvivalDataset(
            times=ds.times,
            events=events,
            subgroups=ds.subgroups,
            X=ds.X,
            feature_names=ds.feature_names,
            subgroup_labels=ds.subgroup_labels,
        )
        path = fit_cox_lasso_path(ds, np.ones(12), PathConfig(n_lambda=10))
        with pytest.raises(DataError, match="fold"):
            cv_select_lambda(ds, np.ones(12), path, k=10, seed=0)

    def test_pure_noise_selects_few(self):
        hits = 0
        for seed in range(20):
            r = np.random.default_rng(1000 + seed)
            ds = subgrouped_dataset(r, 100, 10)
            out = fit_cox_lasso_cv(ds, np.ones(100), k=10, seed=seed)
            if len(out.selected_coefficients().nonzero) <= 2:
                hits += 1
        assert hits >= 16  # >= 80% of 20 replications

    def test_strong_covariate_selected(self):
        beta = np.zeros(5)
        beta[0] = 1.0
        hits = 0
        for seed in range(20):
            r = np.random.default_rng(2000 + seed)
            ds = subgrouped_dataset(r, 200, 5, beta=beta)
            out = fit_cox_lasso_cv(ds, np.ones(200), k=10, seed=seed)
            if out.selected_coefficients().beta[0] != 0.0:
                hits += 1
        assert hits >= 19  # >= 95% of 20 replications

    def test_fused_equals_two_step(self, rng):
        ds = subgrouped_dataset(rng, 60, 6)
        w = rng.uniform(0.3, 1.5, 60)
        path = fit_cox_lasso_path(ds, w)
        two_step = cv_select_lambda(ds, w, path, k=5, seed=7)
        fused = fit_cox_lasso_cv(ds, w, k=5, seed=7)
        assert fused.selected_lambda == two_step.selected_lambda
        assert np.array_equal(
            fused.selected_coefficients().beta, two_step.selected_coefficients().beta
        )
