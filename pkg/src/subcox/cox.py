"""Weighted Cox partial likelihood and lasso-penalized regularization paths.

The fitting objective is the weight-normalized penalized partial
log-likelihood

    maximize  loglik(beta) / W  -  lambda * sum_j |beta_j|,   W = sum_i w_i,

solved by outer IRLS (a diagonal quadratic expansion of the weighted partial
likelihood in the linear predictor) and inner cyclic coordinate descent with
soft-thresholding, warm-started along a decreasing lambda grid. Ties are
handled with the Breslow convention: tied event times share one risk set.

Normalizing by W keeps a given lambda comparable across weighting schemes
and subsample sizes, and makes a zero-weight observation exactly equivalent
to a deleted one: every reduction in the hot path runs sequentially (no BLAS
reassociation), so a weight-zero row only ever contributes exact +0.0 terms
and the iteration path is bit-identical to the deleted-row fit.

Coordinates are screened per lambda with the sequential strong rule and the
final solution is verified against the full KKT conditions; the linearly
converging outer iteration is accelerated by safeguarded geometric
extrapolation of consecutive coefficient steps.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import SurvivalDataset
from .exceptions import ConvergenceError, DataError, NumericalError

_SD_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# numba kernels (operate on rows sorted by ascending time)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cox_derivatives(bstart, d, w, eta):
    """Breslow gradient/curvature of the weighted partial log-likelihood
    with respect to the linear predictor, plus the log-likelihood itself.

    Per observation k (sorted by time),
      g[k] = d[k] w[k] - e[k] * A[k]
      u[k] = e[k] * A[k] - e[k]^2 * B[k]
    with e[k] = w[k] exp(eta[k] - m), A/B prefix sums of d w / D and
    d w / D^2 over events up to k's tie block, D the risk-set sum.
    """
    n = eta.shape[0]
    m = -np.inf
    for k in range(n):
        if w[k] > 0.0 and eta[k] > m:
            m = eta[k]
    e = np.zeros(n)
    for k in range(n):
        if w[k] > 0.0:
            e[k] = w[k] * np.exp(eta[k] - m)
    suffix = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + e[k]

    A = np.zeros(n)
    B = np.zeros(n)
    loglik = 0.0
    acc_a = 0.0
    acc_b = 0.0
    k = 0
    while k < n:
        start = bstart[k]
        end = k
        while end + 1 < n and bstart[end + 1] == start:
            end += 1
        risk = suffix[start]
        for i in range(start, end + 1):
            if d[i] == 1 and w[i] > 0.0:
                acc_a += w[i] / risk
                acc_b += w[i] / (risk * risk)
                loglik += w[i] * ((eta[i] - m) - np.log(risk))
        for i in range(start, end + 1):
            A[i] = acc_a
            B[i] = acc_b
        k = end + 1

    g = np.zeros(n)
    u = np.zeros(n)
    for k in range(n):
        g[k] = d[k] * w[k] - e[k] * A[k]
        uk = e[k] * A[k] - e[k] * e[k] * B[k]
        u[k] = uk if uk > 0.0 else 0.0
    return g, u, loglik


@njit(cache=True)
def _weighted_loglik(bstart, d, w, eta):
    n = eta.shape[0]
    m = -np.inf
    for k in range(n):
        if w[k] > 0.0 and eta[k] > m:
            m = eta[k]
    e = np.zeros(n)
    for k in range(n):
        if w[k] > 0.0:
            e[k] = w[k] * np.exp(eta[k] - m)
    suffix = np.zeros(n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + e[k]
    loglik = 0.0
    for i in range(n):
        if d[i] == 1 and w[i] > 0.0:
            loglik += w[i] * ((eta[i] - m) - np.log(suffix[bstart[i]]))
    return loglik


@njit(cache=True)
def _weighted_moments(X_sorted, w):
    """Sequential weighted column means/variances plus the weight total."""
    n, p = X_sorted.shape
    W = 0.0
    for k in range(n):
        W += w[k]
    xbar = np.zeros(p)
    var = np.zeros(p)
    for j in range(p):
        s = 0.0
        for k in range(n):
            s += w[k] * X_sorted[k, j]
        xbar[j] = s / W
        v = 0.0
        for k in range(n):
            dkj = X_sorted[k, j] - xbar[j]
            v += w[k] * dkj * dkj
        var[j] = v / W
    return xbar, var, W


@njit(cache=True)
def _gradient_columns(XT, g):
    """Sequential XT @ g (no BLAS, so zero-weight rows add exact zeros)."""
    p, n = XT.shape
    out = np.zeros(p)
    for j in range(p):
        s = 0.0
        for k in range(n):
            s += XT[j, k] * g[k]
        out[j] = s
    return out


@njit(cache=True)
def _wls_denominators(XT, u, ws, denom):
    for idx in range(ws.shape[0]):
        j = ws[idx]
        s = 0.0
        for k in range(XT.shape[1]):
            s += u[k] * XT[j, k] * XT[j, k]
        denom[j] = s


@njit(cache=True)
def _cd_sweep(XT, u, r, beta, denom, lam_w, ws, active_only):
    """One cyclic pass of soft-threshold updates over the working set.
    Returns the largest coefficient change."""
    n = XT.shape[1]
    maxd = 0.0
    for idx in range(ws.shape[0]):
        j = ws[idx]
        if denom[j] <= 0.0:
            continue
        if active_only and beta[j] == 0.0:
            continue
        s = 0.0
        for k in range(n):
            s += u[k] * XT[j, k] * r[k]
        c = s + denom[j] * beta[j]
        if c > lam_w:
            bnew = (c - lam_w) / denom[j]
        elif c < -lam_w:
            bnew = (c + lam_w) / denom[j]
        else:
            bnew = 0.0
        delta = bnew - beta[j]
        if delta != 0.0:
            beta[j] = bnew
            for k in range(n):
                r[k] -= delta * XT[j, k]
            ad = abs(delta)
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True)
def _gradient_subset(XT, g, idx):
    out = np.zeros(idx.shape[0])
    for a in range(idx.shape[0]):
        j = idx[a]
        s = 0.0
        for k in range(XT.shape[1]):
            s += XT[j, k] * g[k]
        out[a] = s
    return out


@njit(cache=True)
def _eta_add(XT, idx, delta, eta):
    """eta += X[:, idx] @ delta, sequentially (bit-stable under zero rows)."""
    out = eta.copy()
    for a in range(idx.shape[0]):
        da = delta[a]
        if da != 0.0:
            j = idx[a]
            for k in range(XT.shape[1]):
                out[k] += da * XT[j, k]
    return out


@njit(cache=True)
def _cox_neg_hessian_active(bstart, d, w, eta, XT, idx):
    """Negated Hessian of the weighted partial log-likelihood restricted to
    the columns in idx: sum over weighted events of
    w_i * (second moment of x over the risk set - mu mu'), accumulated with
    suffix sums over descending time blocks."""
    n = eta.shape[0]
    m = -np.inf
    for k in range(n):
        if w[k] > 0.0 and eta[k] > m:
            m = eta[k]
    e = np.zeros(n)
    for k in range(n):
        if w[k] > 0.0:
            e[k] = w[k] * np.exp(eta[k] - m)
    nA = idx.shape[0]
    # contiguous gather of the active columns keeps the inner loops SIMD-able
    XA = np.empty((nA, n))
    for a in range(nA):
        ja = idx[a]
        for k in range(n):
            XA[a, k] = XT[ja, k]
    M = np.zeros((nA, nA))
    v = np.zeros(nA)
    D = 0.0
    H = np.zeros((nA, nA))
    pos = n - 1
    while pos >= 0:
        start = bstart[pos]
        for k in range(start, pos + 1):
            ek = e[k]
            if ek > 0.0:
                D += ek
                for a in range(nA):
                    xa = ek * XA[a, k]
                    v[a] += xa
                    for b in range(a, nA):
                        M[a, b] += xa * XA[b, k]
        for i in range(start, pos + 1):
            if d[i] == 1 and w[i] > 0.0:
                wi = w[i]
                for a in range(nA):
                    mu_a = v[a] / D
                    for b in range(a, nA):
                        H[a, b] += wi * (M[a, b] / D - mu_a * (v[b] / D))
        pos = start - 1
    for a in range(nA):
        for b in range(a + 1, nA):
            H[b, a] = H[a, b]
    return H


@njit(cache=True)
def _cd_solve(XT, u, r, beta, denom, lam_w, ws, tol, max_sweeps):
    """Full/active-set alternation on the working set. Returns (sweeps,
    converged); a blown budget is reported, not fatal, because the outer
    iteration re-linearizes (and switches to exact Newton steps) anyway."""
    total = 0
    while total < max_sweeps:
        maxd = _cd_sweep(XT, u, r, beta, denom, lam_w, ws, False)
        total += 1
        if maxd < tol:
            return total, True
        while total < max_sweeps:
            maxd = _cd_sweep(XT, u, r, beta, denom, lam_w, ws, True)
            total += 1
            if maxd < tol:
                break
    return total, False


# ---------------------------------------------------------------------------
# problem preparation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SortedProblem:
    order: np.ndarray
    bstart: np.ndarray
    d: np.ndarray
    w: np.ndarray
    W: float


def _validate_weights(weights, n) -> np.ndarray:
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise DataError(f"weights must have length {n}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DataError("weights must be finite and non-negative")
    return w


def _sort_problem(times, events, weights) -> _SortedProblem:
    """Sorted (by time) view of the positively-weighted rows. Zero-weight
    rows contribute nothing to any weighted quantity, so dropping them up
    front keeps a weight-zero observation exactly equivalent to a deleted
    one while shrinking the kernels' working size. `order` indexes into the
    original row numbering."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    events = np.ascontiguousarray(events, dtype=np.int64)
    n = times.shape[0]
    w = _validate_weights(weights, n)
    if not np.any((events == 1) & (w > 0)):
        raise DataError("need at least one event with positive weight")
    keep = np.flatnonzero(w > 0)
    order = keep[np.argsort(times[keep], kind="stable")]
    t_sorted = times[order]
    bstart = np.searchsorted(t_sorted, t_sorted, side="left").astype(np.int64)
    w_sorted = w[order]
    W = 0.0
    for v in w_sorted:
        W += float(v)
    return _SortedProblem(
        order=order, bstart=bstart, d=events[order], w=w_sorted, W=W
    )


def _standardize(X_sorted, w, standardize: bool):
    """Weighted centering and (optionally) scaling; zero-variance columns are
    zeroed out so they can never activate."""
    xbar, var, W = _weighted_moments(X_sorted, w)
    if standardize:
        sd = np.sqrt(var)
    else:
        sd = np.ones(X_sorted.shape[1])
    active = sd > _SD_FLOOR
    sd_safe = np.where(active, sd, 1.0)
    Xs = np.where(active, (X_sorted - xbar) / sd_safe, 0.0)
    return Xs, sd_safe, W


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def weighted_cox_loglik(dataset: SurvivalDataset, weights, beta) -> float:
    """Weighted partial log-likelihood
    sum_i d_i w_i (beta'x_i - ln sum_{t_k >= t_i} w_k exp(beta'x_k))."""
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if beta.shape != (dataset.p,):
        raise DataError(f"beta must have length {dataset.p}")
    prob = _sort_problem(dataset.times, dataset.events, weights)
    eta = (dataset.X @ beta)[prob.order]
    value = float(_weighted_loglik(prob.bstart, prob.d, prob.w, eta))
    if not np.isfinite(value):
        raise NumericalError("weighted partial log-likelihood is not finite")
    return value


def weighted_cox_gradient(dataset: SurvivalDataset, weights, beta) -> np.ndarray:
    """Analytic gradient of weighted_cox_loglik with respect to beta."""
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if beta.shape != (dataset.p,):
        raise DataError(f"beta must have length {dataset.p}")
    prob = _sort_problem(dataset.times, dataset.events, weights)
    eta = (dataset.X @ beta)[prob.order]
    g, _, _ = _cox_derivatives(prob.bstart, prob.d, prob.w, eta)
    grad = _gradient_columns(
        np.ascontiguousarray(dataset.X[prob.order].T), g
    )
    if not np.all(np.isfinite(grad)):
        raise NumericalError("weighted Cox gradient is not finite")
    return grad


def _round_up_lambda(lam: float, W: float, gmax: float) -> float:
    """Nudge lam upward by ulps until lam * W >= gmax, so the soft threshold
    at lam_max keeps the all-zero solution exactly zero despite the
    divide-then-multiply rounding."""
    for _ in range(4):
        if lam * W >= gmax:
            break
        lam = float(np.nextafter(lam, np.inf))
    return lam


def lambda_max(dataset: SurvivalDataset, weights, standardize: bool = True) -> float:
    """Smallest penalty for which the all-zero vector is optimal:
    max_j |gradient_j(0)| / W on the scale the path is fitted on
    (weighted-standardized covariates by default)."""
    prob = _sort_problem(dataset.times, dataset.events, weights)
    Xs, _, W = _standardize(dataset.X[prob.order], prob.w, standardize)
    g, _, _ = _cox_derivatives(
        prob.bstart, prob.d, prob.w, np.zeros(prob.w.shape[0])
    )
    if dataset.p == 0:
        gmax = 0.0
    else:
        gmax = float(np.max(np.abs(_gradient_columns(np.ascontiguousarray(Xs.T), g))))
    if gmax <= 0.0:
        warnings.warn(
            "all gradients vanish at beta = 0; the regularization path is degenerate",
            stacklevel=2,
        )
        return 0.0
    return _round_up_lambda(gmax / W, W, gmax)


@dataclass(frozen=True)
class PathConfig:
    """Knobs for fit_cox_lasso_path.

    lambda_min_ratio defaults to 0.01 when the positively-weighted sample is
    smaller than p, else 1e-4. An explicit `lambdas` grid overrides the
    automatic geometric grid. tol is the maximum coefficient change (on the
    internally standardized scale) accepted as converged.
    """

    n_lambda: int = 100
    lambda_min_ratio: float | None = None
    tol: float = 1e-7
    max_irls: int = 100
    max_cd_sweeps: int = 50
    standardize: bool = True
    lambdas: tuple[float, ...] | None = None
    collect_trace: bool = False
    # Early path termination on deviance saturation, as regularized Cox path
    # software conventionally does for p ~ n data: stop once the fractional
    # deviance improvement per grid point falls below dev_change_min or the
    # explained-deviance ratio exceeds dev_explained_max. None = automatic
    # (on for automatic grids, off for explicit grids).
    early_stop: bool | None = None
    dev_change_min: float = 1e-5
    dev_explained_max: float = 0.999


@dataclass(frozen=True)
class CoxCoefficients:
    beta: np.ndarray
    lam: float

    @property
    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


@dataclass(frozen=True)
class CoxFitPath:
    """Coefficient sequence along a decreasing lambda grid."""

    lambdas: np.ndarray
    betas: np.ndarray
    feature_names: tuple[str, ...]
    config: PathConfig
    cv_deviance_mean: np.ndarray | None = None
    cv_deviance_se: np.ndarray | None = None
    selected_lambda: float | None = None
    irls_objectives: tuple[np.ndarray, ...] | None = None

    def coefficients(self, index: int) -> CoxCoefficients:
        return CoxCoefficients(
            beta=self.betas[index].copy(), lam=float(self.lambdas[index])
        )

    @property
    def selected_index(self) -> int:
        if self.selected_lambda is None:
            raise ValueError("no lambda selected; run cv_select_lambda first")
        return int(np.argmin(np.abs(self.lambdas - self.selected_lambda)))

    def selected_coefficients(self) -> CoxCoefficients:
        return self.coefficients(self.selected_index)


def _auto_grid(lam_max: float, n_pos: int, p: int, config: PathConfig) -> np.ndarray:
    ratio = config.lambda_min_ratio
    if ratio is None:
        ratio = 0.01 if n_pos < p else 1e-4
    L = config.n_lambda
    if L < 1:
        raise DataError("n_lambda must be >= 1")
    if L == 1:
        return np.array([lam_max])
    return lam_max * ratio ** (np.arange(L) / (L - 1))


class _PenalizedSolver:
    """Warm-startable solver state for one (data, weights) problem."""

    def __init__(self, prob: _SortedProblem, Xs: np.ndarray, config: PathConfig):
        self.prob = prob
        self.config = config
        self.XT = np.ascontiguousarray(Xs.T)
        self.W = prob.W
        self.n = Xs.shape[0]
        self.p = Xs.shape[1]
        self.beta = np.zeros(self.p)
        self.eta = np.zeros(self.n)
        g, u, ll = _cox_derivatives(prob.bstart, prob.d, prob.w, self.eta)
        self.g, self.u, self.ll = g, u, ll
        # gradient of loglik/W at the current solution, standardized scale
        self.grad = _gradient_columns(self.XT, g) / self.W
        self.col_ok = np.any(self.XT != 0.0, axis=1)
        self.null_ll = ll
        self._lm_mu = 1e-7

    def _objective(self, lam: float, ll: float, beta: np.ndarray) -> float:
        return ll / self.W - lam * float(np.sum(np.abs(beta)))

    def _loglik_at(self, eta: np.ndarray) -> float:
        return float(
            _weighted_loglik(self.prob.bstart, self.prob.d, self.prob.w, eta)
        )

    def _refresh(self) -> None:
        self.g, self.u, self.ll = _cox_derivatives(
            self.prob.bstart, self.prob.d, self.prob.w, self.eta
        )

    def _newton_burst(self, lam: float, obj: float, trace: list) -> float:
        """Levenberg-Marquardt proximal-Newton steps on the current active
        face, taken when the diagonal-Hessian iteration is converging slowly.
        Steps shorten exactly to the first sign crossing (snapping that
        coefficient to zero) and are accepted only when the penalized
        objective does not decrease. The face Hessian is reused while the
        face is unchanged and steps keep being accepted. Returns the updated
        objective."""
        cfg = self.config
        A = None
        Hneg = None
        stale = 0
        for _ in range(100):
            A_now = np.flatnonzero(self.beta)
            if A_now.size == 0 or A_now.size > 500:
                return obj
            if Hneg is None or stale >= 10 or not np.array_equal(A_now, A):
                A = A_now
                Hneg = (
                    _cox_neg_hessian_active(
                        self.prob.bstart, self.prob.d, self.prob.w, self.eta,
                        self.XT, A,
                    )
                    / self.W
                )
                stale = 0
            scale = float(np.trace(Hneg)) / A.size + 1e-12
            signs = np.sign(self.beta[A])
            gvec = _gradient_subset(self.XT, self.g, A) / self.W - lam * signs
            accepted = False
            mu = self._lm_mu
            for _ in range(25):
                M = Hneg.copy()
                M[np.diag_indices_from(M)] += mu * scale
                try:
                    step = np.linalg.solve(M, gvec)
                except np.linalg.LinAlgError:
                    step = None
                if step is None or not np.all(np.isfinite(step)):
                    mu = max(mu, 1e-8) * 10.0
                    continue
                # stop exactly at the first sign crossing, zeroing that entry
                t = 1.0
                crossing = -1
                for a in range(A.size):
                    if step[a] != 0.0 and np.sign(step[a]) == -signs[a]:
                        cross = -self.beta[A[a]] / step[a]
                        if cross < t:
                            t = cross
                            crossing = a
                beta_cand = self.beta.copy()
                beta_cand[A] += t * step
                if crossing >= 0:
                    beta_cand[A[crossing]] = 0.0
                delta = beta_cand[A] - self.beta[A]
                eta_cand = _eta_add(self.XT, A, delta, self.eta)
                ll_cand = self._loglik_at(eta_cand)
                obj_cand = self._objective(lam, ll_cand, beta_cand)
                if np.isfinite(obj_cand) and obj_cand >= obj - 1e-12 * (
                    1.0 + abs(obj)
                ):
                    accepted = True
                    break
                mu = max(mu, 1e-8) * 10.0
                if mu > 1e8:
                    break
            if not accepted:
                return obj
            self._lm_mu = max(mu / 5.0, 1e-10)
            stale += 1
            moved = float(np.max(np.abs(delta))) if delta.size else 0.0
            self.beta = beta_cand
            self.eta = eta_cand
            self.ll = ll_cand
            self._refresh()
            obj = obj_cand
            if cfg.collect_trace:
                trace.append(obj)
            if moved < 0.1 * cfg.tol:
                return obj
        return obj

    def _irls(self, lam: float, ws: np.ndarray, li: int, trace: list) -> bool:
        """Outer IRLS on the working set: diagonal quadratic model solved by
        coordinate descent, with step halving to keep the penalized objective
        non-decreasing and exact Newton bursts when progress stalls.
        Returns True on convergence, leaving beta/eta/g/u/ll/grad current."""
        cfg = self.config
        lam_w = lam * self.W
        denom = np.zeros(self.p)
        obj = self._objective(lam, self.ll, self.beta)
        if cfg.collect_trace:
            trace.append(obj)
        maxd_prev = np.inf
        signs_prev = None
        slow_iters = 0
        for _ in range(cfg.max_irls):
            z = self.eta + np.divide(
                self.g, self.u, out=np.zeros_like(self.g), where=self.u > 0.0
            )
            r = z - self.eta
            _wls_denominators(self.XT, self.u, ws, denom)
            beta_prev = self.beta.copy()
            eta_prev = self.eta
            _, inner_ok = _cd_solve(
                self.XT, self.u, r, self.beta, denom, lam_w, ws, cfg.tol,
                cfg.max_cd_sweeps,
            )
            self.eta = z - r
            ll_new = self._loglik_at(self.eta)
            obj_new = self._objective(lam, ll_new, self.beta)
            halvings = 0
            while obj_new < obj - 1e-12 * (1.0 + abs(obj)) and halvings < 30:
                self.beta = 0.5 * (self.beta + beta_prev)
                self.eta = 0.5 * (self.eta + eta_prev)
                ll_new = self._loglik_at(self.eta)
                obj_new = self._objective(lam, ll_new, self.beta)
                halvings += 1
            if not np.isfinite(obj_new):
                raise NumericalError(
                    f"non-finite objective at lambda index {li} (lambda={lam:.6g})"
                )
            maxd = float(np.max(np.abs(self.beta - beta_prev))) if self.p else 0.0
            if cfg.collect_trace:
                trace.append(obj_new)
            self._refresh()
            if maxd < cfg.tol and inner_ok:
                self.grad = _gradient_columns(self.XT, self.g) / self.W
                return True
            obj = obj_new
            signs_now = np.sign(self.beta)
            if maxd > 0.33 * maxd_prev and np.array_equal(signs_now, signs_prev):
                slow_iters += 1
            else:
                slow_iters = 0
            if slow_iters >= 2:
                obj = self._newton_burst(lam, obj, trace)
                signs_now = np.sign(self.beta)
                slow_iters = 0
            maxd_prev = maxd
            signs_prev = signs_now
        return False

    def solve(self, lam: float, lam_prev: float, li: int, trace: list) -> np.ndarray:
        """Solve one grid point: strong-rule screen, IRLS, full KKT check."""
        kkt_eps = 1e-9 * (1.0 + lam)
        ws_mask = (self.beta != 0.0) | (
            np.abs(self.grad) >= 2.0 * lam - lam_prev
        )
        ws_mask &= self.col_ok
        for _ in range(self.p + 1):
            ws = np.flatnonzero(ws_mask)
            if not self._irls(lam, ws, li, trace):
                raise ConvergenceError(
                    f"IRLS did not converge within {self.config.max_irls} "
                    f"iterations at lambda index {li} (lambda={lam:.6g})"
                )
            violations = (
                ~ws_mask & self.col_ok & (np.abs(self.grad) > lam + kkt_eps)
            )
            if not violations.any():
                return self.beta.copy()
            ws_mask |= violations
        raise ConvergenceError(
            f"KKT screening failed to stabilize at lambda index {li}"
        )


class _PathRunner:
    """Steps one penalized problem through a lambda grid, handling warm
    starts, early saturation stopping, and per-lambda traces."""

    def __init__(self, dataset: SurvivalDataset, weights, config: PathConfig):
        self.config = config
        if dataset.n < 2:
            raise DataError("need at least two observations to fit")
        self.prob = _sort_problem(dataset.times, dataset.events, weights)
        Xs, self.sd, _ = _standardize(
            dataset.X[self.prob.order], self.prob.w, config.standardize
        )
        self.solver = _PenalizedSolver(self.prob, Xs, config)
        self.p = dataset.p
        if dataset.p:
            gmax = float(np.max(np.abs(self.solver.grad))) * self.solver.W
            self.lam_max = _round_up_lambda(gmax / self.solver.W, self.solver.W, gmax)
        else:
            self.lam_max = 0.0
        self.lam_prev: float | None = None
        null_dev = -2.0 * self.solver.null_ll / self.solver.W
        self._dev_scale = abs(null_dev) + 1e-12
        self._null_dev = null_dev
        self._dev_prev = null_dev
        self.saturated = False
        self._last_beta = np.zeros(dataset.p)
        self.traces: list[np.ndarray] = []
        early = config.early_stop
        self.early_stop = (config.lambdas is None) if early is None else early

    def grid(self) -> np.ndarray:
        config = self.config
        if config.lambdas is not None:
            lambdas = np.asarray(config.lambdas, dtype=np.float64)
            if lambdas.ndim != 1 or lambdas.size == 0:
                raise DataError("explicit lambda grid must be a non-empty vector")
            if np.any(lambdas < 0):
                raise DataError("lambda values must be >= 0")
            if lambdas.size > 1 and np.any(np.diff(lambdas) >= 0):
                raise DataError("lambda grid must be strictly decreasing")
            return lambdas
        if self.lam_max <= 0.0:
            warnings.warn(
                "all gradients vanish at beta = 0; returning an all-zero path",
                stacklevel=2,
            )
            return np.array([0.0])
        return _auto_grid(
            self.lam_max, int(np.sum(self.prob.w > 0)), self.p, config
        )

    def step(self, li: int, lam: float) -> np.ndarray:
        """Solution at the li-th grid point, on the original scale. After
        saturation the last computed solution is reused."""
        if self.saturated:
            return self._last_beta
        trace: list = []
        if self.lam_prev is None:
            self.lam_prev = max(self.lam_max, lam)
        beta_std = self.solver.solve(float(lam), self.lam_prev, li, trace)
        self.lam_prev = float(lam)
        if self.config.collect_trace:
            self.traces.append(np.asarray(trace))
        self._last_beta = beta_std / self.sd
        if self.early_stop and li > 0:
            dev = -2.0 * self.solver.ll / self.solver.W
            explained = (self._null_dev - dev) / self._dev_scale
            if (
                self._dev_prev - dev < self.config.dev_change_min * self._dev_scale
                or explained > self.config.dev_explained_max
            ):
                self.saturated = True
            self._dev_prev = dev
        return self._last_beta


def fit_cox_lasso_path(
    dataset: SurvivalDataset, weights, config: PathConfig | None = None
) -> CoxFitPath:
    """Lasso-penalized weighted Cox regression along a lambda grid.

    Covariates are standardized internally with w-weighted mean/variance;
    coefficients are reported on the original scale. With automatic grids
    the path stops early once the deviance saturates (see PathConfig); the
    returned grid then covers the computed prefix.
    """
    config = config or PathConfig()
    runner = _PathRunner(dataset, weights, config)
    lambdas = runner.grid()
    betas = np.zeros((lambdas.size, dataset.p))
    n_done = 0
    for li, lam in enumerate(lambdas):
        if runner.saturated:
            break
        betas[li] = runner.step(li, float(lam))
        n_done = li + 1

    return CoxFitPath(
        lambdas=lambdas[:n_done],
        betas=betas[:n_done],
        feature_names=dataset.feature_names,
        config=config,
        irls_objectives=tuple(runner.traces) if config.collect_trace else None,
    )


def predict_risk(coefficients: CoxCoefficients, covariates) -> np.ndarray:
    """Linear risk scores beta'x (no baseline hazard)."""
    X = np.asarray(covariates, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != coefficients.beta.shape[0]:
        raise DataError(
            f"covariates must be (n, {coefficients.beta.shape[0]}), got {X.shape}"
        )
    return X @ coefficients.beta


def stratified_fold_assignment(keys, k: int, rng: np.random.Generator) -> np.ndarray:
    """Deal indices of each stratum round-robin into k folds after shuffling."""
    keys = np.asarray(keys)
    folds = np.empty(keys.shape[0], dtype=np.int64)
    start = 0
    for key in sorted(set(keys.tolist())):
        idx = np.flatnonzero(keys == key)
        idx = idx[rng.permutation(idx.size)]
        for pos, i in enumerate(idx):
            folds[i] = (start + pos) % k
        start += idx.size
    return folds


def cv_select_lambda(
    dataset: SurvivalDataset,
    weights,
    path: CoxFitPath,
    k: int = 10,
    seed: int = 0,
    patience: int | None = 15,
) -> CoxFitPath:
    """Select lambda by k-fold cross-validated partial-likelihood deviance.

    Folds are stratified on (subgroup x event). Per fold f and lambda,
    dev_f = -2 * [loglik_full(beta_-f) - loglik_train(beta_-f)], and the
    lambda minimizing the mean deviance is selected. Folds advance through
    the grid in lockstep; once the running minimum is `patience` grid points
    behind, the remaining (larger-deviance) tail is skipped and its deviance
    entries are reported as NaN. patience=None evaluates the whole grid.
    """
    if k < 2:
        raise DataError("fold count k must be >= 2")
    w = _validate_weights(weights, dataset.n)
    rng = np.random.default_rng(seed)
    keys = dataset.subgroups * 2 + dataset.events
    folds = stratified_fold_assignment(keys, k, rng)

    weighted_events = (dataset.events == 1) & (w > 0)
    for f in range(k):
        if not np.any(weighted_events & (folds == f)):
            raise DataError(
                f"fold {f} contains no weighted events; use a smaller fold count"
            )
        if not np.any(weighted_events & (folds != f)):
            raise DataError(
                f"all weighted events fall in fold {f}; use a smaller fold count"
            )

    full_prob = _sort_problem(dataset.times, dataset.events, w)
    fold_config = dataclasses.replace(
        path.config,
        lambdas=tuple(path.lambdas),
        collect_trace=False,
        early_stop=True,
        tol=max(path.config.tol, 3e-5),
    )
    L = path.lambdas.size
    runners = []
    trains = []
    train_probs = []
    for f in range(k):
        train_idx = np.flatnonzero(folds != f)
        train = dataset.subset(train_idx)
        w_train = w[train_idx]
        runners.append(_PathRunner(train, w_train, fold_config))
        trains.append(train)
        train_probs.append(_sort_problem(train.times, train.events, w_train))

    dev = np.full((k, L), np.nan)
    best = 0
    for li in range(L):
        lam = float(path.lambdas[li])
        for f in range(k):
            beta = runners[f].step(li, lam)
            eta_full = (dataset.X @ beta)[full_prob.order]
            eta_train = (trains[f].X @ beta)[train_probs[f].order]
            ll_full = _weighted_loglik(
                full_prob.bstart, full_prob.d, full_prob.w, eta_full
            )
            ll_train = _weighted_loglik(
                train_probs[f].bstart,
                train_probs[f].d,
                train_probs[f].w,
                eta_train,
            )
            dev[f, li] = -2.0 * (ll_full - ll_train)
        if dev[:, li].mean() < dev[:, best].mean():
            best = li
        if patience is not None and li - best >= patience:
            break

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = dev.mean(axis=0)
        se = dev.std(axis=0, ddof=1) / np.sqrt(k)
    return dataclasses.replace(
        path,
        cv_deviance_mean=mean,
        cv_deviance_se=se,
        selected_lambda=float(path.lambdas[best]),
    )


def fit_cox_lasso_cv(
    dataset: SurvivalDataset,
    weights,
    config: PathConfig | None = None,
    k: int = 10,
    seed: int = 0,
    patience: int | None = 15,
) -> CoxFitPath:
    """Fused fit_cox_lasso_path + cv_select_lambda: the master path and the
    k fold paths advance through the grid in lockstep, so no solver runs past
    the cross-validation cutoff. Produces the same grid, deviances and
    selected lambda as the two-step sequence."""
    if k < 2:
        raise DataError("fold count k must be >= 2")
    config = config or PathConfig()
    w = _validate_weights(weights, dataset.n)
    rng = np.random.default_rng(seed)
    keys = dataset.subgroups * 2 + dataset.events
    folds = stratified_fold_assignment(keys, k, rng)

    weighted_events = (dataset.events == 1) & (w > 0)
    for f in range(k):
        if not np.any(weighted_events & (folds == f)):
            raise DataError(
                f"fold {f} contains no weighted events; use a smaller fold count"
            )
        if not np.any(weighted_events & (folds != f)):
            raise DataError(
                f"all weighted events fall in fold {f}; use a smaller fold count"
            )

    master = _PathRunner(dataset, w, config)
    lambdas = master.grid()
    L = lambdas.size
    full_prob = master.prob
    fold_config = dataclasses.replace(
        config,
        lambdas=tuple(lambdas),
        collect_trace=False,
        early_stop=True,
        tol=max(config.tol, 3e-5),
    )
    runners = []
    trains = []
    train_probs = []
    for f in range(k):
        train_idx = np.flatnonzero(folds != f)
        train = dataset.subset(train_idx)
        w_train = w[train_idx]
        runners.append(_PathRunner(train, w_train, fold_config))
        trains.append(train)
        train_probs.append(_sort_problem(train.times, train.events, w_train))

    betas = np.zeros((L, dataset.p))
    dev = np.full((k, L), np.nan)
    best = 0
    n_done = 0
    for li in range(L):
        if master.saturated:
            break
        lam = float(lambdas[li])
        betas[li] = master.step(li, lam)
        n_done = li + 1
        for f in range(k):
            beta = runners[f].step(li, lam)
            eta_full = (dataset.X @ beta)[full_prob.order]
            eta_train = (trains[f].X @ beta)[train_probs[f].order]
            ll_full = _weighted_loglik(
                full_prob.bstart, full_prob.d, full_prob.w, eta_full
            )
            ll_train = _weighted_loglik(
                train_probs[f].bstart,
                train_probs[f].d,
                train_probs[f].w,
                eta_train,
            )
            dev[f, li] = -2.0 * (ll_full - ll_train)
        if dev[:, li].mean() < dev[:, best].mean():
            best = li
        if patience is not None and li - best >= patience:
            break

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = dev[:, :n_done].mean(axis=0)
        se = dev[:, :n_done].std(axis=0, ddof=1) / np.sqrt(k)
    return CoxFitPath(
        lambdas=lambdas[:n_done],
        betas=betas[:n_done],
        feature_names=dataset.feature_names,
        config=config,
        cv_deviance_mean=mean,
        cv_deviance_se=se,
        selected_lambda=float(lambdas[best]),
        irls_objectives=tuple(master.traces) if config.collect_trace else None,
    )
