"""Penalized multinomial (softmax) regression by block coordinate descent.

Per class, the log-likelihood is majorized by a weighted least-squares
problem with working weights p(1-p) and solved by cyclic coordinate descent
with soft-thresholding (lasso) or ridge shrinkage; classes are cycled until
the coefficients stabilize. Intercepts are never penalized. This mirrors the
classic elastic-net softmax path algorithm and is fast enough to drive
cross-validated penalty paths on a single core.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_PMIN = 1e-5


@njit(cache=True, fastmath=True)
def _softmax_eta(eta):
    n, S = eta.shape
    p = np.empty((n, S))
    for i in range(n):
        m = eta[i, 0]
        for s in range(1, S):
            if eta[i, s] > m:
                m = eta[i, s]
        tot = 0.0
        for s in range(S):
            v = np.exp(eta[i, s] - m)
            p[i, s] = v
            tot += v
        for s in range(S):
            p[i, s] /= tot
    return p


@njit(cache=True, fastmath=True)
def _class_sweep(FT, v, r, beta_s, denom, lam_l1, lam_l2, active_only):
    p, n = FT.shape
    maxd = 0.0
    for j in range(p):
        if denom[j] <= 0.0:
            continue
        if active_only and beta_s[j] == 0.0:
            continue
        c = 0.0
        for i in range(n):
            c += v[i] * FT[j, i] * r[i]
        c = c / n + denom[j] * beta_s[j]
        if lam_l1 > 0.0:
            if c > lam_l1:
                bnew = (c - lam_l1) / denom[j]
            elif c < -lam_l1:
                bnew = (c + lam_l1) / denom[j]
            else:
                bnew = 0.0
        else:
            bnew = c / (denom[j] + lam_l2)
        delta = bnew - beta_s[j]
        if delta != 0.0:
            beta_s[j] = bnew
            for i in range(n):
                r[i] -= delta * FT[j, i]
            ad = abs(delta)
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True, fastmath=True)
def _class_wls(FT, v, r, beta_s, b0, lam_l1, lam_l2, tol, max_sweeps):
    """Full/active-set cyclic CD on one class's weighted least-squares
    majorization. r is maintained as (working response - intercept -
    F beta_s). Returns (new intercept, largest coefficient change)."""
    p, n = FT.shape
    vsum = 0.0
    for i in range(n):
        vsum += v[i]
    denom = np.empty(p)
    for j in range(p):
        d = 0.0
        for i in range(n):
            fji = FT[j, i]
            d += v[i] * fji * fji
        denom[j] = d / n
    maxd_total = 0.0
    total = 0
    while total < max_sweeps:
        # unpenalized intercept
        num = 0.0
        for i in range(n):
            num += v[i] * r[i]
        db = num / vsum
        if db != 0.0:
            b0 += db
            for i in range(n):
                r[i] -= db
        maxd = _class_sweep(FT, v, r, beta_s, denom, lam_l1, lam_l2, False)
        if abs(db) > maxd:
            maxd = abs(db)
        total += 1
        if maxd > maxd_total:
            maxd_total = maxd
        if maxd < tol:
            return b0, maxd_total
        while total < max_sweeps:
            maxd = _class_sweep(FT, v, r, beta_s, denom, lam_l1, lam_l2, True)
            total += 1
            if maxd < tol:
                break
    return b0, maxd_total


@njit(cache=True, fastmath=True)
def _fit_softmax_at(FT, onehot, eta, coef, intercept, lam_l1, lam_l2, tol,
                    max_cycles, max_sweeps):
    """Block coordinate descent over classes at one penalty level. eta, coef
    and intercept are updated in place; eta stays equal to
    intercept + F coef'. Returns the number of outer cycles (-1 on budget
    exhaustion)."""
    S = onehot.shape[1]
    n = FT.shape[1]
    for cycle in range(max_cycles):
        maxd = 0.0
        for s in range(S):
            prob = _softmax_eta(eta)
            v = np.empty(n)
            r = np.empty(n)
            for i in range(n):
                pi = prob[i, s]
                vi = pi * (1.0 - pi)
                if vi < _PMIN:
                    vi = _PMIN
                v[i] = vi
                # working response minus current fit
                r[i] = (onehot[i, s] - pi) / vi
            b0_new, d = _class_wls(
                FT, v, r, coef[s], intercept[s], lam_l1, lam_l2, tol, max_sweeps
            )
            # eta_s = working response - r = old eta_s + (fit change)
            for i in range(n):
                eta[i, s] += (onehot[i, s] - prob[i, s]) / v[i] - r[i]
            intercept[s] = b0_new
            if d > maxd:
                maxd = d
        if maxd < tol:
            return cycle + 1
    return -1
