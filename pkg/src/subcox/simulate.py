"""Synthetic subgroup survival data.

Four subgroups (1A, 1B, 2A, 2B) of equal size are drawn from two latent
groups. Each group has its own Weibull outcome parameters and true effect
vector; covariates are unit-variance Gaussians whose means separate the
groups by an amount controlled by epsilon in [0, 1]. Censoring times are an
independent copy of the event-time mechanism, which yields ~50% censoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SurvivalDataset
from .exceptions import DataError
from .survival import WeibullParams, weibull_from_survival_points

SUBGROUP_LABELS = ("1A", "1B", "2A", "2B")
GROUP_OF_SUBGROUP = {"1A": 1, "1B": 1, "2A": 2, "2B": 2}

# Three- and five-year survival anchors for the two groups, solved into
# Weibull (scale, shape) pairs; group 1 has the poorer prognosis.
GROUP1_ANCHORS = (3.0, 0.57, 5.0, 0.42)
GROUP2_ANCHORS = (3.0, 0.75, 5.0, 0.62)

_STRONG = 1.0
_MODERATE = (0.5, 0.75)
_WEAK = (0.0, 0.25)


def effect_vectors(p: int) -> tuple[np.ndarray, np.ndarray]:
    """True effect vectors for the two groups: 12 prognostic positions
    (subgroup-specific, opposite, shared-direction and joint effects, summing
    to zero) followed by p - 12 noise zeros."""
    if p < 12:
        raise DataError(f"need p >= 12, got {p}")
    beta1 = np.zeros(p)
    beta2 = np.zeros(p)
    beta1[:12] = [1, 1, 0, 0, -0.5, 0.5, 0.75, 0.25, -1, -1, -0.75, -0.25]
    beta2[:12] = [0, 0, 1, 1, 0.5, -0.5, 0.25, 0.75, -1, -1, -0.75, -0.25]
    return beta1, beta2


def mean_vector(epsilon: float, beta_group: np.ndarray) -> np.ndarray:
    """Covariate means: 4 + 4*eps for |beta| = 1, 4 + 2*eps for moderate
    effects (0.5, 0.75), and 4 for weak or no effect (0, 0.25)."""
    if not 0.0 <= epsilon <= 1.0:
        raise DataError(f"epsilon must lie in [0, 1], got {epsilon}")
    mags = np.abs(np.asarray(beta_group, dtype=np.float64))
    mu = np.empty_like(mags)
    for j, m in enumerate(mags):
        if np.isclose(m, _STRONG):
            mu[j] = 4.0 + 4.0 * epsilon
        elif any(np.isclose(m, v) for v in _MODERATE):
            mu[j] = 4.0 + 2.0 * epsilon
        elif any(np.isclose(m, v) for v in _WEAK):
            mu[j] = 4.0
        else:
            raise DataError(
                f"effect magnitude {m} at position {j} is outside the design table"
            )
    return mu


@dataclass(frozen=True)
class GroupParams:
    """Per-group simulation parameters."""

    weibull: WeibullParams
    beta: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        if beta.shape != mu.shape or beta.ndim != 1:
            raise DataError("beta and mu must be equal-length vectors")
        if beta.size > 12 and np.any(beta[12:] != 0):
            raise DataError("effects beyond position 12 must be zero (noise genes)")


def default_group_params(p: int, epsilon: float) -> tuple[GroupParams, GroupParams]:
    beta1, beta2 = effect_vectors(p)
    return (
        GroupParams(
            weibull=weibull_from_survival_points(*GROUP1_ANCHORS),
            beta=beta1,
            mu=mean_vector(epsilon, beta1),
        ),
        GroupParams(
            weibull=weibull_from_survival_points(*GROUP2_ANCHORS),
            beta=beta2,
            mu=mean_vector(epsilon, beta2),
        ),
    )


@dataclass(frozen=True)
class SimulationScenario:
    """(n per subgroup, p, epsilon) plus the two group parameter sets."""

    n_per_subgroup: int
    p: int
    epsilon: float
    seed: int
    group_params: tuple[GroupParams, GroupParams] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n_per_subgroup < 2:
            raise DataError("n_per_subgroup must be >= 2")
        if self.p < 12:
            raise DataError("p must be >= 12")
        if not 0.0 <= self.epsilon <= 1.0:
            raise DataError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.group_params is None:
            object.__setattr__(
                self, "group_params", default_group_params(self.p, self.epsilon)
            )
        for gp in self.group_params:
            if gp.beta.size != self.p:
                raise DataError("group effect vectors must have length p")


def simulate_covariates(n: int, mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. Gaussian rows with mean vector mu and identity covariance."""
    if n < 1:
        raise DataError("n must be >= 1")
    mu = np.asarray(mu, dtype=np.float64)
    return rng.standard_normal((n, mu.size)) + mu


def simulate_survival(
    X: np.ndarray,
    beta: np.ndarray,
    weibull: WeibullParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Weibull event times by inverse transform,
    T = (-ln U / (scale * exp(x beta)))^(1/shape), with censoring times drawn
    as an independent copy of the same mechanism (same scale, shape and
    linear predictor). Returns (observed time, event indicator)."""
    X = np.asarray(X, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != beta.size:
        raise DataError("covariate matrix and effect vector are inconsistent")
    rate = weibull.scale * np.exp(X @ beta)
    n = X.shape[0]
    u_event = rng.uniform(size=n)
    u_cens = rng.uniform(size=n)
    t_event = (-np.log(u_event) / rate) ** (1.0 / weibull.shape)
    t_cens = (-np.log(u_cens) / rate) ** (1.0 / weibull.shape)
    times = np.minimum(t_event, t_cens)
    events = (t_event <= t_cens).astype(np.int64)
    return times, events


def generate_scenario(scenario: SimulationScenario) -> SurvivalDataset:
    """Deterministic 4-subgroup dataset: 1A/1B share group-1 parameters and
    2A/2B share group-2 parameters, n_per_subgroup rows each."""
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n_per_subgroup
    times_parts, events_parts, X_parts, codes_parts = [], [], [], []
    for code, label in enumerate(SUBGROUP_LABELS, start=1):
        gp = scenario.group_params[GROUP_OF_SUBGROUP[label] - 1]
        X = simulate_covariates(n, gp.mu, rng)
        times, events = simulate_survival(X, gp.beta, gp.weibull, rng)
        times_parts.append(times)
        events_parts.append(events)
        X_parts.append(X)
        codes_parts.append(np.full(n, code, dtype=np.int64))
    return SurvivalDataset(
        times=np.concatenate(times_parts),
        events=np.concatenate(events_parts),
        subgroups=np.concatenate(codes_parts),
        X=np.vstack(X_parts),
        feature_names=tuple(f"gene{j + 1}" for j in range(scenario.p)),
        subgroup_labels=SUBGROUP_LABELS,
    )
