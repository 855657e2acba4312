import numpy as np
import pytest

from subcox.data import SurvivalDataset


def random_survival_dataset(rng, n, p, censor_scale=1.0, subgroups=1, weights=None):
    """Exponential survival data with random sparse effects and ~30-50%
    censoring; never returns a dataset without events."""
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: max(1, p // 3)] = rng.standard_normal(max(1, p // 3)) * 0.7
    rate = np.exp(X @ beta)
    t = rng.exponential(1.0 / rate)
    c = rng.exponential(censor_scale / rate)
    times = np.minimum(t, c)
    events = (t <= c).astype(np.int64)
    if events.sum() == 0:
        events[int(np.argmin(times))] = 1
    codes = rng.integers(1, subgroups + 1, size=n)
    codes[:subgroups] = np.arange(1, subgroups + 1)  # every subgroup occurs
    return SurvivalDataset(
        times=times,
        events=events,
        subgroups=codes,
        X=X,
        feature_names=tuple(f"x{j + 1}" for j in range(p)),
        subgroup_labels=tuple(chr(ord("A") + i) for i in range(subgroups)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
