"""Survival dataset container and CSV round-tripping.

A dataset is a flat table of (time, event, subgroup, covariates) rows.
Subgroups are stored as integer codes 1..S plus a label list, with labels
mapped to codes in order of first appearance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True)
class SurvivalObservation:
    """One patient: observed time, event indicator, subgroup label, covariates."""

    time: float
    event: int
    subgroup: str
    covariates: np.ndarray

    def __post_init__(self):
        if not self.time > 0:
            raise DataError(f"time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise DataError(f"event must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class SurvivalDataset:
    """Immutable column-oriented survival data.

    Attributes:
        times: observed times, shape (n,), all > 0.
        events: event indicators in {0, 1}, shape (n,).
        subgroups: integer subgroup codes in 1..subgroup_count, shape (n,).
        X: covariate matrix, shape (n, p).
        feature_names: p column identifiers.
        subgroup_labels: S labels; code k maps to subgroup_labels[k - 1].
    """

    times: np.ndarray
    events: np.ndarray
    subgroups: np.ndarray
    X: np.ndarray
    feature_names: tuple[str, ...]
    subgroup_labels: tuple[str, ...]

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        events = np.ascontiguousarray(self.events, dtype=np.int64)
        subgroups = np.ascontiguousarray(self.subgroups, dtype=np.int64)
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "subgroups", subgroups)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "subgroup_labels", tuple(self.subgroup_labels))

        n = times.shape[0]
        if n == 0:
            raise DataError("dataset must contain at least one observation")
        if events.shape != (n,) or subgroups.shape != (n,):
            raise DataError("times, events and subgroups must have equal length")
        if X.ndim != 2 or X.shape[0] != n:
            raise DataError(f"covariate matrix must be (n, p) with n={n}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length must equal covariate count")
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise DataError("times must be finite and positive")
        if not np.isin(events, (0, 1)).all():
            raise DataError("events must be 0 or 1")
        S = len(self.subgroup_labels)
        if S < 1:
            raise DataError("at least one subgroup label required")
        if subgroups.min() < 1 or subgroups.max() > S:
            raise DataError(f"subgroup codes must lie in 1..{S}")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def subgroup_count(self) -> int:
        return len(self.subgroup_labels)

    def label_of(self, code: int) -> str:
        return self.subgroup_labels[code - 1]

    def subgroup_mask(self, code: int) -> np.ndarray:
        return self.subgroups == code

    def subset(self, index: np.ndarray) -> "SurvivalDataset":
        """Row subset (labels are kept even if a subgroup becomes empty)."""
        return SurvivalDataset(
            times=self.times[index],
            events=self.events[index],
            subgroups=self.subgroups[index],
            X=self.X[index],
            feature_names=self.feature_names,
            subgroup_labels=self.subgroup_labels,
        )

    def with_extra_features(
        self, extra: np.ndarray, names: Sequence[str]
    ) -> "SurvivalDataset":
        """Append covariate columns (used for subgroup dummy encoding)."""
        extra = np.atleast_2d(np.asarray(extra, dtype=np.float64))
        if extra.shape[0] != self.n:
            raise DataError("extra feature rows must match dataset size")
        return SurvivalDataset(
            times=self.times,
            events=self.events,
            subgroups=self.subgroups,
            X=np.hstack([self.X, extra]),
            feature_names=self.feature_names + tuple(names),
            subgroup_labels=self.subgroup_labels,
        )

    def observations(self) -> Iterator[SurvivalObservation]:
        for i in range(self.n):
            yield SurvivalObservation(
                time=float(self.times[i]),
                event=int(self.events[i]),
                subgroup=self.label_of(int(self.subgroups[i])),
                covariates=self.X[i].copy(),
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.subgroup_labels == other.subgroup_labels
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.subgroups, other.subgroups)
            and np.array_equal(self.X, other.X)
        )


def from_observations(
    observations: Iterable[SurvivalObservation],
    feature_names: Sequence[str] | None = None,
) -> SurvivalDataset:
    """Build a dataset; subgroup labels are coded in order of first appearance."""
    obs = list(observations)
    if not obs:
        raise DataError("dataset must contain at least one observation")
    p = len(obs[0].covariates)
    labels: list[str] = []
    codes = np.empty(len(obs), dtype=np.int64)
    for i, o in enumerate(obs):
        if len(o.covariates) != p:
            raise DataError("covariate length must be identical across observations")
        if o.subgroup not in labels:
            labels.append(o.subgroup)
        codes[i] = labels.index(o.subgroup) + 1
    if feature_names is None:
        feature_names = tuple(f"x{j + 1}" for j in range(p))
    return SurvivalDataset(
        times=np.array([o.time for o in obs]),
        events=np.array([o.event for o in obs]),
        subgroups=codes,
        X=np.array([o.covariates for o in obs], dtype=np.float64).reshape(len(obs), p),
        feature_names=feature_names,
        subgroup_labels=tuple(labels),
    )


def _format_number(x: float) -> str:
    """Shortest round-trippable decimal form."""
    if float(x) == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def write_dataset_csv(dataset: SurvivalDataset, path) -> None:
    """Write the canonical dataset CSV: id,time,status,subgroup,<features>."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _write_dataset(dataset, fh)


def dataset_csv_bytes(dataset: SurvivalDataset) -> bytes:
    buf = io.StringIO()
    _write_dataset(dataset, buf)
    return buf.getvalue().encode("utf-8")


def _write_dataset(dataset: SurvivalDataset, fh) -> None:
    fh.write(",".join(["id", "time", "status", "subgroup", *dataset.feature_names]))
    fh.write("\n")
    for i in range(dataset.n):
        row = [
            str(i + 1),
            _format_number(dataset.times[i]),
            str(int(dataset.events[i])),
            dataset.label_of(int(dataset.subgroups[i])),
        ]
        row.extend(_format_number(v) for v in dataset.X[i])
        fh.write(",".join(row))
        fh.write("\n")


def read_dataset_csv(path) -> SurvivalDataset:
    """Parse the canonical dataset CSV, mapping subgroup labels in file order."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:4] != ["id", "time", "status", "subgroup"]:
            raise DataError(
                f"{path}: header must start with id,time,status,subgroup"
            )
        feature_names = tuple(header[4:])
        times, events, labels_per_row, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                t = float(row[1])
            except ValueError:
                raise DataError(f"{path}: row {lineno}: bad time {row[1]!r}") from None
            if row[2] not in ("0", "1"):
                raise DataError(
                    f"{path}: row {lineno}: status must be 0 or 1, got {row[2]!r}"
                )
            try:
                covs = [float(v) for v in row[4:]]
            except ValueError:
                raise DataError(f"{path}: row {lineno}: bad covariate value") from None
            times.append(t)
            events.append(int(row[2]))
            labels_per_row.append(row[3])
            rows.append(covs)

    if not times:
        raise DataError(f"{path}: no data rows")
    labels: list[str] = []
    codes = np.empty(len(times), dtype=np.int64)
    for i, lab in enumerate(labels_per_row):
        if lab not in labels:
            labels.append(lab)
        codes[i] = labels.index(lab) + 1
    try:
        return SurvivalDataset(
            times=np.array(times),
            events=np.array(events),
            subgroups=codes,
            X=np.array(rows, dtype=np.float64).reshape(len(times), len(feature_names)),
            feature_names=feature_names,
            subgroup_labels=tuple(labels),
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
