"""Right-censored survival data: records, CSV ingestion, standardization and splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DatasetError

CANONICAL_COLUMNS = ("treatment", "time", "event")


class SchemaError(DatasetError):
    """A required column is missing from the input file."""


class ParseError(DatasetError):
    """A data row could not be parsed or violates a record invariant."""


class EmptyInputError(DatasetError):
    pass


class DegenerateFeatureError(DatasetError):
    """A feature has zero spread and cannot be standardized."""


class SplitTooSmallError(DatasetError):
    pass


@dataclass(frozen=True)
class SurvivalRecord:
    covariates: np.ndarray
    treatment: int
    time: float
    event: int


@dataclass(frozen=True)
class Standardization:
    means: np.ndarray
    sds: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.means) / self.sds

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.sds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "sds": self.sds.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardization":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["sds"], dtype=float))


@dataclass(frozen=True)
class Dataset:
    """Column-oriented survival data.

    ``covariates`` is ``(n, M)``; ``treatment``, ``time`` and ``event`` are
    length-``n`` vectors.  Treatment is stored apart from the covariates and is
    appended as the last model input by :meth:`design_matrix`.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: tuple[str, ...] = ()
    standardization: Standardization | None = None

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "treatment", np.asarray(self.treatment, dtype=int).ravel())
        object.__setattr__(self, "time", np.asarray(self.time, dtype=float).ravel())
        object.__setattr__(self, "event", np.asarray(self.event, dtype=int).ravel())
        n, m = x.shape
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(m))
        object.__setattr__(self, "feature_names", names)
        if len(names) != m:
            raise DatasetError(f"{len(names)} feature names for {m} covariates")
        for label, arr in (("treatment", self.treatment), ("time", self.time), ("event", self.event)):
            if arr.shape[0] != n:
                raise DatasetError(f"{label} has length {arr.shape[0]}, expected {n}")
        if n:
            if not np.all(np.isfinite(self.time)) or np.any(self.time <= 0):
                raise DatasetError("times must be finite and strictly positive")
            if not np.all(np.isin(self.treatment, (0, 1))):
                raise DatasetError("treatment must be 0/1")
            if not np.all(np.isin(self.event, (0, 1))):
                raise DatasetError("event must be 0/1")
        if self.standardization is not None and np.any(self.standardization.sds <= 0):
            raise DatasetError("standardization sd must be positive")

    def __len__(self) -> int:
        return self.time.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    @property
    def records(self) -> Iterator[SurvivalRecord]:
        for i in range(len(self)):
            yield SurvivalRecord(self.covariates[i].copy(), int(self.treatment[i]),
                                 float(self.time[i]), int(self.event[i]))

    def design_matrix(self, treatment: np.ndarray | int | None = None) -> np.ndarray:
        """Model inputs: covariates with the treatment column appended last.

        Passing ``treatment`` overrides the observed arm (scalar or vector).
        """
        z = self.treatment if treatment is None else np.broadcast_to(treatment, self.treatment.shape)
        return np.column_stack([self.covariates, np.asarray(z, dtype=float)])

    @property
    def treatment_index(self) -> int:
        return self.n_features

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.covariates[idx], self.treatment[idx], self.time[idx], self.event[idx],
                       self.feature_names, self.standardization)

    def with_covariates(self, covariates: np.ndarray, standardization: Standardization | None) -> "Dataset":
        return Dataset(covariates, self.treatment, self.time, self.event, self.feature_names, standardization)

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], feature_names: Sequence[str] = ()) -> "Dataset":
        records = list(records)
        if not records:
            raise EmptyInputError("no records")
        dims = {len(r.covariates) for r in records}
        if len(dims) != 1:
            raise DatasetError(f"records have mixed covariate dimensions {sorted(dims)}")
        return cls(np.vstack([r.covariates for r in records]),
                   [r.treatment for r in records], [r.time for r in records],
                   [r.event for r in records], tuple(feature_names))


def load_csv(path: str | Path, schema: Mapping[str, str] | None = None,
             features: Sequence[str] | None = None) -> Dataset:
    """Read a comma-separated file with a header row.

    ``schema`` maps the canonical names ``treatment``, ``time`` and ``event``
    to the column labels used in the file.  Features default to every other
    column, in file order.
    """
    schema = {c: c for c in CANONICAL_COLUMNS} | dict(schema or {})
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")

    for canon in CANONICAL_COLUMNS:
        if schema[canon] not in header:
            raise SchemaError(f"{path}: missing column '{schema[canon]}' ({canon})")
    reserved = {schema[c] for c in CANONICAL_COLUMNS}
    if features is None:
        features = [h for h in header if h not in reserved]
    for f in features:
        if f not in header:
            raise SchemaError(f"{path}: missing column '{f}'")
    col = {h: j for j, h in enumerate(header)}

    x = np.empty((len(rows), len(features)))
    z = np.empty(len(rows), dtype=int)
    t = np.empty(len(rows))
    d = np.empty(len(rows), dtype=int)
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(f"row {i}: expected {len(header)} fields, got {len(row)}")

        def num(name: str) -> float:
            try:
                v = float(row[col[name]])
            except ValueError:
                raise ParseError(f"row {i}: column '{name}' value {row[col[name]]!r} is not a number") from None
            if not math.isfinite(v):
                raise ParseError(f"row {i}: column '{name}' is not finite")
            return v

        x[i - 1] = [num(f) for f in features]
        time = num(schema["time"])
        if time <= 0:
            raise ParseError(f"row {i}: time must be positive, got {time}")
        t[i - 1] = time
        for canon, out in (("treatment", z), ("event", d)):
            v = num(schema[canon])
            if v not in (0.0, 1.0):
                raise ParseError(f"row {i}: {canon} must be 0 or 1, got {row[col[schema[canon]]]!r}")
            out[i - 1] = int(v)
    return Dataset(x, z, t, d, tuple(features))


def write_csv(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*data.feature_names, *CANONICAL_COLUMNS])
        for i in range(len(data)):
            w.writerow([*map(repr, data.covariates[i].tolist()), int(data.treatment[i]),
                        repr(float(data.time[i])), int(data.event[i])])


def standardize(data: Dataset, stats: Standardization | None = None) -> Dataset:
    """Centre and scale covariates to mean 0, sample sd 1.

    With ``stats`` given (e.g. from a training split) those constants are
    applied instead of being estimated from ``data``.
    """
    if stats is None:
        if len(data) < 2:
            raise DegenerateFeatureError("need at least 2 records to standardize")
        means = data.covariates.mean(axis=0)
        sds = data.covariates.std(axis=0, ddof=1)
        bad = [name for name, s in zip(data.feature_names, sds) if not s > 0]
        if bad:
            raise DegenerateFeatureError(f"constant feature(s): {', '.join(bad)}")
        stats = Standardization(means, sds)
    return data.with_covariates(stats.apply(data.covariates), stats)


def unstandardize(data: Dataset) -> Dataset:
    if data.standardization is None:
        return data
    return data.with_covariates(data.standardization.invert(data.covariates), None)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    validation_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise DatasetError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if not 0 <= self.validation_fraction < 1:
            raise DatasetError(f"validation_fraction must be in [0, 1), got {self.validation_fraction}")


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray = field(repr=False)


def split_indices(n: int, spec: SplitSpec) -> SplitIndices:
    if n < 1:
        raise SplitTooSmallError("cannot split an empty dataset")
    n_fit = int(round(n * spec.train_fraction))
    n_val = int(round(n_fit * spec.validation_fraction))
    n_train = n_fit - n_val
    if n_train < 1 or n_fit >= n or (spec.validation_fraction > 0 and n_val < 1):
        raise SplitTooSmallError(
            f"{n} records give train/validation/test sizes {n_train}/{n_val}/{n - n_fit}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return SplitIndices(np.sort(perm[:n_train]), np.sort(perm[n_train:n_fit]), np.sort(perm[n_fit:]))


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    idx = split_indices(len(data), spec)
    return data.subset(idx.train), data.subset(idx.validation), data.subset(idx.test)
