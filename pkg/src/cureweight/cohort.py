"""Subjects, cohorts, CSV ingestion and calibration targets.

A :class:`Cohort` stores its data column-wise (``time``, ``event``,
``covariates``) as read-only numpy arrays; :class:`SubjectRecord` views are
built on demand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    event: bool
    covariates: tuple

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise ValidationError(f"time must be finite and >= 0, got {self.time}")


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable collection of subjects sharing a covariate dimension.

    Parameters
    ----------
    time : array_like, shape (n,)
        Observed (event or censoring) times.
    event : array_like of bool, shape (n,)
        True when the event was observed.
    covariates : array_like, shape (n, p)
    covariate_names : sequence of str, length p
    label : str
        Free-form tag such as ``"historical"`` or ``"trial"``.
    excluded_count : int
        Rows dropped at load time because of missing values.
    """

    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = ()
    label: str = ""
    excluded_count: int = 0

    def __post_init__(self):
        time = _readonly(self.time, float)
        event = np.asarray(self.event)
        if event.dtype != bool:
            if not np.all(np.isin(event, (0, 1))):
                raise ValidationError("event indicators must be 0/1")
        event = _readonly(event, bool)
        cov = np.array(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(len(time), -1) if len(time) else cov.reshape(0, 0)
        cov = _readonly(cov, float)
        n = len(time)
        if n == 0:
            raise ValidationError("cohort must contain at least one record")
        if event.shape != (n,) or cov.shape[0] != n:
            raise ValidationError("time, event and covariates must have the same length")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise ValidationError("times must be finite and non-negative")
        if not np.all(np.isfinite(cov)):
            raise ValidationError("covariates must be finite")
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise ValidationError(
                f"{len(names)} covariate names for {cov.shape[1]} covariate columns")
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "covariate_names", names)

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], covariate_names=(), label=""):
        if not records:
            raise ValidationError("cohort must contain at least one record")
        p = len(records[0].covariates)
        if any(len(r.covariates) != p for r in records):
            raise ValidationError("all records must share the covariate dimension")
        return cls(
            time=[r.time for r in records],
            event=[bool(r.event) for r in records],
            covariates=np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            covariate_names=covariate_names,
            label=label,
        )

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def records(self) -> list:
        return [
            SubjectRecord(float(t), bool(e), tuple(float(v) for v in x))
            for t, e, x in zip(self.time, self.event, self.covariates)
        ]

    def subset(self, index) -> "Cohort":
        """Rows ``index`` (repeats allowed, as in bootstrap resampling)."""
        index = np.asarray(index)
        return Cohort(self.time[index], self.event[index], self.covariates[index],
                      self.covariate_names, self.label)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class CovariateTarget:
    means: np.ndarray
    source_n: int

    def __post_init__(self):
        means = _readonly(np.atleast_1d(self.means), float)
        if not np.all(np.isfinite(means)):
            raise ValidationError("target means must be finite")
        if self.source_n < 1:
            raise ValidationError("source_n must be positive")
        object.__setattr__(self, "means", means)


def covariate_target(cohort: Cohort) -> CovariateTarget:
    """Arithmetic covariate means of ``cohort``, used as a balancing target."""
    return CovariateTarget(cohort.covariates.mean(axis=0), cohort.n)


@dataclass(frozen=True)
class CohortSchema:
    """Column mapping for :func:`load_cohort`."""

    time_col: str = "time"
    event_col: str = "event"
    covariate_cols: tuple = field(default_factory=tuple)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "CohortSchema":
        cols = mapping.get("covariate_cols") or ()
        if isinstance(cols, str):
            cols = [c.strip() for c in cols.split(",") if c.strip()]
        return cls(
            time_col=mapping.get("time_col", "time"),
            event_col=mapping.get("event_col", "event"),
            covariate_cols=tuple(cols),
        )


def _parse_float(token, column, line):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"row {line}: column {column!r} is not numeric: {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {line}: column {column!r} is not finite: {token!r}")
    return value


def load_cohort(path, schema: CohortSchema | None = None, label: str = "") -> Cohort:
    """Read a cohort from a UTF-8 CSV file with a header row.

    Rows with a missing value in any declared column are dropped (listwise
    deletion) and counted in ``Cohort.excluded_count``. When
    ``schema.covariate_cols`` is empty every column other than time and
    event is used as a covariate.

    Raises
    ------
    SchemaError
        A declared column is absent from the header.
    ParseError
        A time or covariate value is not numeric; the message names the row.
    ValidationError
        Negative time or an event code other than 0/1.
    """
    schema = schema or CohortSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        cov_cols = list(schema.covariate_cols) or [
            c for c in header if c not in (schema.time_col, schema.event_col)]
        missing = [c for c in [schema.time_col, schema.event_col, *cov_cols] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")

        times, events, covs = [], [], []
        excluded = 0
        # header is line 1
        for line, row in enumerate(reader, start=2):
            cells = [row[schema.time_col], row[schema.event_col], *(row[c] for c in cov_cols)]
            if any(c is None or c.strip().lower() in MISSING_TOKENS for c in cells):
                excluded += 1
                continue
            t = _parse_float(row[schema.time_col].strip(), schema.time_col, line)
            if t < 0:
                raise ValidationError(f"row {line}: negative time {t}")
            ev = row[schema.event_col].strip()
            if ev not in ("0", "1"):
                raise ValidationError(
                    f"row {line}: event column {schema.event_col!r} must be 0 or 1, got {ev!r}")
            times.append(t)
            events.append(ev == "1")
            covs.append([_parse_float(row[c].strip(), c, line) for c in cov_cols])

    if not times:
        raise ValidationError(f"{path}: no complete rows")
    return Cohort(
        time=times,
        event=events,
        covariates=np.array(covs, dtype=float).reshape(len(times), len(cov_cols)),
        covariate_names=tuple(cov_cols),
        label=label or path.stem,
        excluded_count=excluded,
    )


def write_cohort(cohort: Cohort, path, schema: CohortSchema | None = None) -> None:
    """Write ``cohort`` as CSV; floats use ``repr`` so values round-trip exactly."""
    schema = schema or CohortSchema()
    names = list(schema.covariate_cols) or list(cohort.covariate_names)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([schema.time_col, schema.event_col, *names])
        for t, e, x in zip(cohort.time, cohort.event, cohort.covariates):
            w.writerow([repr(float(t)), int(e), *(repr(float(v)) for v in x)])
