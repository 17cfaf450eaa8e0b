"""Longitudinal cohort records: loading, validation and daily gridding.

Two comma-delimited tables describe a cohort.  The units table carries one
row per subject::

    unit_id, treated, indication_day, death_day, followup_end_day,
    calendar_entry, <baseline columns...>

and the visits table one row per intermittent measurement::

    unit_id, day, <time-varying columns...>

Days are integers counted from the start of eligibility (day 0).  Empty
fields denote absent optional values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

CENSORED = -1

UNIT_COLUMNS = ("unit_id", "treated", "indication_day", "death_day",
                "followup_end_day", "calendar_entry")
VISIT_COLUMNS = ("unit_id", "day")


class CohortValidationError(ValueError):
    """Base class for malformed cohort input."""

    def __init__(self, message: str, unit_id: str | None = None):
        self.unit_id = unit_id
        if unit_id is not None:
            message = f"unit {unit_id!r}: {message}"
        super().__init__(message)


class MissingColumnError(CohortValidationError):
    pass


class VisitOrderError(CohortValidationError):
    pass


class MissingIndicationError(CohortValidationError):
    pass


class UnexpectedIndicationError(CohortValidationError):
    pass


class DeathAfterFollowupError(CohortValidationError):
    pass


class IndicationAfterFollowupError(CohortValidationError):
    pass


class MissingVisitsError(CohortValidationError):
    pass


class FieldValueError(CohortValidationError):
    pass


def id_sort_key(unit_id: str):
    """Order ids numerically when they look like integers, else lexically."""
    try:
        return (0, int(unit_id), "")
    except (TypeError, ValueError):
        return (1, 0, str(unit_id))


@dataclass(frozen=True, eq=False)
class CohortUnit:
    unit_id: str
    treated: bool
    indication_day: int | None
    baseline: np.ndarray
    visit_days: np.ndarray
    visit_values: np.ndarray
    death_day: int | None
    followup_end_day: int
    exogenous: np.ndarray

    @property
    def missing_indication(self) -> bool:
        return self.indication_day is None

    @property
    def visits(self) -> list[tuple[int, np.ndarray]]:
        return [(int(d), v) for d, v in zip(self.visit_days, self.visit_values)]

    def last_at_risk_day(self, K: int) -> int:
        """Last day in 1..K on which an indication could still be recorded.

        Days on or after death and after the end of follow-up are excluded.
        """
        last = min(K, self.followup_end_day)
        if self.death_day is not None:
            last = min(last, self.death_day - 1)
        return max(last, 0)

    def validate(self) -> None:
        uid = self.unit_id
        if self.treated:
            if self.indication_day is None:
                raise MissingIndicationError("treated unit has no indication_day", uid)
            if self.indication_day < 0:
                raise FieldValueError("indication_day must be non-negative", uid)
            if self.indication_day > self.followup_end_day:
                raise IndicationAfterFollowupError(
                    "indication_day exceeds followup_end_day", uid)
        elif self.indication_day is not None:
            raise UnexpectedIndicationError("untreated unit has an indication_day", uid)
        if self.followup_end_day < 0:
            raise FieldValueError("followup_end_day must be non-negative", uid)
        if self.death_day is not None:
            if self.death_day < 0:
                raise FieldValueError("death_day must be non-negative", uid)
            if self.death_day > self.followup_end_day:
                raise DeathAfterFollowupError("death_day exceeds followup_end_day", uid)
        if len(self.visit_days) == 0:
            raise MissingVisitsError("no visits recorded", uid)
        if self.visit_days[0] != 0:
            raise VisitOrderError("first visit must be on day 0", uid)
        if np.any(np.diff(self.visit_days) <= 0):
            raise VisitOrderError("visit days must be strictly increasing", uid)
        if self.visit_values.shape[0] != len(self.visit_days):
            raise FieldValueError("visit values do not match visit days", uid)


@dataclass
class Cohort(Sequence):
    """Validated units plus the column names they were read with."""

    units: list[CohortUnit]
    baseline_names: list[str]
    visit_names: list[str]
    exogenous_names: list[str] = field(default_factory=lambda: ["calendar_entry"])

    def __len__(self) -> int:
        return len(self.units)

    def __getitem__(self, i):
        return self.units[i]

    def __iter__(self) -> Iterator[CohortUnit]:
        return iter(self.units)

    def by_id(self) -> dict[str, CohortUnit]:
        return {u.unit_id: u for u in self.units}

    def subset(self, unit_ids: Iterable[str]) -> "Cohort":
        lookup = self.by_id()
        return Cohort([lookup[i] for i in unit_ids], list(self.baseline_names),
                      list(self.visit_names), list(self.exogenous_names))


def _optional_int(value, column: str, unit_id: str) -> int | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    if isinstance(value, str):
        value = value.strip()
        if value == "":
            return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise FieldValueError(f"{column} is not a number: {value!r}", unit_id) from None
    if not number.is_integer():
        raise FieldValueError(f"{column} must be an integer day, got {value!r}", unit_id)
    return int(number)


def _read_table(path, required: Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"unit_id": str}, keep_default_na=False,
                        na_values=[""], skipinitialspace=True)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MissingColumnError(f"{Path(path).name}: missing column(s) {', '.join(missing)}")
    return frame


def load_cohort(units_file, visits_file) -> Cohort:
    """Read and validate a cohort from its units and visits tables."""
    units = _read_table(units_file, UNIT_COLUMNS)
    visits = _read_table(visits_file, VISIT_COLUMNS)
    baseline_names = [c for c in units.columns if c not in UNIT_COLUMNS]
    visit_names = [c for c in visits.columns if c not in VISIT_COLUMNS]

    for name in baseline_names + ["calendar_entry"]:
        if units[name].isna().any():
            bad = units.loc[units[name].isna(), "unit_id"].iloc[0]
            raise FieldValueError(f"{name} is empty", bad)
    if visits[visit_names].isna().any().any():
        bad = visits.loc[visits[visit_names].isna().any(axis=1), "unit_id"].iloc[0]
        raise FieldValueError("visit record has empty values", bad)

    grouped = {uid: g for uid, g in visits.groupby("unit_id", sort=False)}
    if units["unit_id"].duplicated().any():
        dup = units.loc[units["unit_id"].duplicated(), "unit_id"].iloc[0]
        raise FieldValueError("duplicate unit_id", dup)
    orphan = set(grouped) - set(units["unit_id"])
    if orphan:
        raise FieldValueError("visits reference an unknown unit", sorted(orphan, key=id_sort_key)[0])

    out = []
    baseline = units[baseline_names].to_numpy(dtype=float) if baseline_names else \
        np.zeros((len(units), 0))
    for row_idx, row in enumerate(units.itertuples(index=False)):
        rec = row._asdict()
        uid = str(rec["unit_id"])
        treated_raw = _optional_int(rec["treated"], "treated", uid)
        if treated_raw not in (0, 1):
            raise FieldValueError("treated must be 0 or 1", uid)
        followup = _optional_int(rec["followup_end_day"], "followup_end_day", uid)
        if followup is None:
            raise FieldValueError("followup_end_day is empty", uid)
        g = grouped.get(uid)
        if g is None:
            days = np.zeros(0, dtype=np.int64)
            values = np.zeros((0, len(visit_names)))
        else:
            raw_days = g["day"].to_numpy(dtype=float)
            if np.any(~np.isfinite(raw_days)) or np.any(raw_days != np.round(raw_days)):
                raise FieldValueError("visit day must be an integer", uid)
            days = raw_days.astype(np.int64)
            values = g[visit_names].to_numpy(dtype=float)
        unit = CohortUnit(
            unit_id=uid,
            treated=bool(treated_raw),
            indication_day=_optional_int(rec["indication_day"], "indication_day", uid),
            baseline=baseline[row_idx].copy(),
            visit_days=days,
            visit_values=values,
            death_day=_optional_int(rec["death_day"], "death_day", uid),
            followup_end_day=followup,
            exogenous=np.array([float(rec["calendar_entry"])]),
        )
        unit.validate()
        out.append(unit)
    return Cohort(out, baseline_names, visit_names)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_cohort(cohort: Cohort, units_file, visits_file) -> None:
    """Write a cohort in the format read by :func:`load_cohort`."""
    with open(units_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(UNIT_COLUMNS) + list(cohort.baseline_names))
        for u in cohort:
            w.writerow([u.unit_id, _fmt(u.treated), _fmt(u.indication_day), _fmt(u.death_day),
                        _fmt(u.followup_end_day), _fmt(u.exogenous[0])]
                       + [_fmt(v) for v in u.baseline])
    with open(visits_file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(VISIT_COLUMNS) + list(cohort.visit_names))
        for u in cohort:
            for day, values in zip(u.visit_days, u.visit_values):
                w.writerow([u.unit_id, _fmt(int(day))] + [_fmt(v) for v in values])


@dataclass(frozen=True)
class Standardization:
    """Per-column centring and scaling."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def identity(cls, p: int) -> "Standardization":
        return cls(np.zeros(p), np.ones(p))

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardization":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        mean = values.mean(axis=0) if len(values) else np.zeros(values.shape[1])
        sd = values.std(axis=0, ddof=1) if len(values) > 1 else np.ones(values.shape[1])
        sd = np.where(np.isfinite(sd) & (sd > 0), sd, 1.0)
        return cls(mean, sd)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd


def cohort_standardizations(cohort: Cohort) -> tuple[Standardization, Standardization]:
    """Pooled standardization of baseline columns and of visit columns."""
    base = np.array([u.baseline for u in cohort]).reshape(len(cohort), len(cohort.baseline_names))
    visits = [u.visit_values for u in cohort if len(u.visit_values)]
    allv = np.vstack(visits) if visits else np.zeros((0, len(cohort.visit_names)))
    return Standardization.fit(base), Standardization.fit(allv)


@dataclass(frozen=True, eq=False)
class DailyPanel:
    """Time-varying covariates on the daily grid 0..K.

    ``day_offsets[t]`` is the age in days of the visit carried to day ``t``.
    """

    unit_id: str
    rows: np.ndarray
    day_offsets: np.ndarray

    @property
    def K(self) -> int:
        return self.rows.shape[0] - 1


def locf_index(visit_days: np.ndarray, K: int) -> np.ndarray:
    """Index of the visit in force on each day 0..K."""
    grid = np.arange(K + 1)
    return np.searchsorted(visit_days, grid, side="right") - 1


def build_panel(unit: CohortUnit, K: int,
                standardization: Standardization | None = None) -> DailyPanel:
    """Carry each visit forward to fill days 0..K, then standardize."""
    if K < 0:
        raise ValueError("K must be non-negative")
    if len(unit.visit_days) == 0:
        raise MissingVisitsError("no visits recorded", unit.unit_id)
    idx = locf_index(unit.visit_days, K)
    if idx[0] < 0:
        raise VisitOrderError("first visit must be on day 0", unit.unit_id)
    rows = unit.visit_values[idx]
    if standardization is not None:
        rows = standardization.apply(rows)
    offsets = np.arange(K + 1) - unit.visit_days[idx]
    return DailyPanel(unit.unit_id, rows, offsets)


def eligibility_flag(T: int | None, K: int) -> bool:
    """Whether an indication at day ``T`` falls inside the window [0, K]."""
    if T is None or T < 0:
        return False
    return T <= K


def build_design(cohort: Cohort | Sequence[CohortUnit], K: int, *,
                 baseline_cols: Sequence[int] | None = None,
                 visit_cols: Sequence[int] | None = None,
                 baseline_std: Standardization | None = None,
                 visit_std: Standardization | None = None,
                 intercept: bool = True) -> np.ndarray:
    """Stack per-day covariate rows into an array of shape (n, K+1, p).

    Columns are ordered intercept, baseline covariates, time-varying
    covariates.  Baseline covariates are repeated on every day.
    """
    units = list(cohort)
    p0_all = len(units[0].baseline) if units else 0
    p1_all = units[0].visit_values.shape[1] if units else 0
    bcols = list(range(p0_all)) if baseline_cols is None else list(baseline_cols)
    vcols = list(range(p1_all)) if visit_cols is None else list(visit_cols)
    p = int(intercept) + len(bcols) + len(vcols)
    X = np.empty((len(units), K + 1, p))
    for i, u in enumerate(units):
        col = 0
        if intercept:
            X[i, :, 0] = 1.0
            col = 1
        base = u.baseline if baseline_std is None else baseline_std.apply(u.baseline)
        X[i, :, col:col + len(bcols)] = base[bcols]
        col += len(bcols)
        if vcols:
            panel = build_panel(u, K, visit_std)
            X[i, :, col:] = panel.rows[:, vcols]
    return X
