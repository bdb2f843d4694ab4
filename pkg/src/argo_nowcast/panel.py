"""Monthly case/search panels: transforms, weekly aggregation and CSV I/O."""

from __future__ import annotations

import calendar
import dataclasses
import datetime as dt
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

logger = logging.getLogger(__name__)


class PanelError(ValueError):
    """Raised when input series violate the panel invariants."""


# --------------------------------------------------------------------------
# months
# --------------------------------------------------------------------------

def to_month(value) -> pd.Period:
    """Coerce ``'YYYY-MM'``, ``(year, month)``, a date or a Period to a monthly Period."""
    if isinstance(value, pd.Period):
        return value.asfreq("M")
    if isinstance(value, tuple) and len(value) == 2:
        return pd.Period(year=int(value[0]), month=int(value[1]), freq="M")
    if isinstance(value, (dt.date, pd.Timestamp)):
        return pd.Period(year=value.year, month=value.month, freq="M")
    if isinstance(value, str):
        try:
            return pd.Period(value.strip()[:7], freq="M")
        except ValueError as exc:
            raise PanelError(f"cannot parse month {value!r}") from exc
    raise PanelError(f"cannot interpret {value!r} as a month")


def month_range(start, end) -> pd.PeriodIndex:
    start, end = to_month(start), to_month(end)
    if end < start:
        raise PanelError(f"empty month range {start}..{end}")
    return pd.period_range(start, end, freq="M")


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def log1p_counts(c):
    """Return ``log(c + 1)`` for nonnegative finite counts (scalar or array)."""
    arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise PanelError("counts must be finite")
    if np.any(arr < 0):
        raise PanelError("counts must be nonnegative")
    out = np.log1p(arr)
    return float(out) if out.ndim == 0 else out


def inverse_log1p(y):
    """Inverse of :func:`log1p_counts`: ``exp(y) - 1``."""
    out = np.expm1(np.asarray(y, dtype=float))
    return float(out) if out.ndim == 0 else out


class Log1pTransformer(TransformerMixin, BaseEstimator):
    """Stateless ``log(x + 1)`` transformer; ``inverse_transform`` optionally clips at zero."""

    def __init__(self, clip_inverse: bool = True):
        self.clip_inverse = clip_inverse

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return log1p_counts(X)

    def inverse_transform(self, X):
        out = inverse_log1p(X)
        if self.clip_inverse:
            out = np.maximum(out, 0.0)
        return out


# --------------------------------------------------------------------------
# weekly -> monthly
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Week:
    """One weekly observation starting on ``start`` and spanning ``length_days`` days."""

    start: dt.date
    value: float
    length_days: int = 7

    @property
    def end(self) -> dt.date:
        """First day after the week."""
        return self.start + dt.timedelta(days=self.length_days)


def _check_weeks(weeks: Sequence[Week]) -> None:
    for w in weeks:
        if w.length_days <= 0:
            raise PanelError(f"week starting {w.start} has nonpositive length")
        if not math.isfinite(w.value) or w.value < 0:
            raise PanelError(f"week starting {w.start} has invalid value {w.value!r}")
    for prev, cur in zip(weeks, weeks[1:]):
        if cur.start < prev.end:
            raise PanelError(f"overlapping weeks starting {prev.start} and {cur.start}")


def _split_week(week: Week):
    """Yield (month, days inside that month) for one week."""
    day = week.start
    end = week.end
    while day < end:
        last = calendar.monthrange(day.year, day.month)[1]
        month_end = dt.date(day.year, day.month, last) + dt.timedelta(days=1)
        stop = min(end, month_end)
        yield pd.Period(year=day.year, month=day.month, freq="M"), (stop - day).days
        day = stop


def month_coverage(weeks: Sequence[Week]) -> dict[pd.Period, int]:
    """Number of days of each touched month that are covered by some week."""
    covered: dict[pd.Period, int] = {}
    for w in weeks:
        for month, days in _split_week(w):
            covered[month] = covered.get(month, 0) + days
    return covered


def weekly_to_monthly(weeks: Sequence[Week], keep_incomplete: bool = False) -> list[tuple[pd.Period, float]]:
    """Aggregate weekly values to calendar months by day-fraction weighting.

    A week contributes ``days_in_month / length_days * value`` to every month
    it touches. Months not fully covered by weeks are incomplete; they are
    dropped (with a warning) unless ``keep_incomplete`` is set.
    """
    weeks = list(weeks)
    _check_weeks(weeks)
    totals: dict[pd.Period, float] = {}
    for w in weeks:
        for month, days in _split_week(w):
            totals[month] = totals.get(month, 0.0) + days / w.length_days * w.value
    coverage = month_coverage(weeks)
    incomplete = sorted(m for m, d in coverage.items() if d < m.days_in_month)
    if incomplete and not keep_incomplete:
        logger.warning("dropping incomplete months: %s", ", ".join(map(str, incomplete)))
        for m in incomplete:
            del totals[m]
    return sorted(totals.items())


# --------------------------------------------------------------------------
# panels
# --------------------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MonthlyPanel:
    """Aligned monthly case counts and search fractions for one region.

    ``queries`` has shape ``(n_months, K)`` with column names ``terms``;
    ``gdt`` is an optional per-month Google-Dengue-Trends intensity.
    Cases may be fractional when they come from weekly aggregation.
    """

    region: str
    months: pd.PeriodIndex
    cases: np.ndarray
    queries: np.ndarray
    terms: tuple[str, ...]
    gdt: np.ndarray | None = None

    def __post_init__(self):
        months = pd.PeriodIndex([to_month(m) for m in self.months], freq="M")
        object.__setattr__(self, "months", months)
        object.__setattr__(self, "cases", _frozen(self.cases))
        q = np.asarray(self.queries, dtype=float)
        if q.ndim == 1:
            q = q.reshape(-1, 1) if len(self.terms) == 1 else q.reshape(len(months), -1)
        object.__setattr__(self, "queries", _frozen(q))
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.gdt is not None:
            object.__setattr__(self, "gdt", _frozen(self.gdt))
        self._validate()

    def _validate(self):
        n = len(self.months)
        if n == 0:
            raise PanelError("panel has no months")
        if n > 1:
            steps = np.diff(self.months.asi8)
            if np.any(steps <= 0):
                bad = self.months[1:][steps <= 0][0]
                raise PanelError(f"months not strictly increasing at {bad}")
            if np.any(steps > 1):
                i = int(np.flatnonzero(steps > 1)[0])
                raise PanelError(f"gap at {self.months[i] + 1}")
        if self.cases.shape != (n,):
            raise PanelError(f"cases length {self.cases.shape[0]} != {n} months")
        if not np.all(np.isfinite(self.cases)) or np.any(self.cases < 0):
            raise PanelError("cases must be finite and nonnegative")
        if self.queries.shape[0] != n:
            raise PanelError(f"query columns length {self.queries.shape[0]} != {n} months")
        if self.queries.shape[1] != len(self.terms):
            raise PanelError(f"{self.queries.shape[1]} query columns but {len(self.terms)} terms")
        if not np.all(np.isfinite(self.queries)) or np.any(self.queries < 0):
            raise PanelError("query values must be finite and nonnegative")
        if self.gdt is not None:
            if self.gdt.shape != (n,):
                raise PanelError(f"gdt length {self.gdt.shape[0]} != {n} months")
            if not np.all(np.isfinite(self.gdt)) or np.any((self.gdt < 0) | (self.gdt > 1)):
                raise PanelError("gdt values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.months)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonthlyPanel):
            return NotImplemented
        same_gdt = (self.gdt is None and other.gdt is None) or (
            self.gdt is not None and other.gdt is not None and np.array_equal(self.gdt, other.gdt)
        )
        return (
            self.region == other.region
            and self.months.equals(other.months)
            and self.terms == other.terms
            and np.array_equal(self.cases, other.cases)
            and np.array_equal(self.queries, other.queries)
            and same_gdt
        )

    @property
    def n_queries(self) -> int:
        return self.queries.shape[1]

    @property
    def start(self) -> pd.Period:
        return self.months[0]

    @property
    def end(self) -> pd.Period:
        return self.months[-1]

    def index_of(self, month) -> int:
        """0-based position of ``month``; raises if outside the panel."""
        m = to_month(month)
        i = m.ordinal - self.months[0].ordinal
        if not 0 <= i < len(self.months):
            raise PanelError(f"month {m} outside panel {self.start}..{self.end}")
        return i

    def restrict(self, start, end) -> "MonthlyPanel":
        i, j = self.index_of(start), self.index_of(end)
        return self.replace(
            months=self.months[i : j + 1],
            cases=self.cases[i : j + 1],
            queries=self.queries[i : j + 1],
            gdt=None if self.gdt is None else self.gdt[i : j + 1],
        )

    def replace(self, **changes) -> "MonthlyPanel":
        return dataclasses.replace(self, **changes)

    def to_log(self) -> "LogPanel":
        return LogPanel(
            months=self.months,
            y=_frozen(log1p_counts(self.cases)),
            X=_frozen(log1p_counts(self.queries)),
            gdt=None if self.gdt is None else _frozen(log1p_counts(self.gdt)),
        )


@dataclass(frozen=True, eq=False)
class LogPanel:
    """``y = log(c + 1)``, ``X = log(q + 1)`` and ``log(gdt + 1)`` on the panel's months."""

    months: pd.PeriodIndex
    y: np.ndarray
    X: np.ndarray
    gdt: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.y)


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def _read_series_csv(path, required: Sequence[str] | None = None) -> tuple[list[str], list[pd.Period], np.ndarray, bool]:
    """Read ``date,<col>...``; returns (columns, month-or-week dates, values, weekly?)."""
    if not os.path.exists(path):
        raise PanelError(f"{path}: file not found")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = [c.strip() for c in df.columns]
    if not cols or cols[0] != "date":
        raise PanelError(f"{path}: first column must be 'date', got {cols[:1]}")
    value_cols = cols[1:]
    if not value_cols:
        raise PanelError(f"{path}: no value columns")
    if required is not None and value_cols != list(required):
        raise PanelError(f"{path}: expected columns {['date', *required]}, got {cols}")
    if len(set(value_cols)) != len(value_cols):
        raise PanelError(f"{path}: duplicate column names")
    raw_dates = [s.strip() for s in df.iloc[:, 0]]
    if not raw_dates:
        raise PanelError(f"{path}: no data rows")
    weekly = len(raw_dates[0]) == 10
    dates = []
    for row, s in enumerate(raw_dates, start=2):
        try:
            if weekly:
                dates.append(dt.date.fromisoformat(s))
            else:
                if len(s) != 7:
                    raise ValueError(s)
                dates.append(pd.Period(s, freq="M"))
        except ValueError:
            raise PanelError(f"{path}: row {row}, column 'date': cannot parse {s!r}") from None
    values = np.empty((len(df), len(value_cols)))
    for j, col in enumerate(value_cols):
        for i, cell in enumerate(df.iloc[:, j + 1]):
            try:
                v = float(cell)
            except ValueError:
                raise PanelError(f"{path}: row {i + 2}, column {col!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise PanelError(f"{path}: row {i + 2}, column {col!r}: non-finite value {cell!r}")
            if v < 0:
                raise PanelError(f"{path}: row {i + 2}, column {col!r}: negative value {cell!r}")
            values[i, j] = v
    return value_cols, dates, values, weekly


def _to_monthly_frame(path, required=None, keep_incomplete=False) -> pd.DataFrame:
    cols, dates, values, weekly = _read_series_csv(path, required)
    if weekly:
        if len(set(dates)) != len(dates):
            dup = next(d for d in dates if dates.count(d) > 1)
            raise PanelError(f"{path}: duplicate week {dup}")
        order = np.argsort(np.array(dates, dtype="datetime64[D]"), kind="stable")
        dates = [dates[i] for i in order]
        values = values[order]
        out = {}
        for j, col in enumerate(cols):
            agg = weekly_to_monthly([Week(d, float(v)) for d, v in zip(dates, values[:, j])], keep_incomplete)
            out[col] = pd.Series(dict(agg), dtype=float)
        frame = pd.DataFrame(out)
    else:
        seen = set()
        for d in dates:
            if d in seen:
                raise PanelError(f"{path}: duplicate month {d}")
            seen.add(d)
        frame = pd.DataFrame(values, index=pd.PeriodIndex(dates, freq="M"), columns=cols).sort_index()
    if frame.empty:
        raise PanelError(f"{path}: no complete months")
    idx = frame.index
    full = pd.period_range(idx[0], idx[-1], freq="M")
    if len(full) != len(idx):
        missing = full.difference(idx)
        raise PanelError(f"{path}: gap at {missing[0]}")
    return frame


def ingest_panel(cases_csv, queries_csv, gdt_csv=None, region: str | None = None,
                 keep_incomplete: bool = False) -> MonthlyPanel:
    """Read case, query and optional GDT CSVs into a panel on their common months.

    Each file must be internally contiguous. Weekly files (``YYYY-MM-DD``
    week starts) are aggregated to months first.
    """
    cases = _to_monthly_frame(cases_csv, ["cases"], keep_incomplete)
    queries = _to_monthly_frame(queries_csv, None, keep_incomplete)
    frames = [cases, queries]
    gdt = None
    if gdt_csv is not None:
        gdt = _to_monthly_frame(gdt_csv, ["gdt"], keep_incomplete)
        frames.append(gdt)
    start = max(f.index[0] for f in frames)
    end = min(f.index[-1] for f in frames)
    if end < start:
        raise PanelError("input series share no months")
    months = pd.period_range(start, end, freq="M")
    if region is None:
        region = os.path.splitext(os.path.basename(str(cases_csv)))[0]
    return MonthlyPanel(
        region=region,
        months=months,
        cases=cases.loc[months, "cases"].to_numpy(),
        queries=queries.loc[months].to_numpy(),
        terms=tuple(queries.columns),
        gdt=None if gdt is None else gdt.loc[months, "gdt"].to_numpy(),
    )


def write_panel(panel: MonthlyPanel, directory) -> dict[str, str]:
    """Write ``cases.csv``, ``queries.csv`` and (if present) ``gdt.csv``; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    dates = [str(m) for m in panel.months]
    paths = {"cases": os.path.join(directory, "cases.csv"), "queries": os.path.join(directory, "queries.csv")}
    pd.DataFrame({"date": dates, "cases": panel.cases}).to_csv(paths["cases"], index=False, lineterminator="\n")
    q = pd.DataFrame(panel.queries, columns=list(panel.terms))
    q.insert(0, "date", dates)
    q.to_csv(paths["queries"], index=False, lineterminator="\n")
    if panel.gdt is not None:
        paths["gdt"] = os.path.join(directory, "gdt.csv")
        pd.DataFrame({"date": dates, "gdt": panel.gdt}).to_csv(paths["gdt"], index=False, lineterminator="\n")
    return paths


def same_cases(panels: Iterable[MonthlyPanel]) -> bool:
    panels = list(panels)
    first = panels[0]
    return all(p.months.equals(first.months) and np.array_equal(p.cases, first.cases) for p in panels[1:])
