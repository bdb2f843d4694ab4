"""Accuracy metrics, relative-to-naive reports and the snapshot robustness study."""

from __future__ import annotations

import io
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import pandas as pd

from .models import ModelConfig, ModelKind, NowcastTrace, run_model
from .panel import MonthlyPanel, same_cases

ERROR_METRICS = ("rmse", "mae", "rmspe", "mape")
METRICS = ERROR_METRICS + ("corr",)
HEADERS = {"rmse": "RMSE", "mae": "MAE", "rmspe": "RMSPE", "mape": "MAPE", "corr": "CORR"}
NAIVE = ModelKind.NAIVE.label


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSet:
    """Count-scale accuracy of one trace.

    Percentage metrics skip months with ``c_t == 0`` (``n_excluded_zero``);
    ``corr`` is None when either series has zero variance.
    """

    rmse: float
    mae: float
    rmspe: float
    mape: float
    corr: float | None
    n_used: int
    n_excluded_zero: int

    def get(self, name: str):
        return getattr(self, name)


def pearson(a, b) -> float | None:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(da @ da), np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        return None
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def _rms(x) -> float:
    # scale first so tiny or huge errors neither underflow nor overflow when squared
    s = np.max(np.abs(x))
    if s == 0 or not np.isfinite(s):
        return float(s)
    return float(s * np.sqrt(np.mean((x / s) ** 2)))


def compute_metrics(trace: NowcastTrace) -> MetricSet:
    """RMSE, MAE, RMSPE, MAPE and Pearson correlation of predicted vs observed counts."""
    pred = np.asarray(trace.predicted, dtype=float)
    obs = np.asarray(trace.observed, dtype=float)
    if pred.size == 0:
        raise ReportError("empty trace")
    if pred.shape != obs.shape:
        raise ReportError("predicted and observed are not aligned")
    err = pred - obs
    keep = obs > 0
    rel = err[keep] / obs[keep]
    return MetricSet(
        rmse=_rms(err),
        mae=float(np.mean(np.abs(err))),
        rmspe=_rms(rel) if rel.size else float("nan"),
        mape=float(np.mean(np.abs(rel))) if rel.size else float("nan"),
        corr=pearson(pred, obs),
        n_used=int(keep.sum()),
        n_excluded_zero=int((~keep).sum()),
    )


@dataclass(frozen=True)
class EvalReport:
    """Absolute and naive-relative metrics for every model over one window.

    ``relative[model][metric]`` divides each error metric by naive's;
    correlation is carried over unchanged. ``best[metric]`` lists the
    models attaining the best value (ties included).
    """

    window: tuple[pd.Period, pd.Period]
    models: tuple[str, ...]
    absolute: dict
    relative: dict
    best: dict

    @property
    def naive(self) -> MetricSet:
        return self.absolute[NAIVE]


def relative_report(traces: Sequence[NowcastTrace]) -> EvalReport:
    if not traces:
        raise ReportError("no traces")
    names = [t.model for t in traces]
    if len(set(names)) != len(names):
        raise ReportError(f"duplicate model names: {names}")
    if NAIVE not in names:
        raise ReportError("the naive trace is required as the reference row")
    ref = traces[0]
    for t in traces[1:]:
        if not t.months.equals(ref.months):
            raise ReportError(f"{t.model} window {t.months[0]}..{t.months[-1]} differs from "
                              f"{ref.model} window {ref.months[0]}..{ref.months[-1]}")
    absolute = {t.model: compute_metrics(t) for t in traces}
    naive = absolute[NAIVE]
    relative = {}
    for name, ms in absolute.items():
        row = {}
        for m in ERROR_METRICS:
            denom = naive.get(m)
            row[m] = ms.get(m) / denom if denom > 0 else float("nan")
        row["corr"] = ms.corr
        relative[name] = row
    best = {}
    for m in METRICS:
        vals = {n: relative[n][m] for n in names if relative[n][m] is not None and np.isfinite(relative[n][m])}
        if not vals:
            best[m] = ()
            continue
        target = max(vals.values()) if m == "corr" else min(vals.values())
        best[m] = tuple(n for n in names if n in vals and vals[n] == target)
    return EvalReport(
        window=(ref.months[0], ref.months[-1]),
        models=tuple(names),
        absolute=absolute,
        relative=relative,
        best=best,
    )


def _num(v, digits=3) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "NA"
    return f"{v:.{digits}f}"


def format_table(report: EvalReport, mark_best: bool = False) -> str:
    """Comma-separated table: model rows, five metric columns, naive absolutes parenthesized."""
    out = io.StringIO()
    out.write("model," + ",".join(HEADERS[m] for m in METRICS) + "\n")
    for name in report.models:
        cells = []
        for m in METRICS:
            v = report.relative[name][m]
            if name == NAIVE and m in ERROR_METRICS:
                cell = f"1 ({_num(report.naive.get(m))})"
            else:
                cell = _num(v)
            if mark_best and name in report.best[m]:
                cell += "*"
            cells.append(cell)
        out.write(f"{name}," + ",".join(cells) + "\n")
    return out.getvalue()


def report_frame(report: EvalReport) -> pd.DataFrame:
    """Long machine-readable form: one row per (model, metric)."""
    rows = []
    for name in report.models:
        ms = report.absolute[name]
        for m in METRICS:
            rows.append({
                "model": name,
                "metric": HEADERS[m],
                "absolute": ms.get(m),
                "relative": report.relative[name][m] if m in ERROR_METRICS else None,
                "best": name in report.best[m],
                "n_used": ms.n_used if m in ("rmspe", "mape") else ms.n_used + ms.n_excluded_zero,
                "n_excluded_zero": ms.n_excluded_zero if m in ("rmspe", "mape") else 0,
                "window_start": str(report.window[0]),
                "window_end": str(report.window[1]),
            })
    return pd.DataFrame(rows)


def check_report(report: EvalReport) -> None:
    """Assert the report's structural invariants (RMSE >= MAE, naive ratios 1)."""
    for name, ms in report.absolute.items():
        if ms.rmse < ms.mae * (1 - 1e-12):
            raise ReportError(f"{name}: RMSE {ms.rmse} < MAE {ms.mae}")
    for m in ERROR_METRICS:
        v = report.relative[NAIVE][m]
        if np.isfinite(v) and v != 1.0:
            raise ReportError(f"naive relative {m} is {v}, expected 1")


# --------------------------------------------------------------------------
# robustness across snapshots
# --------------------------------------------------------------------------

def _aggregate(sets: Sequence[MetricSet], fn) -> MetricSet:
    vals = {}
    for f in fields(MetricSet):
        xs = [s.get(f.name) for s in sets]
        if f.name in ("n_used", "n_excluded_zero"):
            vals[f.name] = xs[0]
        elif any(x is None for x in xs):
            vals[f.name] = None
        else:
            vals[f.name] = float(fn(np.array(xs, dtype=float)))
    return MetricSet(**vals)


def _mean(x):
    # identical snapshots must reproduce the value exactly, not up to rounding
    return x[0] if np.all(x == x[0]) else np.mean(x)


def _sample_std(x):
    if x.size < 2 or np.all(x == x[0]):
        return 0.0
    return np.std(x, ddof=1)


def robustness_study(panels: Sequence[MonthlyPanel], configs: Sequence[ModelConfig], eval_window) -> dict:
    """Run every model on every snapshot; per model return (mean, sample std) of each metric."""
    panels = list(panels)
    if len(panels) < 2:
        raise ReportError("a robustness study needs at least two snapshots")
    if not same_cases(panels):
        raise ReportError("snapshots must share identical case series and months")
    for p in panels[1:]:
        if (p.gdt is None) != (panels[0].gdt is None) or (
            p.gdt is not None and not np.array_equal(p.gdt, panels[0].gdt)
        ):
            raise ReportError("snapshots must share the same gdt series")
    out = {}
    for cfg in configs:
        sets = [compute_metrics(run_model(p, cfg, eval_window)) for p in panels]
        out[cfg.kind.label] = (_aggregate(sets, _mean), _aggregate(sets, _sample_std))
    return out


def _short(v) -> str:
    if v is None or not np.isfinite(v):
        return "NA"
    return np.format_float_positional(round(float(v), 3), trim="-")


def format_robustness(study: dict) -> str:
    """Table with ``mean(std)`` cells, one row per model."""
    out = io.StringIO()
    out.write("model," + ",".join(HEADERS[m] for m in METRICS) + "\n")
    for name, (mean, std) in study.items():
        cells = [f"{_short(mean.get(m))}({_short(std.get(m))})" for m in METRICS]
        out.write(f"{name}," + ",".join(cells) + "\n")
    return out.getvalue()
