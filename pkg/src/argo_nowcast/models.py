"""Rolling-window nowcasting: ARGO and the benchmark models.

Every model predicts month ``t`` from a fit on the ``window_months`` targets
immediately before ``t``; no row of any fit touches ``c_t``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.base import clone

from .panel import LogPanel, MonthlyPanel, PanelError, to_month
from .solver import SELECTION_RULES, DifferentialLasso, FitResult, LeastSquares, PenaltySpec, SolverError

logger = logging.getLogger(__name__)

DEFAULT_LAGS: tuple[int, ...] = tuple(range(1, 13)) + (24,)
SAR_LAGS: tuple[int, ...] = (1, 2, 3, 12, 24)
DEFAULT_WINDOW = 24


class NowcastError(RuntimeError):
    pass


class HistoryError(NowcastError):
    """The panel does not reach far enough back for the requested window."""


class ModelKind(str, enum.Enum):
    ARGO = "ARGO"
    GT = "GT"
    SAR = "SAR"
    SAR_GDT = "SAR_GDT"
    GDT_RESCALE = "GDT_RESCALE"
    NAIVE = "NAIVE"

    @property
    def label(self) -> str:
        """Row label used in reports."""
        return _LABELS[self]

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("+", "_").replace("-", "_")
        aliases = {"GDT": "GDT_RESCALE", "SARGDT": "SAR_GDT"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown model kind {value!r}") from None


_LABELS = {
    ModelKind.ARGO: "ARGO",
    ModelKind.GT: "GT",
    ModelKind.SAR: "SAR",
    ModelKind.SAR_GDT: "SAR+GDT",
    ModelKind.GDT_RESCALE: "GDT",
    ModelKind.NAIVE: "naive",
}

USES_QUERIES = frozenset({ModelKind.ARGO, ModelKind.GT})
USES_GDT = frozenset({ModelKind.SAR_GDT, ModelKind.GDT_RESCALE})


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

PENALTY_SCHEMES = ("scheme-A", "scheme-B", "common", "none")


def penalty_preset(name: str, lags: Sequence[int], n_queries: int) -> PenaltySpec:
    """Named multiplier schemes.

    ``scheme-A``: lags 1-3 and the first three queries unpenalized.
    ``scheme-B``: lags 1-3 unpenalized, every query penalized.
    ``common``: everything penalized. ``none``: nothing penalized.
    """
    lag_free = tuple(0.0 if j in (1, 2, 3) else 1.0 for j in lags)
    if name == "scheme-A":
        return PenaltySpec(lag_free, tuple(0.0 if k < 3 else 1.0 for k in range(n_queries)))
    if name == "scheme-B":
        return PenaltySpec(lag_free, (1.0,) * n_queries)
    if name == "common":
        return PenaltySpec.uniform(len(lags), n_queries, 1.0)
    if name == "none":
        return PenaltySpec.uniform(len(lags), n_queries, 0.0)
    raise ValueError(f"unknown penalty scheme {name!r}; choose from {PENALTY_SCHEMES}")


@dataclass(frozen=True)
class ModelConfig:
    """Settings for one model run.

    ``lags`` defaults per kind (ARGO: 1..12 and 24; SAR/SAR+GDT: 1,2,3,12,24;
    others: none). ``penalty`` is a scheme name or an explicit PenaltySpec and
    only matters for ARGO and GT (GT always uses a common penalty when left
    unset). ``log_scale`` switches GDT rescaling to the log-count scale.

    ``selection``, ``max_dev_ratio`` and ``max_active`` control the λ search
    (see :class:`~argo_nowcast.solver.DifferentialLasso`); the path stops
    before fits with more than ``max_active`` nonzero coefficients, half the
    training window when unset.
    """

    kind: ModelKind
    lags: tuple[int, ...] | None = None
    penalty: str | PenaltySpec | None = None
    window_months: int = DEFAULT_WINDOW
    n_lambdas: int = 30
    lambda_min_ratio: float = 1e-4
    lambda_grid: tuple[float, ...] | None = None
    tie_rtol: float = 0.0
    selection: str = "min"
    max_dev_ratio: float | None = None
    max_active: int | None = None
    fit_intercept: bool = True
    log_scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.lags is not None:
            lags = tuple(sorted({int(j) for j in self.lags}))
            if any(j <= 0 for j in lags):
                raise ValueError("lags must be positive integers")
            object.__setattr__(self, "lags", lags)
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if self.window_months < 1:
            raise ValueError("window_months must be positive")
        if self.selection not in SELECTION_RULES:
            raise ValueError(f"unknown selection rule {self.selection!r}; choose from {SELECTION_RULES}")
        if self.max_active is not None and self.max_active < 1:
            raise ValueError("max_active must be at least 1")
        if self.kind is ModelKind.GT and self.lags:
            raise ValueError("GT uses no autoregressive lags")

    @property
    def lag_set(self) -> tuple[int, ...]:
        if self.lags is not None:
            return self.lags
        if self.kind is ModelKind.ARGO:
            return DEFAULT_LAGS
        if self.kind in (ModelKind.SAR, ModelKind.SAR_GDT):
            return SAR_LAGS
        return ()

    @property
    def history_months(self) -> int:
        """Months of data needed before the first evaluation month."""
        if self.kind is ModelKind.NAIVE:
            return 1
        return (max(self.lag_set) if self.lag_set else 0) + self.window_months

    def penalty_spec(self, n_queries: int) -> PenaltySpec:
        n_q = n_queries if self.kind in USES_QUERIES else 0
        pen = self.penalty
        if isinstance(pen, PenaltySpec):
            if pen.n_lags != len(self.lag_set) or pen.n_queries != n_q:
                raise ValueError(f"penalty covers {pen.n_lags} lags/{pen.n_queries} queries, "
                                 f"model has {len(self.lag_set)}/{n_q}")
            return pen
        if pen is None:
            pen = "common" if self.kind is ModelKind.GT else "scheme-B"
        return penalty_preset(pen, self.lag_set, n_q)

    @property
    def active_cap(self) -> int:
        """Most nonzero coefficients a penalized fit may carry (default: half the window)."""
        return self.max_active if self.max_active is not None else self.window_months // 2

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NowcastTrace:
    """Out-of-sample predictions of one model, paired with the observed counts."""

    model: str
    months: pd.PeriodIndex
    predicted: np.ndarray
    observed: np.ndarray
    fits: tuple | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "predicted", np.asarray(self.predicted, dtype=float))
        object.__setattr__(self, "observed", np.asarray(self.observed, dtype=float))
        if not (len(self.months) == len(self.predicted) == len(self.observed)):
            raise ValueError("trace months, predictions and observations differ in length")
        if np.any(self.predicted < 0):
            raise ValueError("predictions must be nonnegative")
        if not self.flags:
            object.__setattr__(self, "flags", ("",) * len(self.months))

    def __len__(self) -> int:
        return len(self.months)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "month": [str(m) for m in self.months],
            "observed": self.observed,
            "predicted": self.predicted,
            "flag": list(self.flags),
        })

    def coefficient_frame(self, names: Sequence[str]) -> pd.DataFrame:
        """One row per month: lambda, intercept and every coefficient."""
        if self.fits is None:
            raise ValueError(f"{self.model} trace carries no fits")
        rows = []
        for month, fit in zip(self.months, self.fits):
            row = {"month": str(month), "lambda": fit.lam, "intercept": fit.intercept}
            row.update(dict(zip(names, fit.coef)))
            rows.append(row)
        return pd.DataFrame(rows, columns=["month", "lambda", "intercept", *names])


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------

def design_columns(config: ModelConfig, terms: Sequence[str]) -> list[str]:
    cols = [f"lag{j}" for j in config.lag_set]
    if config.kind in USES_QUERIES:
        cols += list(terms)
    if config.kind is ModelKind.SAR_GDT:
        cols.append("log_gdt")
    return cols


def build_design(panel: LogPanel, t, lag_set: Sequence[int], use_queries: bool = False,
                 use_gdt: bool = False) -> np.ndarray:
    """Predictor row for target month ``t`` (0-based index or month).

    Column order: ``y[t-j]`` for lags ascending, then the panel's query
    columns at ``t``, then ``log(gdt_t + 1)``.
    """
    i = t if isinstance(t, (int, np.integer)) else to_month(t).ordinal - panel.months[0].ordinal
    if not 0 <= i < len(panel):
        raise PanelError(f"target {t} outside panel")
    lags = sorted(lag_set)
    need = lags[-1] if lags else 0
    if i < need:
        raise HistoryError(f"insufficient history for lags up to {need}: "
                           f"earliest feasible target is {panel.months[need] if need < len(panel) else 'beyond panel'}")
    row = [panel.y[i - j] for j in lags]
    if use_queries:
        row.extend(panel.X[i])
    if use_gdt:
        if panel.gdt is None:
            raise PanelError("gdt column required but absent")
        row.append(panel.gdt[i])
    return np.array(row, dtype=float)


def _design_matrix(panel: LogPanel, idx, lags, use_queries, use_gdt) -> np.ndarray:
    return np.vstack([build_design(panel, i, lags, use_queries, use_gdt) for i in idx])


# --------------------------------------------------------------------------
# harness
# --------------------------------------------------------------------------

def _eval_indices(panel: MonthlyPanel, eval_window) -> tuple[int, int]:
    start, end = (to_month(m) for m in eval_window)
    if end < start:
        raise ValueError(f"empty evaluation window {start}..{end}")
    if end > panel.end:
        raise PanelError(f"evaluation window ends {end}, after the panel ({panel.end})")
    first = start.ordinal - panel.start.ordinal
    last = end.ordinal - panel.start.ordinal
    return first, last


def check_history(panel: MonthlyPanel, config: ModelConfig, eval_window) -> None:
    """Raise HistoryError unless every training row of every evaluation month is available."""
    start = to_month(eval_window[0])
    have = start.ordinal - panel.start.ordinal
    need = config.history_months
    if have < need:
        raise HistoryError(
            f"{config.kind.label} needs {need} months of history before {start}; "
            f"panel starts {panel.start} ({have} months before), earliest feasible "
            f"evaluation month is {panel.start + need}"
        )
    if config.kind in USES_GDT and panel.gdt is None:
        raise PanelError(f"{config.kind.label} requires the gdt column")
    if config.kind in USES_QUERIES and panel.n_queries < 1:
        raise PanelError(f"{config.kind.label} requires at least one query column")


def _penalized_estimator(config: ModelConfig, spec: PenaltySpec) -> DifferentialLasso:
    return DifferentialLasso(
        penalty=spec,
        n_lambdas=config.n_lambdas,
        lambda_min_ratio=config.lambda_min_ratio,
        lambda_grid=config.lambda_grid,
        tie_rtol=config.tie_rtol,
        selection=config.selection,
        max_dev_ratio=config.max_dev_ratio,
        max_active=config.active_cap,
    )


def _rolling(panel: MonthlyPanel, config: ModelConfig, eval_window, use_queries: bool,
             use_gdt: bool, estimator) -> NowcastTrace:
    check_history(panel, config, eval_window)
    first, last = _eval_indices(panel, eval_window)
    lp = panel.to_log()
    lags = config.lag_set
    W = config.window_months
    n_lags = len(lags)
    preds, fits, flags = [], [], []
    for t in range(first, last + 1):
        month = panel.months[t]
        rows = range(t - W, t)
        X = _design_matrix(lp, rows, lags, use_queries, use_gdt)
        y = lp.y[t - W : t]
        try:
            est = clone(estimator).fit(X, y)
        except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
            raise NowcastError(f"{config.kind.label} fit failed at {month}: {exc}") from exc
        yhat = float(est.predict(build_design(lp, t, lags, use_queries, use_gdt)[None, :])[0])
        preds.append(max(np.expm1(yhat), 0.0))
        window = (panel.months[t - W], panel.months[t - 1])
        if isinstance(est, DifferentialLasso):
            fits.append(est.result_.with_window(*window))
            flags.append("")
        else:
            coef = est.coef_
            r = y - est.predict(X)
            fits.append(FitResult(intercept=est.intercept_, alpha=coef[:n_lags].copy(), beta=coef[n_lags:].copy(),
                                  lam=0.0, objective=float(r @ r), window=window))
            flags.append("ridge-fallback" if est.singular_ else "")
    return NowcastTrace(
        model=config.kind.label,
        months=panel.months[first : last + 1],
        predicted=np.array(preds),
        observed=panel.cases[first : last + 1].copy(),
        fits=tuple(fits),
        flags=tuple(flags),
    )


def run_argo(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    """Lags plus contemporaneous queries, L1 penalty re-selected by LOO every month."""
    spec = config.penalty_spec(panel.n_queries)
    return _rolling(panel, config, eval_window, True, False, _penalized_estimator(config, spec))


def run_gt(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    """Queries only, with a common L1 penalty."""
    if config.lags:
        raise ValueError("GT uses no autoregressive lags")
    spec = config.penalty_spec(panel.n_queries)
    return _rolling(panel, config, eval_window, True, False, _penalized_estimator(config, spec))


def run_sar(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    """Unpenalized least squares on lags 1, 2, 3, 12 and 24."""
    return _rolling(panel, config, eval_window, False, False, LeastSquares(fit_intercept=config.fit_intercept))


def run_sar_gdt(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    """SAR design plus ``log(gdt + 1)``."""
    return _rolling(panel, config, eval_window, False, True, LeastSquares(fit_intercept=config.fit_intercept))


def run_gdt_rescale(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    """Map the 0-1 GDT intensity to counts by a sliding affine regression."""
    check_history(panel, config, eval_window)
    first, last = _eval_indices(panel, eval_window)
    W = config.window_months
    if config.log_scale:
        target, signal = np.log1p(panel.cases), np.log1p(panel.gdt)
    else:
        target, signal = panel.cases, panel.gdt
    preds, fits, flags = [], [], []
    for t in range(first, last + 1):
        x, y = signal[t - W : t], target[t - W : t]
        window = (panel.months[t - W], panel.months[t - 1])
        if np.all(x == x[0]):
            a, b, flag = float(y.mean()), 0.0, "flat-gdt"
        else:
            est = LeastSquares().fit(x[:, None], y)
            a, b, flag = est.intercept_, float(est.coef_[0]), ""
        yhat = a + b * signal[t]
        preds.append(max(np.expm1(yhat) if config.log_scale else yhat, 0.0))
        r = y - a - b * x
        fits.append(FitResult(intercept=a, alpha=np.zeros(0), beta=np.array([b]), lam=0.0,
                              objective=float(r @ r), window=window))
        flags.append(flag)
    return NowcastTrace(
        model=config.kind.label,
        months=panel.months[first : last + 1],
        predicted=np.array(preds),
        observed=panel.cases[first : last + 1].copy(),
        fits=tuple(fits),
        flags=tuple(flags),
    )


def run_naive(panel: MonthlyPanel, eval_window, config: ModelConfig | None = None) -> NowcastTrace:
    """Last month's count as this month's nowcast."""
    first, last = _eval_indices(panel, eval_window)
    if first < 1:
        raise HistoryError(f"naive needs the month before {panel.months[first]}, which precedes the panel")
    return NowcastTrace(
        model=ModelKind.NAIVE.label,
        months=panel.months[first : last + 1],
        predicted=panel.cases[first - 1 : last].copy(),
        observed=panel.cases[first : last + 1].copy(),
    )


def run_model(panel: MonthlyPanel, config: ModelConfig, eval_window) -> NowcastTrace:
    kind = config.kind
    if kind is ModelKind.ARGO:
        return run_argo(panel, config, eval_window)
    if kind is ModelKind.GT:
        return run_gt(panel, config, eval_window)
    if kind is ModelKind.SAR:
        return run_sar(panel, config, eval_window)
    if kind is ModelKind.SAR_GDT:
        return run_sar_gdt(panel, config, eval_window)
    if kind is ModelKind.GDT_RESCALE:
        return run_gdt_rescale(panel, config, eval_window)
    return run_naive(panel, eval_window, config)
