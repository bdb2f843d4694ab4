"""Seeded synthetic panels standing in for archival case/search data."""

from __future__ import annotations

import json
import os

import numpy as np

from .panel import MonthlyPanel, month_range, to_month, write_panel

REGIMES = ("seasonal", "spiky", "flat")
MIN_MONTHS = 60
QUERY_COMMON_SD = 0.3
SEASONAL_AR = (0.6, 0.3)
QUERY_NOISE = (0.15, 0.4)
QUERY_DRIFT_SD = 0.1
SPIKY_WIDTH = (1.5, 3.0)
SPIKY_ATTENTION = (0.6, 2.0)
SPIKY_QUERY_NOISE = (0.3, 0.6)
SPIKY_SEARCH_LEAD = 2


def _queries(rng, y, K, informative: bool, common_sd: float | None = None, noise_range=None):
    """Search fractions whose log is a noisy, possibly lagged, linear function of ``y``.

    All columns share one noise component (media-driven search interest),
    so averaging across terms cannot recover ``y`` exactly.
    """
    n = len(y)
    yc = y - y.mean()
    common = (QUERY_COMMON_SD if common_sd is None else common_sd) * rng.standard_normal(n)
    if QUERY_DRIFT_SD > 0:
        common = common + np.cumsum(QUERY_DRIFT_SD * rng.standard_normal(n))
    cols, info = [], []
    for k in range(K):
        lag = 0 if k < max(1, (2 * K) // 3) else 1
        slope = rng.uniform(0.6, 1.0) if informative else 0.0
        noise = rng.uniform(*(QUERY_NOISE if noise_range is None else noise_range))
        base = rng.uniform(2.5, 3.5)
        # a delayed term sees the delayed search interest, shared noise included
        interest = yc + common
        shifted = np.concatenate([np.repeat(interest[:1], lag), interest[: n - lag]]) if lag else interest
        x = base + slope * shifted + noise * rng.standard_normal(n)
        cols.append(np.maximum(np.expm1(x), 0.0))
        info.append({"lag": lag, "slope": slope, "noise_sd": noise, "base": base})
    return np.column_stack(cols), info


def _gdt(rng, cases):
    g = cases / cases.max() * np.exp(0.2 * rng.standard_normal(len(cases)))
    return np.clip(g, 0.0, 1.0)


def generate_synthetic(seed: int, months: int, K: int, regime: str = "seasonal",
                       start="2001-01", region: str | None = None):
    """Build a panel of ``months`` months with ``K`` query columns and a gdt column.

    Regimes:

    * ``seasonal``: log-counts are a 12-month sinusoid plus AR(1) noise.
    * ``spiky``: a near-zero baseline with one or two multiplicative outbreaks.
    * ``flat``: a constant plus white noise.

    Returns ``(panel, params)`` where ``params`` records the generator's ground truth.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")
    if months < MIN_MONTHS:
        raise ValueError(f"need at least {MIN_MONTHS} months, got {months}")
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(seed)
    t = np.arange(months)
    qkw: dict = {}
    params: dict = {"seed": seed, "months": months, "K": K, "regime": regime, "start": str(to_month(start))}

    if regime == "seasonal":
        level = rng.uniform(6.0, 8.0)
        amp = rng.uniform(0.8, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        rho, sd = SEASONAL_AR
        u = np.zeros(months)
        eps = rng.standard_normal(months)
        u[0] = sd / np.sqrt(1 - rho**2) * eps[0]
        for i in range(1, months):
            u[i] = rho * u[i - 1] + sd * eps[i]
        y = level + amp * np.sin(2 * np.pi * t / 12 + phase) + u
        params.update(level=level, amplitude=amp, phase=phase, ar_coef=rho, ar_sd=sd)
        informative = True
    elif regime == "spiky":
        level = np.log(5.0)
        y = level + 0.3 * rng.standard_normal(months)
        drive = np.zeros(months)
        n_bursts = int(rng.integers(1, 3))
        centers = np.sort(rng.choice(np.arange(months // 4, months - 3), size=n_bursts, replace=False))
        bursts = []
        for c in centers:
            height = rng.uniform(np.log(300.0), np.log(2000.0))
            width = rng.uniform(*SPIKY_WIDTH)
            attention = rng.uniform(*SPIKY_ATTENTION)
            shape = height * np.exp(-0.5 * ((t - c) / width) ** 2)
            y = y + shape
            seen = attention * height * np.exp(-0.5 * ((t - c + SPIKY_SEARCH_LEAD) / width) ** 2)
            drive = drive + seen - shape
            bursts.append({"center": int(c), "log_height": height, "width": width,
                           "search_attention": attention})
        params.update(level=level, bursts=bursts)
        informative = True
        # low counts make searches noisy, and each outbreak draws its own
        # level of search attention, so one burst miscalibrates the next
        qkw = {"noise_range": SPIKY_QUERY_NOISE}
    else:
        level = rng.uniform(5.0, 7.0)
        sd = 0.2
        y = level + sd * rng.standard_normal(months)
        params.update(level=level, noise_sd=sd)
        informative = False

    cases = np.round(np.expm1(np.maximum(y, 0.0)))
    signal = np.log1p(cases)
    if regime == "spiky":
        signal = np.maximum(signal + drive, 0.0)
    queries, qinfo = _queries(rng, signal, K, informative, **qkw)
    params["queries"] = qinfo
    panel = MonthlyPanel(
        region=region or f"synthetic-{regime}-{seed}",
        months=month_range(start, to_month(start) + (months - 1)),
        cases=cases,
        queries=queries,
        terms=tuple(f"q{k + 1}" for k in range(K)),
        gdt=_gdt(rng, cases),
    )
    return panel, params


def write_synthetic(panel: MonthlyPanel, params: dict, directory) -> dict[str, str]:
    """Write the panel CSVs plus ``truth.json`` with the generator parameters."""
    paths = write_panel(panel, directory)
    paths["truth"] = os.path.join(directory, "truth.json")
    with open(paths["truth"], "w") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def jitter_snapshots(panel: MonthlyPanel, n: int, noise_sd: float, seed: int) -> list[MonthlyPanel]:
    """``n`` re-downloads of the same panel: queries get independent lognormal noise, cases stay fixed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        factor = np.exp(noise_sd * rng.standard_normal(panel.queries.shape))
        out.append(panel.replace(queries=panel.queries * factor))
    return out
