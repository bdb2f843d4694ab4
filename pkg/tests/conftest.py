import os

import numpy as np
import pytest

from argo_nowcast.panel import MonthlyPanel, month_range

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def make_panel(cases, queries=None, gdt=None, start="2001-01", region="test"):
    cases = np.asarray(cases, dtype=float)
    if queries is None:
        queries = np.ones((len(cases), 1))
    queries = np.asarray(queries, dtype=float).reshape(len(cases), -1)
    return MonthlyPanel(
        region=region,
        months=month_range(start, month_range(start, start)[0] + (len(cases) - 1)),
        cases=cases,
        queries=queries,
        terms=tuple(f"q{k + 1}" for k in range(queries.shape[1])),
        gdt=gdt,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def seasonal_dir():
    return os.path.join(FIXTURES, "seasonal_seed7")
