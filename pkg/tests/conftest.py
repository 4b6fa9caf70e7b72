from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from gdistill.graph import Graph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_graph(rng: np.random.Generator, n: int, p: float, directed: bool, weighted: bool = False,
                 int_weights: bool = True) -> Graph:
    edges = []
    for u in range(n):
        for v in range(n):
            if u == v or (not directed and v < u):
                continue
            if rng.random() < p:
                w = float(rng.integers(1, 6)) if int_weights else float(rng.uniform(0.1, 5.0))
                edges.append((u, v, w if weighted else 1.0))
    return Graph.from_edges(n, edges, directed=directed)


@st.composite
def small_graphs(draw, min_n: int = 1, max_n: int = 10, directed=None, weighted=None):
    n = draw(st.integers(min_n, max_n))
    directed = draw(st.booleans()) if directed is None else directed
    weighted = draw(st.booleans()) if weighted is None else weighted
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v and (directed or u < v)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    edges = [(u, v, float(draw(st.integers(1, 5))) if weighted else 1.0) for u, v in chosen]
    return Graph.from_edges(n, edges, directed=directed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[nodeid]
        name = nodeid.split("::test_criterion_")[1]
        number, _, title = name.partition("_")
        terminalreporter.write_line(f"criterion {int(number):2d} {status}  {title.replace('_', ' ')}"
                                    + (f"  ({detail})" if detail else ""))
