from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from gdistill.graph import Graph
from gdistill.memory import (ContractError, GdlWeights, HeuristicScorer, MemoryState, RemoteScorer,
                             RewardBreakdown, RewardWeights, ScorerUnavailable, gdl, gdl_from_sizes,
                             relevance_heuristic, relevance_remote, step_reward, terminal_reward)
from gdistill.tasks import Query

ONES = RewardWeights(w1=1.0, w2=1.0, w3=1.0)


def test_gdl_examples():
    assert gdl_from_sizes(4, 10, 3) == 22
    assert gdl_from_sizes(0, 0, 0) == 0
    assert gdl_from_sizes(20, 100, 10, GdlWeights(2.0, 0.5)) == 300


def test_gdl_of_memory_counts_score_columns():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)], features=np.ones((4, 2)))
    m = MemoryState.from_graph(g)
    assert gdl(m) == 3 + 4 * 2
    m2 = m.with_column("s", np.zeros(4))
    assert gdl(m2) == 3 + 4 * 3


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 5), st.integers(1, 5))
def test_gdl_is_monotone_in_each_size(n, m, d, inc):
    base = gdl_from_sizes(n, m, d)
    assert gdl_from_sizes(n + inc, m, d) >= base
    assert gdl_from_sizes(n, m + inc, d) >= base
    assert gdl_from_sizes(n, m, d + inc) >= base


def test_step_reward_examples():
    assert step_reward(10, 10, 0.3, 0.3, True, ONES).total == 1.0
    assert abs(step_reward(100, 50, 0, 0, True).delta_gdl - 0.46211715726000974) < 1e-6
    assert step_reward(100, 50, 0, 0, True).delta_gdl == math.tanh(50 / (100 + 1e-8))
    assert abs(step_reward(50, 100, 0, 0, True).delta_gdl - (-0.7615941559557649)) < 1e-6
    fail = step_reward(10, 10, 0.2, 0.2, False)
    assert fail.succ == 0 and fail.total == 0.0


def test_terminal_reward_examples():
    assert terminal_reward(1).total == 10.0
    assert terminal_reward(0).total == 0.0
    assert terminal_reward(1, RewardWeights(w_solve=0.0)).total == 0.0
    assert terminal_reward(1).terminal


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1), st.floats(0, 1), st.booleans())
def test_reward_breakdown_properties(gb, ga, rb, ra, ok):
    r = step_reward(gb, ga, rb, ra, ok)
    assert -1.0 <= r.delta_gdl <= 1.0
    if gb > 0 and abs(gb - ga) / gb > 1e-6:
        assert (r.delta_gdl > 0) == (ga < gb)
    assert r.total == r.recompute(RewardWeights())
    assert RewardBreakdown.from_dict(json.loads(json.dumps(r.to_dict()))) == r


@given(st.floats(1, 1e4), st.floats(0, 1e4), st.floats(0.01, 100))
def test_delta_gdl_is_scale_consistent(gb, ga, c):
    assume(c * gb >= 1)
    eps = RewardWeights().epsilon
    a = step_reward(gb, ga, 0, 0, True).delta_gdl
    b = step_reward(c * gb, c * ga, 0, 0, True).delta_gdl
    # the epsilon guard perturbs the ratio by at most |x| eps / gdl_before, and
    # sech(x)^2 |x| <= 0.45
    assert abs(a - b) <= 0.45 * eps / min(gb, c * gb) + 1e-15
    if min(gb, c * gb) >= 5:
        assert abs(a - b) <= 1e-9


@pytest.mark.parametrize("kw", [{"w1": -1}, {"beta": 0}, {"epsilon": 0}, {"w_solve": float("nan")}])
def test_reward_weight_validation(kw):
    with pytest.raises(ValueError):
        RewardWeights(**kw)


def _query(target, columns=()):
    return Query("q", "t", {}, None, frozenset(target), tuple(columns), ())


def test_relevance_heuristic_examples():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    m = MemoryState.from_graph(g)
    assert relevance_heuristic(m.with_column("deg", np.ones(5)), _query({1, 2}, ["deg"])) == 1.0
    sub = MemoryState(Graph.from_edges(2, [(0, 1)]), np.array([3, 4]))
    assert relevance_heuristic(sub, _query({1, 2})) == 0.0
    sub = MemoryState(Graph.from_edges(2, [(0, 1)]), np.array([2, 3]))
    assert relevance_heuristic(sub, _query({1, 2})) == 0.5
    with pytest.raises(ContractError):
        relevance_heuristic(m, Query("q", "t", {}, None, None, (), ()))


@given(st.sets(st.integers(0, 9), min_size=1), st.sets(st.integers(0, 9)), st.integers(0, 9))
def test_relevance_is_monotone_toward_target(target, nodes, extra):
    def mem(ids):
        ids = sorted(ids)
        return MemoryState(Graph.from_edges(len(ids), []), np.array(ids, dtype=np.int64))
    q = _query(target)
    before = relevance_heuristic(mem(nodes), q)
    if extra in target:
        assert relevance_heuristic(mem(nodes | {extra}), q) >= before
    assert 0.0 <= before <= 1.0


class _Handler(BaseHTTPRequestHandler):
    reply = b"0.73"
    seen = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).seen.append(json.loads(body))
        self.send_response(200)
        self.end_headers()
        self.wfile.write(type(self).reply)

    def log_message(self, *a):
        pass


@pytest.fixture
def scorer_url():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}/score"
    srv.shutdown()


def test_remote_scorer_protocol(scorer_url):
    _Handler.reply = b"0.73"
    assert relevance_remote(scorer_url, "which node?", ["a"], "d") == 0.73
    assert _Handler.seen[-1] == {"query": "which node?", "history": ["a"], "description": "d"}
    _Handler.reply = b"1.4"
    assert relevance_remote(scorer_url, "q", [], "d") == 1.0
    _Handler.reply = b"abc"
    with pytest.raises(ScorerUnavailable):
        relevance_remote(scorer_url, "q", [], "d")


def test_unreachable_scorer_and_fallback():
    url = "http://127.0.0.1:9/none"
    with pytest.raises(ScorerUnavailable):
        relevance_remote(url, "q", [], "d", timeout=0.5)
    m = MemoryState.from_graph(Graph.from_edges(3, [(0, 1)]))
    s = RemoteScorer(url, 0.5, HeuristicScorer())
    assert s(m, _query({0})) == 1.0
    assert len(s.warnings) == 1
    with pytest.raises(ScorerUnavailable):
        RemoteScorer(url, 0.5)(m, _query({0}))
