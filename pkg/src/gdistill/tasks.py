"""Query templates, their ground-truth oracles and answer extractors.

Each template knows how to (1) bind itself to a graph and compute the
answer with :mod:`gdistill.oracles`, (2) read an answer back out of a final
memory state, and (3) produce a short scripted tool chain that solves it.
The generator runs (3) as a self-check before emitting a query.
"""

from __future__ import annotations

import functools

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import oracles
from .graph import Graph
from .memory import MemoryState
from .tools import ParamError, ToolExecutionError, invoke

log = logging.getLogger(__name__)

REAL_TOL = 1e-6


class TaskGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Query:
    text: str
    template_id: str
    bindings: dict
    ground_truth: Any
    target_set: frozenset
    relevant_columns: tuple = ()
    node_slots: tuple = ()

    def to_dict(self) -> dict:
        gt = self.ground_truth
        if isinstance(gt, (set, frozenset)):
            gt = sorted(gt)
        return {"text": self.text, "template_id": self.template_id, "bindings": self.bindings,
                "ground_truth": gt, "target_set": sorted(self.target_set),
                "relevant_columns": list(self.relevant_columns), "node_slots": list(self.node_slots)}


@dataclass(frozen=True)
class Template:
    template_id: str
    category: str
    make: Callable[[Graph, np.random.Generator], Query | None]
    extract: Callable[[Query, MemoryState], Any]
    compare: Callable[[Any, Any], bool]
    script: Callable[[Query], list]
    max_nodes: int = 10**9


def _edges(g: Graph):
    return g.edges()


def _exact(a, b) -> bool:
    return a is not None and a == b


def _close(a, b) -> bool:
    return a is not None and math.isfinite(float(a)) and abs(float(a) - float(b)) <= REAL_TOL


def _latest_payload(m: MemoryState, tool_ids, **params):
    for call in reversed(m.results):
        if call.tool_id in tool_ids and all(call.params.get(k) == v for k, v in params.items()):
            return call.payload
    return None


def _pick(rng, n, count=1, exclude=()):
    pool = [v for v in range(n) if v not in exclude]
    if len(pool) < count:
        return None
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[int(i)] for i in idx]


# -- max-centrality-node ------------------------------------------------------------------

_CENTRALITY = {
    "degree": ("degree", "degree", lambda g: oracles.degree(g.n, _edges(g))),
    "betweenness": ("betweenness_centrality", "betweenness",
                    lambda g: oracles.betweenness(g.n, _edges(g), g.directed)),
    "closeness": ("closeness_centrality", "closeness",
                  lambda g: oracles.closeness(g.n, _edges(g), g.directed)),
    "harmonic": ("harmonic_centrality", "harmonic",
                 lambda g: oracles.harmonic(g.n, _edges(g), g.directed)),
}


def _centrality_template(kind: str) -> Template:
    tool_id, column, oracle = _CENTRALITY[kind]
    tid = f"max-centrality-node/{kind}"

    def make(g, rng):
        if g.n < 3:
            return None
        scores = oracle(g)
        order = sorted(range(g.n), key=lambda v: (-scores[v], v))
        if scores[order[0]] - scores[order[1]] <= 1e-9:
            return None
        best = order[0]
        return Query(f"Which node has the highest {kind} centrality?", tid, {}, best,
                     frozenset({best}), (column,))

    def extract(q, m):
        if not m.has_column(column) or m.n == 0:
            return None
        vals = m.column(column)
        return m.orig(int(np.lexsort((m.parent_map, -vals))[0]))

    return Template(tid, "centrality", make, extract, _exact, lambda q: [(tool_id, {})],
                    max_nodes=400 if kind != "degree" else 10**9)


# -- shortest-path-length -------------------------------------------------------------------

def _sp_query(g, s, t):
    d = oracles.bellman_ford(g.n, _edges(g), g.directed, s)[t]
    if not (math.isfinite(d) and d > 0):
        return None
    on_path = oracles.shortest_path_nodes(g.n, _edges(g), g.directed, s, t)
    return Query(f"What is the weighted shortest path length from node {s} to node {t}?",
                 "shortest-path-length", {"source": s, "target": t}, d, frozenset(on_path), (), (s, t))


def _sp_make(g, rng):
    if np.any(g.weight < 0) or g.n < 2:
        return None
    for _ in range(10):
        s, t = _pick(rng, g.n, 2)
        q = _sp_query(g, s, t)
        if q is not None:
            return q
    return None


def _sp_extract(q, m):
    call = _latest_payload(m, ("dijkstra_path", "dijkstra_path_length"),
                           source=q.bindings["source"], target=q.bindings["target"])
    if call is None:
        return None
    return call["length"] if isinstance(call, dict) else call


# -- max-flow-value -----------------------------------------------------------------------

_FLOW_TOOLS = ("minimum_cut", "dinic_min_cut", "edmonds_karp_min_cut", "boykov_kolmogorov_min_cut")


def _flow_query(g, s, t):
    if g.n <= 14:
        val = oracles.max_flow_by_cuts(g.n, _edges(g), g.directed, s, t)
    else:
        val = oracles.max_flow_by_lp(g.n, _edges(g), g.directed, s, t)
    if val <= 0:
        return None
    return Query(f"What is the maximum flow value from node {s} to node {t}?",
                 "max-flow-value", {"source": s, "sink": t}, val, frozenset({s, t}), (), (s, t))


def _flow_make(g, rng):
    if g.n < 2 or np.any(g.weight < 0):
        return None
    for _ in range(10):
        s, t = _pick(rng, g.n, 2)
        q = _flow_query(g, s, t)
        if q is not None:
            return q
    return None


def _flow_extract(q, m):
    call = _latest_payload(m, _FLOW_TOOLS, source=q.bindings["source"], sink=q.bindings["sink"])
    return None if call is None else call["value"]


# -- cycle-through-node -----------------------------------------------------------------------

def _cycle_query(g, v):
    truth = oracles.node_on_cycle(g.n, _edges(g), g.directed, v)
    return Query(f"Does node {v} lie on a cycle?", "cycle-through-node", {"node": v}, truth,
                 frozenset({v}), (), (v,))


def _cycle_make(g, rng):
    if g.n < 1:
        return None
    (v,) = _pick(rng, g.n, 1)
    return _cycle_query(g, v)


def _cycle_extract(q, m):
    call = _latest_payload(m, ("simple_cycles",))
    if call is None:
        return None
    v = q.bindings["node"]
    if any(v in c for c in call["cycles"]):
        return True
    if not call["has_cycle"] or not call["truncated"]:
        return False
    return None


# -- community-of-node ------------------------------------------------------------------------

def _community_make(g, rng):
    if g.n < 3 or g.n > 9 or g.m == 0:
        return None
    labels, q, unique = oracles.best_partition(g.n, _edges(g))
    if not unique:
        return None
    (v,) = _pick(rng, g.n, 1)
    members = frozenset(u for u in range(g.n) if labels[u] == labels[v])
    return Query(f"Which nodes share a community with node {v}?", "community-of-node", {"node": v},
                 members, members, ("community",), (v,))


def _community_extract(q, m):
    v = q.bindings["node"]
    if not m.has_column("community") or not m.contains(v):
        return None
    col = m.column("community")
    lab = col[m.local(v)]
    return frozenset(m.orig(i) for i in np.flatnonzero(col == lab))


# -- component-count ------------------------------------------------------------------------------

def _cc_make(g, rng):
    count = oracles.component_count(g.n, _edges(g))
    return Query("How many (weakly) connected components does the graph have?", "component-count", {},
                 count, frozenset(range(g.n)), ())


def _cc_extract(q, m):
    call = _latest_payload(m, ("weakly_connected_components",))
    if call is None and not m.subgraph.directed:
        call = _latest_payload(m, ("strongly_connected_components",))
    return None if call is None else call["count"]


# -- k-hop-neighbor-count ------------------------------------------------------------------------------

def _khop_query(g, v, k):
    ball = oracles.k_hop_ball(g.n, _edges(g), v, k)
    return Query(f"How many nodes are within {k} hops of node {v} (excluding it)?", "k-hop-neighbor-count",
                 {"center": v, "k": k}, len(ball) - 1, frozenset(ball), (), (v,))


def _khop_make(g, rng):
    if g.n < 2:
        return None
    (v,) = _pick(rng, g.n, 1)
    return _khop_query(g, v, int(rng.integers(1, 3)))


def _khop_extract(q, m):
    call = _latest_payload(m, ("k_hop_subgraph",), center=q.bindings["center"], k=q.bindings["k"])
    return None if call is None else call["n"] - 1


# -- articulation-point-set ------------------------------------------------------------------------------

def _ap_make(g, rng):
    pts = frozenset(oracles.articulation_points(g.n, _edges(g)))
    if not pts:
        return None
    return Query("Which nodes are articulation points?", "articulation-point-set", {}, pts, pts, ())


def _ap_extract(q, m):
    call = _latest_payload(m, ("articulation_points",))
    return None if call is None else frozenset(call)


# -- neighborhood-top-k (planted two-step family) ----------------------------------------------------------

PLANTED_HOPS = 2
PLANTED_K = 5


def _planted_make(g, rng, hops=PLANTED_HOPS, k=PLANTED_K, template_id="neighborhood-top-k"):
    if g.features is None or g.n <= k:
        return None
    scores = g.features[:, 0]
    for _ in range(20):
        (v,) = _pick(rng, g.n, 1)
        ball = oracles.k_hop_ball(g.n, _edges(g), v, hops)
        if len(ball) <= k:
            continue
        truth = frozenset(oracles.top_k(scores, ball, k))
        if truth == frozenset(oracles.top_k(scores, range(g.n), k)):
            continue  # the one-step shortcut must not work
        text = (f"Within {hops} hops of node {v}, which {k} nodes have the largest x0?" if k > 1 else
                f"Within {hops} hops of node {v}, which node has the largest x0?")
        return Query(text, template_id, {"center": v, "hops": hops, "k": k}, truth, truth, (), (v,))
    return None


def _planted_extract(q, m):
    if m.n == 0:
        return None
    return frozenset(m.nodes().tolist())


TEMPLATES: dict[str, Template] = {}


def _register(t: Template) -> None:
    TEMPLATES[t.template_id] = t


for _kind in _CENTRALITY:
    _register(_centrality_template(_kind))
_register(Template("shortest-path-length", "shortest-path", _sp_make, _sp_extract, _close,
                   lambda q: [("dijkstra_path_length", dict(q.bindings))], max_nodes=2000))
_register(Template("max-flow-value", "flow", _flow_make, _flow_extract, _close,
                   lambda q: [("minimum_cut", dict(q.bindings))], max_nodes=300))
_register(Template("cycle-through-node", "cycle", _cycle_make, _cycle_extract, _exact,
                   lambda q: [("simple_cycles", {})], max_nodes=60))
_register(Template("community-of-node", "clustering-community", _community_make, _community_extract, _exact,
                   lambda q: [("louvain_communities", {"seed": 0})], max_nodes=9))
_register(Template("component-count", "connectivity", _cc_make, _cc_extract, _exact,
                   lambda q: [("weakly_connected_components", {})]))
_register(Template("k-hop-neighbor-count", "extraction", _khop_make, _khop_extract, _exact,
                   lambda q: [("k_hop_subgraph", dict(q.bindings))]))
_register(Template("articulation-point-set", "connectivity", _ap_make, _ap_extract, _exact,
                   lambda q: [("articulation_points", {})], max_nodes=200))


def _planted_script(q):
    return [("k_hop_subgraph", {"center": q.bindings["center"], "k": q.bindings["hops"]}),
            ("top_k_by_score", {"column": "x0", "k": q.bindings["k"]})]


_register(Template("neighborhood-top-k", "extraction", _planted_make, _planted_extract, _exact, _planted_script))
# single-node variant, small enough for the enumerable information diagnostics
_register(Template("neighborhood-argmax", "extraction",
                   functools.partial(_planted_make, k=1, template_id="neighborhood-argmax"),
                   _planted_extract, _exact, _planted_script))

PLANTED = ("neighborhood-top-k", "neighborhood-argmax")
SHIPPED = tuple(t for t in TEMPLATES if t not in PLANTED)
TEMPLATE_IDS = tuple(TEMPLATES)


_BOUND = {
    "shortest-path-length": lambda g, source, target: _sp_query(g, int(source), int(target)),
    "max-flow-value": lambda g, source, sink: _flow_query(g, int(source), int(sink)),
    "cycle-through-node": lambda g, node: _cycle_query(g, int(node)),
    "k-hop-neighbor-count": lambda g, center, k: _khop_query(g, int(center), int(k)),
    "component-count": lambda g: _cc_make(g, None),
    "articulation-point-set": lambda g: _ap_make(g, None),
}


def make_query(g: Graph, template_id: str, **bindings) -> Query:
    """A query with explicit bindings (ground truth from the reference
    implementations). Only templates whose bindings are node choices
    support this."""
    if template_id not in _BOUND:
        raise KeyError(f"template {template_id!r} does not take explicit bindings")
    for key, v in bindings.items():
        if key != "k" and not 0 <= int(v) < g.n:
            raise TaskGenerationError(f"binding {key}={v} is not a node of the graph")
    q = _BOUND[template_id](g, **bindings)
    if q is None:
        raise TaskGenerationError(f"{template_id} has no valid answer for {bindings}")
    return q


def get_template(template_id: str) -> Template:
    if template_id not in TEMPLATES:
        raise KeyError(f"unknown template {template_id!r}")
    return TEMPLATES[template_id]


def answer(q: Query, m: MemoryState) -> Any:
    return get_template(q.template_id).extract(q, m)


def is_success(q: Query, m: MemoryState) -> int:
    t = get_template(q.template_id)
    ans = t.extract(q, m)
    return int(ans is not None and bool(t.compare(ans, q.ground_truth)))


def run_script(g: Graph, q: Query) -> MemoryState:
    m = MemoryState.from_graph(g)
    for tool_id, params in get_template(q.template_id).script(q):
        m = invoke(tool_id, m, params).memory_after
    return m


def self_check(g: Graph, q: Query) -> bool:
    try:
        return bool(is_success(q, run_script(g, q)))
    except (ToolExecutionError, ParamError):
        return False


def generate_tasks(g: Graph, templates, n: int, seed: int, *, check: bool = True,
                   max_attempts: int | None = None) -> list[Query]:
    """Sample ``n`` queries over ``templates`` (ids), oracle ground truth attached.

    Templates that cannot be bound on ``g`` are skipped with a warning; if
    fewer than ``n`` queries result, TaskGenerationError is raised.
    """
    ids = list(templates)
    for t in ids:
        get_template(t)
    rng = np.random.default_rng(seed)
    usable = [t for t in ids if g.n <= get_template(t).max_nodes]
    for t in set(ids) - set(usable):
        log.warning("template %s skipped: graph has %d nodes", t, g.n)
    out: list[Query] = []
    failures: dict[str, int] = {}
    attempts = 0
    limit = max_attempts or 20 * n + 20
    while len(out) < n and usable and attempts < limit:
        attempts += 1
        tid = usable[int(rng.integers(len(usable)))]
        q = get_template(tid).make(g, rng)
        if q is None or (check and not self_check(g, q)):
            failures[tid] = failures.get(tid, 0) + 1
            if failures[tid] >= 10 and len(usable) > 1 and not any(x.template_id == tid for x in out):
                log.warning("template %s unsatisfiable on this graph; skipping", tid)
                usable.remove(tid)
            continue
        out.append(q)
    if len(out) < n:
        raise TaskGenerationError(f"only {len(out)} of {n} tasks could be generated")
    return out


def generate_aux_queries(g: Graph, K: int, seed: int, templates=None) -> list[Query]:
    """K auxiliary queries, cycling through a seeded shuffle of templates so
    that consecutive queries use different templates where possible."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    ids = [t for t in (templates or TEMPLATE_IDS) if g.n <= get_template(t).max_nodes]
    order = [ids[int(i)] for i in rng.permutation(len(ids))]
    out: list[Query] = []
    dead: set[str] = set()
    i = 0
    while len(out) < K and len(dead) < len(order):
        tid = order[i % len(order)]
        i += 1
        if tid in dead:
            continue
        q = None
        for _ in range(5):
            q = get_template(tid).make(g, rng)
            if q is not None and self_check(g, q):
                break
            q = None
        if q is None:
            dead.add(tid)
            continue
        out.append(q)
    if not out:
        raise TaskGenerationError("no auxiliary query could be generated on this graph")
    if len(out) < K:
        log.warning("only %d of %d auxiliary queries generated", len(out), K)
    return out
