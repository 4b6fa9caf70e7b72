"""The 51 registered tools: 45 analysis functions in eight categories plus
six memory-shrinking extraction tools.

Every tool takes and reports original (root-graph) node ids; internally it
works on the compact local ids of the current subgraph.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..graph import Graph, induce
from ..memory import MemoryState
from . import algorithms as alg
from .base import Output, Param, ToolExecutionError, fmt_nodes, fmt_num, tool, top_entries
from .community import louvain, modularity, label_propagation, symmetric_weights
from .flow import FlowNetwork, max_flow

SYM_NOTE = " (directed input treated as undirected)"
ALL_PAIRS_CAP = 2000
CENTRALITY_CAP = 5000
DENSE_CAP = 2000


def _cap(mem: MemoryState, limit: int, what: str) -> None:
    if mem.n > limit:
        raise ToolExecutionError(
            f"{what} refuses subgraphs with more than {limit} nodes (current: {mem.n}); "
            "extract a smaller subgraph first")


def _nonempty(mem: MemoryState, what: str) -> None:
    if mem.n == 0:
        raise ToolExecutionError(f"{what} needs a nonempty subgraph")


def _note(mem: MemoryState) -> str:
    return SYM_NOTE if mem.subgraph.directed else ""


def _ids(mem: MemoryState, local) -> list[int]:
    return [mem.orig(int(i)) for i in local]


def _score_output(mem: MemoryState, name: str, values: np.ndarray, label: str, note: str = "") -> Output:
    values = np.asarray(values, dtype=np.float64)
    desc = f"Computed {label} for {mem.n} nodes; stored as column '{name}'. Top: {top_entries(mem, values)}{note}."
    order = np.lexsort((mem.parent_map, -values))[:10]
    payload = {"column": name, "top": [(mem.orig(int(i)), float(values[i])) for i in order]}
    return Output(desc, payload, (name, values))


def _edge_position(g: Graph, u: int, v: int) -> int:
    if not g.directed and u > v:
        u, v = v, u
    key = g.src * max(g.n, 1) + g.dst
    target = u * max(g.n, 1) + v
    i = int(np.searchsorted(key, target))
    return i if i < len(key) and key[i] == target else -1


def _binary_sym(g: Graph, self_loops: bool = False) -> sp.csr_matrix:
    a = g.sym_adjacency.copy()
    a.data[:] = 1.0
    if not self_loops:
        a.setdiag(0)
        a.eliminate_zeros()
    return a.tocsr()


# == basic =================================================================================

@tool("number_of_nodes", "basic", source="G.number_of_nodes()", summary="Count nodes in the subgraph.")
def number_of_nodes(mem):
    return Output(f"The current subgraph has {mem.n} nodes.", mem.n)


@tool("number_of_edges", "basic", source="G.number_of_edges()", summary="Count edges in the subgraph.")
def number_of_edges(mem):
    return Output(f"The current subgraph has {mem.m} edges.", mem.m)


@tool("has_node", "basic", [("node", "node-id")], source="G.has_node(n)",
      summary="Check whether a node is in the subgraph.")
def has_node(mem, node):
    ok = mem.contains(node)
    return Output(f"Node {node} is {'present' if ok else 'not present'} in the current subgraph.", ok)


@tool("has_edge", "basic", [("u", "node-id"), ("v", "node-id")], source="G.has_edge(u, v)",
      summary="Check whether an edge is in the subgraph.")
def has_edge(mem, u, v):
    ok = mem.contains(u) and mem.contains(v) and \
        _edge_position(mem.subgraph, mem.local(u), mem.local(v)) >= 0
    arrow = "->" if mem.subgraph.directed else "-"
    return Output(f"Edge {u}{arrow}{v} is {'present' if ok else 'not present'}.", ok)


def _degrees(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    out_d = np.bincount(g.src, minlength=g.n).astype(np.float64)
    in_d = np.bincount(g.dst, minlength=g.n).astype(np.float64)
    return out_d, in_d


@tool("degree", "basic", source="G.degree()", summary="Per-node degree.", column="degree")
def degree(mem):
    out_d, in_d = _degrees(mem.subgraph)
    return _score_output(mem, "degree", out_d + in_d, "degree")


@tool("in_degree", "basic", source="G.in_degree()", summary="Per-node in-degree.", column="in_degree")
def in_degree(mem):
    if not mem.subgraph.directed:
        raise ToolExecutionError("in_degree is only defined for directed graphs; use degree")
    return _score_output(mem, "in_degree", _degrees(mem.subgraph)[1], "in-degree")


@tool("out_degree", "basic", source="G.out_degree()", summary="Per-node out-degree.", column="out_degree")
def out_degree(mem):
    if not mem.subgraph.directed:
        raise ToolExecutionError("out_degree is only defined for directed graphs; use degree")
    return _score_output(mem, "out_degree", _degrees(mem.subgraph)[0], "out-degree")


@tool("get_edge_data", "basic", [("u", "node"), ("v", "node")], source="G.get_edge_data(u, v)",
      summary="Attributes of one edge.")
def get_edge_data(mem, u, v):
    g = mem.subgraph
    pos = _edge_position(g, mem.local(u), mem.local(v))
    if pos < 0:
        return Output(f"There is no edge between {u} and {v}.", None)
    w = float(g.weight[pos])
    return Output(f"Edge ({u}, {v}) has weight {fmt_num(w)}.", {"weight": w})


# == centrality ============================================================================

@tool("betweenness_centrality", "centrality", [Param("normalized", "flag", True)],
      source="nx.betweenness_centrality()", summary="Brandes shortest-path betweenness.",
      column="betweenness")
def betweenness_centrality(mem, normalized):
    _nonempty(mem, "betweenness_centrality")
    _cap(mem, CENTRALITY_CAP, "betweenness_centrality")
    g = mem.subgraph
    adj = g.neighbor_lists()
    bc = np.array(alg.brandes(adj))
    n = g.n
    if not g.directed:
        bc /= 2.0
    if normalized and n > 2:
        bc *= (2.0 if not g.directed else 1.0) / ((n - 1) * (n - 2))
    return _score_output(mem, "betweenness", bc, "betweenness centrality")


@tool("closeness_centrality", "centrality", source="nx.closeness_centrality()",
      summary="Closeness over incoming hop distances.", column="closeness")
def closeness_centrality(mem):
    _nonempty(mem, "closeness_centrality")
    _cap(mem, CENTRALITY_CAP, "closeness_centrality")
    return _score_output(mem, "closeness", alg.closeness(mem.subgraph.neighbor_lists(reverse=True)),
                         "closeness centrality")


@tool("degree_centrality", "centrality", source="nx.degree_centrality()",
      summary="Degree divided by n-1.", column="degree_centrality")
def degree_centrality(mem):
    _nonempty(mem, "degree_centrality")
    out_d, in_d = _degrees(mem.subgraph)
    n = mem.n
    vals = np.ones(n) if n == 1 else (out_d + in_d) / (n - 1)
    return _score_output(mem, "degree_centrality", vals, "degree centrality")


@tool("eigenvector_centrality", "centrality", source="nx.eigenvector_centrality()",
      summary="Leading eigenvector of the adjacency matrix.", column="eigenvector")
def eigenvector_centrality(mem):
    _nonempty(mem, "eigenvector_centrality")
    a = mem.subgraph.sym_adjacency.astype(np.float64)
    n = mem.n
    if a.nnz == 0:
        vec = np.full(n, 1.0 / math.sqrt(n))
    elif n <= DENSE_CAP:
        _, vecs = np.linalg.eigh(a.toarray())
        vec = vecs[:, -1]
    else:
        _, vecs = spla.eigsh(a, k=1, which="LA", tol=1e-12, v0=np.ones(n), maxiter=20 * n)
        vec = vecs[:, 0]
    if vec.sum() < 0:
        vec = -vec
    vec = vec / np.linalg.norm(vec)
    return _score_output(mem, "eigenvector", vec, "eigenvector centrality", _note(mem))


@tool("harmonic_centrality", "centrality", source="nx.harmonic_centrality()",
      summary="Sum of inverse incoming hop distances.", column="harmonic")
def harmonic_centrality(mem):
    _nonempty(mem, "harmonic_centrality")
    _cap(mem, CENTRALITY_CAP, "harmonic_centrality")
    return _score_output(mem, "harmonic", alg.harmonic(mem.subgraph.neighbor_lists(reverse=True)),
                         "harmonic centrality")


@tool("percolation_centrality", "centrality", [Param("states", "column", None)],
      source="nx.percolation_centrality()",
      summary="Betweenness weighted by source percolation states (uniform by default).",
      column="percolation")
def percolation_centrality(mem, states):
    _nonempty(mem, "percolation_centrality")
    _cap(mem, CENTRALITY_CAP, "percolation_centrality")
    n = mem.n
    x = np.ones(n) if states is None else np.asarray(mem.column(states), dtype=np.float64)
    if np.any(x < 0):
        raise ToolExecutionError("percolation states must be nonnegative")
    dep = np.array(alg.brandes(mem.subgraph.neighbor_lists(), source_weight=x))
    vals = np.zeros(n)
    if n > 2:
        denom = x.sum() - x
        ok = denom > 0
        vals[ok] = dep[ok] / denom[ok] / (n - 2)
    return _score_output(mem, "percolation", vals, "percolation centrality")


@tool("second_order_centrality", "centrality", source="nx.second_order_centrality()",
      summary="Standard deviation of random-walk return times.", column="second_order")
def second_order_centrality(mem):
    _nonempty(mem, "second_order_centrality")
    _cap(mem, DENSE_CAP, "second_order_centrality")
    g = mem.subgraph
    a = _binary_sym(g).toarray()
    n = g.n
    if len(alg.groups(alg.component_labels(sp.csr_matrix(a), strong=False))) > 1:
        raise ToolExecutionError("second_order_centrality needs a connected subgraph")
    deg = a.sum(axis=1)
    dmax = deg.max() if n else 0.0
    if dmax == 0:
        vals = np.zeros(n)
    else:
        # self-loops make every row sum dmax, so the walk is doubly stochastic
        p = (a + np.diag(dmax - deg)) / dmax
        z = np.linalg.inv(np.eye(n) - p + np.full((n, n), 1.0 / n))
        # mean first-passage times m_ij = n (z_jj - z_ij), return time n
        mfpt = n * (np.diag(z)[None, :] - z)
        np.fill_diagonal(mfpt, float(n))
        col = mfpt.sum(axis=0)
        vals = np.sqrt(np.clip(2.0 * col - n * (n + 1), 0.0, None))
    return _score_output(mem, "second_order", vals, "second-order centrality", _note(mem))


@tool("subgraph_centrality", "centrality", source="nx.subgraph_centrality()",
      summary="Diagonal of exp(A): weighted closed-walk counts.", column="subgraph_centrality")
def subgraph_centrality(mem):
    _nonempty(mem, "subgraph_centrality")
    _cap(mem, DENSE_CAP, "subgraph_centrality")
    a = _binary_sym(mem.subgraph).toarray()
    lam, vecs = np.linalg.eigh(a)
    with np.errstate(over="raise"):
        try:
            vals = (vecs ** 2) @ np.exp(lam)
        except FloatingPointError:
            raise ToolExecutionError("subgraph_centrality overflowed; the subgraph is too dense") from None
    return _score_output(mem, "subgraph_centrality", vals, "subgraph centrality", _note(mem))


# == connectivity ==========================================================================

def _components_output(mem, labels, kind) -> Output:
    comps = alg.groups(labels)
    comps = [_ids(mem, c) for c in comps]
    sizes = sorted((len(c) for c in comps), reverse=True)
    desc = (f"Found {len(comps)} {kind} components; largest sizes: {fmt_nodes(sizes, 5)}.")
    payload = {"count": len(comps), "sizes": sizes}
    if mem.n <= 5000:
        payload["components"] = comps
    return Output(desc, payload)


@tool("strongly_connected_components", "connectivity", source="nx.strongly_connected_components()",
      summary="Strongly connected components.")
def strongly_connected_components(mem):
    g = mem.subgraph
    out = _components_output(mem, alg.component_labels(g.adjacency, strong=g.directed), "strongly connected")
    if not g.directed:
        out.description += " (undirected graph: these are its connected components)"
    return out


@tool("weakly_connected_components", "connectivity", source="nx.weakly_connected_components()",
      summary="Weakly connected components.")
def weakly_connected_components(mem):
    return _components_output(mem, alg.component_labels(mem.subgraph.sym_adjacency, strong=False),
                              "weakly connected")


@tool("articulation_points", "connectivity", source="nx.articulation_points()",
      summary="Cut vertices of the undirected view.")
def articulation_points(mem):
    pts, _ = alg.articulation_points_and_bridges(mem.subgraph.neighbor_lists(undirected=True))
    ids = _ids(mem, pts)
    return Output(f"Found {len(ids)} articulation points: {fmt_nodes(ids)}{_note(mem)}.", ids)


@tool("bridges", "connectivity", source="nx.bridges()", summary="Bridge edges of the undirected view.")
def bridges(mem):
    _, br = alg.articulation_points_and_bridges(mem.subgraph.neighbor_lists(undirected=True))
    edges = [(mem.orig(u), mem.orig(v)) for u, v in br]
    shown = ", ".join(f"({u}, {v})" for u, v in edges[:6]) or "none"
    more = f" and {len(edges) - 6} more" if len(edges) > 6 else ""
    return Output(f"Found {len(edges)} bridges: {shown}{more}{_note(mem)}.", edges)


@tool("k_edge_components", "connectivity", [("k", "positive-int")], source="nx.k_edge_components()",
      summary="Maximal k-edge-connected node sets.")
def k_edge_components(mem, k):
    _cap(mem, 1000, "k_edge_components")
    comps = [_ids(mem, c) for c in alg.k_edge_components(mem.subgraph.neighbor_lists(undirected=True), k)]
    big = [c for c in comps if len(c) > 1]
    desc = (f"Found {len(comps)} {k}-edge-connected components ({len(big)} with more than one node); "
            f"largest: {fmt_nodes(max(comps, key=len) if comps else [])}{_note(mem)}.")
    return Output(desc, comps)


@tool("k_node_components", "connectivity", [("k", "positive-int")], source="nx.k_node_components()",
      summary="Maximal k-vertex-connected node sets.",
      note="standard k-connected-component decomposition: maximal node sets of size > k "
           "whose induced subgraph has vertex connectivity >= k")
def k_node_components(mem, k):
    _cap(mem, 150, "k_node_components")
    comps = [_ids(mem, c) for c in alg.k_node_components(mem.subgraph.neighbor_lists(undirected=True), k)]
    desc = (f"Found {len(comps)} {k}-node-connected components; largest: "
            f"{fmt_nodes(max(comps, key=len) if comps else [])}{_note(mem)}.")
    return Output(desc, comps)


@tool("node_connectivity", "connectivity", source="nx.node_connectivity()",
      summary="Minimum number of nodes whose removal disconnects the graph.")
def node_connectivity(mem):
    g = mem.subgraph
    _cap(mem, 60 if g.directed else 300, "node_connectivity")
    adj = g.neighbor_lists()
    if g.n > 0 and len(alg.groups(alg.component_labels(g.adjacency, strong=g.directed))) > 1:
        kappa, cut = 0, []
    else:
        kappa, cut = alg.node_connectivity(adj, g.directed)
    cut_ids = _ids(mem, cut)
    return Output(f"Node connectivity is {kappa}; a minimum separator: {fmt_nodes(cut_ids)}.",
                  {"value": kappa, "separator": cut_ids})


@tool("edge_connectivity", "connectivity", source="nx.edge_connectivity()",
      summary="Minimum number of edges whose removal disconnects the graph.")
def edge_connectivity(mem):
    _cap(mem, ALL_PAIRS_CAP, "edge_connectivity")
    g = mem.subgraph
    lam = alg.edge_connectivity(g.neighbor_lists(), g.directed)
    return Output(f"Edge connectivity is {lam}.", lam)


# == shortest paths ========================================================================

def _hop_matrix(mem) -> np.ndarray:
    adj = mem.subgraph.neighbor_lists()
    return np.array([alg.bfs_distances(adj, s) for s in range(mem.n)], dtype=np.int32).reshape(mem.n, mem.n)


def _hop_summary(hops: np.ndarray) -> str:
    off = hops[~np.eye(len(hops), dtype=bool)] if len(hops) else hops.ravel()
    reach = off[off > 0]
    if len(reach) == 0:
        return "no node pair is connected"
    return (f"{len(reach)} ordered pairs are connected; mean distance {fmt_num(reach.mean())}, "
            f"longest {int(reach.max())} hops")


@tool("all_pairs_shortest_path", "shortest-path", source="nx.all_pairs_shortest_path()",
      summary="Unweighted shortest paths between all pairs.")
def all_pairs_shortest_path(mem):
    _cap(mem, ALL_PAIRS_CAP, "all_pairs_shortest_path")
    hops = _hop_matrix(mem)
    payload = {"hops": hops}
    if mem.n <= 100:
        adj = mem.subgraph.neighbor_lists()
        paths = {}
        for s in range(mem.n):
            pred = [-1] * mem.n
            dist = alg.bfs_distances(adj, s)
            for u in range(mem.n):
                for v in adj[u]:
                    if dist[v] == dist[u] + 1 and dist[u] >= 0 and pred[v] < 0:
                        pred[v] = u
            paths[mem.orig(s)] = {mem.orig(t): _ids(mem, alg.path_to(pred, s, t))
                                  for t in range(mem.n) if dist[t] >= 0}
        payload["paths"] = paths
    return Output(f"Computed all-pairs shortest paths: {_hop_summary(hops)}.", payload)


@tool("all_pairs_shortest_path_length", "shortest-path", source="nx.all_pairs_shortest_path_length()",
      summary="Unweighted hop distances between all pairs.")
def all_pairs_shortest_path_length(mem):
    _cap(mem, ALL_PAIRS_CAP, "all_pairs_shortest_path_length")
    hops = _hop_matrix(mem)
    return Output(f"Computed all-pairs hop distances: {_hop_summary(hops)}.", {"hops": hops})


def _dijkstra(mem, source, target):
    g = mem.subgraph
    if np.any(g.weight < 0):
        raise ToolExecutionError("Dijkstra requires nonnegative edge weights")
    s, t = mem.local(source), mem.local(target)
    dist, pred = alg.dijkstra(g.adjacency, s, t)
    if not math.isfinite(dist[t]):
        raise ToolExecutionError(f"no path from {source} to {target}")
    return _ids(mem, alg.path_to(pred, s, t)), dist[t]


@tool("dijkstra_path", "shortest-path", [("source", "node"), ("target", "node")],
      source="nx.dijkstra_path()", summary="Minimum-weight path.")
def dijkstra_path(mem, source, target):
    path, length = _dijkstra(mem, source, target)
    arrow = " -> ".join(str(v) for v in path[:20]) + (" -> ..." if len(path) > 20 else "")
    return Output(f"The shortest path from {source} to {target} is {arrow} with total weight {fmt_num(length)}.",
                  {"path": path, "length": length})


@tool("dijkstra_path_length", "shortest-path", [("source", "node"), ("target", "node")],
      source="nx.dijkstra_path_length()", summary="Minimum path weight.")
def dijkstra_path_length(mem, source, target):
    path, length = _dijkstra(mem, source, target)
    return Output(f"The shortest path length from {source} to {target} is {fmt_num(length)}.", length)


@tool("floyd_warshall", "shortest-path", source="nx.floyd_warshall()",
      summary="Weighted distances between all pairs.")
def floyd_warshall(mem):
    _cap(mem, ALL_PAIRS_CAP, "floyd_warshall")
    d = alg.floyd_warshall(mem.subgraph.adjacency)
    if mem.n and np.any(np.diag(d) < 0):
        raise ToolExecutionError("the subgraph has a negative cycle")
    off = d[~np.eye(mem.n, dtype=bool)]
    fin = off[np.isfinite(off)]
    desc = (f"Computed weighted all-pairs distances: {len(fin)} connected ordered pairs"
            + (f", largest distance {fmt_num(fin.max())}." if len(fin) else "."))
    return Output(desc, {"distances": d})


# == clustering and communities =============================================================

def _triangles(g: Graph) -> np.ndarray:
    a = _binary_sym(g)
    return np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0


def _local_clustering(g: Graph) -> np.ndarray:
    a = _binary_sym(g)
    deg = np.asarray(a.sum(axis=1)).ravel()
    tri = _triangles(g)
    out = np.zeros(g.n)
    ok = deg > 1
    out[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1))
    return out


@tool("average_clustering", "clustering-community", source="nx.average_clustering()",
      summary="Mean local clustering coefficient.")
def average_clustering(mem):
    _nonempty(mem, "average_clustering")
    val = float(_local_clustering(mem.subgraph).mean())
    return Output(f"Average clustering coefficient is {fmt_num(val)}{_note(mem)}.", val)


@tool("clustering", "clustering-community", source="nx.clustering()",
      summary="Local clustering coefficient.", column="clustering")
def clustering(mem):
    _nonempty(mem, "clustering")
    return _score_output(mem, "clustering", _local_clustering(mem.subgraph), "local clustering", _note(mem))


@tool("transitivity", "clustering-community", source="nx.transitivity()",
      summary="Global fraction of closed triads.")
def transitivity(mem):
    a = _binary_sym(mem.subgraph)
    deg = np.asarray(a.sum(axis=1)).ravel()
    triads = float((deg * (deg - 1)).sum())
    val = 0.0 if triads == 0 else 2.0 * float(_triangles(mem.subgraph).sum()) / triads
    return Output(f"Transitivity is {fmt_num(val)}{_note(mem)}.", val)


@tool("triangles", "clustering-community", source="nx.triangles()",
      summary="Triangles through each node.", column="triangles")
def triangles(mem):
    return _score_output(mem, "triangles", _triangles(mem.subgraph), "triangle counts", _note(mem))


def _community_output(mem, labels, what) -> Output:
    labels = np.asarray(labels, dtype=np.int64)
    q = modularity(symmetric_weights(mem.subgraph.adjacency), labels)
    groups = alg.groups(labels)
    sizes = sorted((len(c) for c in groups), reverse=True)
    desc = (f"{what} found {len(groups)} communities (modularity {fmt_num(q)}); largest sizes: "
            f"{fmt_nodes(sizes, 5)}; stored as column 'community'{_note(mem)}.")
    payload = {"count": len(groups), "modularity": q}
    if mem.n <= 5000:
        payload["communities"] = [_ids(mem, c) for c in groups]
    return Output(desc, payload, ("community", labels.astype(np.float64)))


@tool("label_propagation_communities", "clustering-community", [Param("seed", "seed", 0)],
      source="nx.label_propagation_communities()", summary="Seeded asynchronous label propagation.",
      column="community")
def label_propagation_communities(mem, seed):
    _nonempty(mem, "label_propagation_communities")
    return _community_output(mem, label_propagation(mem.subgraph.adjacency, seed), "Label propagation")


@tool("louvain_communities", "clustering-community", [Param("seed", "seed", 0)],
      source="nx.louvain_communities()", summary="Seeded Louvain modularity optimization.",
      column="community")
def louvain_communities(mem, seed):
    _nonempty(mem, "louvain_communities")
    return _community_output(mem, louvain(mem.subgraph.adjacency, seed), "Louvain")


# == flow ==================================================================================

FLOW_CAP = 20000


def capacity_network(g: Graph) -> FlowNetwork:
    if np.any(g.weight < 0):
        raise ToolExecutionError("capacities (edge weights) must be nonnegative")
    net = FlowNetwork(g.n)
    for u, v, w in g.edges():
        if u == v:
            continue
        if g.directed:
            net.add_arc(u, v, w)
        else:
            net.add_arc(u, v, w, w)
    return net


def _min_cut(mem, source, sink, engine) -> Output:
    if source == sink:
        raise ToolExecutionError("source and sink must differ")
    _cap(mem, FLOW_CAP, "minimum cut")
    g = mem.subgraph
    s, t = mem.local(source), mem.local(sink)
    value, side = max_flow(capacity_network(g), s, t, engine)
    mask = np.zeros(g.n, dtype=bool)
    mask[list(side)] = True
    fwd = mask[g.src] & ~mask[g.dst]
    cut = fwd if g.directed else fwd | (mask[g.dst] & ~mask[g.src])
    cut_edges = [(mem.orig(u), mem.orig(v)) for u, v in zip(g.src[cut].tolist(), g.dst[cut].tolist())]
    src_side = _ids(mem, np.flatnonzero(mask))
    sink_side = _ids(mem, np.flatnonzero(~mask))
    desc = (f"Maximum flow from {source} to {sink} is {fmt_num(value)} ({engine}); the minimum cut has "
            f"{len(cut_edges)} edges, separating {len(src_side)} source-side from {len(sink_side)} sink-side nodes.")
    return Output(desc, {"value": value, "partition": (src_side, sink_side), "cut_edges": cut_edges,
                         "engine": engine})


_FLOW_PARAMS = [("source", "node"), ("sink", "node")]


@tool("boykov_kolmogorov_min_cut", "flow", _FLOW_PARAMS, source="nx.boykov_kolmogorov_min_cut()",
      summary="Max-flow/min-cut value and partition.",
      note="runs the Dinic engine; the flow value and cut contract are identical")
def boykov_kolmogorov_min_cut(mem, source, sink):
    return _min_cut(mem, source, sink, "boykov-kolmogorov")


@tool("dinic_min_cut", "flow", _FLOW_PARAMS, source="nx.dinic_min_cut()",
      summary="Max-flow/min-cut value and partition (Dinic).")
def dinic_min_cut(mem, source, sink):
    return _min_cut(mem, source, sink, "dinic")


@tool("edmonds_karp_min_cut", "flow", _FLOW_PARAMS, source="nx.edmonds_karp_min_cut()",
      summary="Max-flow/min-cut value and partition (Edmonds-Karp).")
def edmonds_karp_min_cut(mem, source, sink):
    return _min_cut(mem, source, sink, "edmonds-karp")


@tool("minimum_cut", "flow", _FLOW_PARAMS, source="nx.minimum_cut()",
      summary="Max-flow/min-cut value and partition (default engine).")
def minimum_cut(mem, source, sink):
    return _min_cut(mem, source, sink, "dinic")


# == cycles ================================================================================

@tool("simple_cycles", "cycle", source="nx.simple_cycles()",
      summary="Enumerate simple cycles (capped); reports whether any cycle exists.")
def simple_cycles(mem):
    g = mem.subgraph
    loops = sorted(set(g.src[g.src == g.dst].tolist()))
    adj = g.neighbor_lists()
    found = alg.has_cycle(adj, g.directed, bool(loops))
    if not found:
        return Output("No cycle exists in the current subgraph.", {"has_cycle": False, "cycles": [],
                                                                  "truncated": False})
    cycles, truncated = alg.simple_cycles(adj, g.directed, loops) if g.n <= 5000 else ([], True)
    cycles = [_ids(mem, c) for c in cycles]
    shown = "; ".join(" -> ".join(map(str, c[:8])) for c in cycles[:3])
    count = f"at least {len(cycles)}" if truncated else str(len(cycles))
    desc = f"Yes, there exists a cycle. Found {count} simple cycles" + (f", e.g. {shown}." if shown else ".")
    return Output(desc, {"has_cycle": True, "cycles": cycles, "truncated": truncated})


@tool("cycle_basis", "cycle", source="nx.cycle_basis()", summary="Fundamental cycles of a spanning forest.")
def cycle_basis(mem):
    basis = [_ids(mem, c) for c in alg.cycle_basis(mem.subgraph.neighbor_lists(undirected=True))]
    shown = "; ".join(" - ".join(map(str, c[:8])) for c in basis[:3])
    desc = f"The cycle basis has {len(basis)} cycles" + (f", e.g. {shown}" if shown else "") + f"{_note(mem)}."
    return Output(desc, basis)


# == topological ===========================================================================

def _need_dag(mem, what):
    g = mem.subgraph
    if not g.directed:
        raise ToolExecutionError(f"{what} is only defined for directed graphs")
    if np.any(g.src == g.dst):
        raise ToolExecutionError(f"{what} failed: the subgraph contains a cycle (self-loop)")


@tool("topological_sort", "topological", source="nx.topological_sort()",
      summary="A topological order of a DAG (smallest ready node first).")
def topological_sort(mem):
    _need_dag(mem, "topological_sort")
    order = alg.topo_order(mem.subgraph.neighbor_lists())
    if order is None:
        raise ToolExecutionError("topological_sort failed: the subgraph contains a cycle")
    ids = _ids(mem, order)
    return Output(f"A topological order of the {len(ids)} nodes: {fmt_nodes(ids, 12)}.", ids)


@tool("is_directed_acyclic_graph", "topological", source="nx.is_directed_acyclic_graph()",
      summary="Whether the subgraph is a DAG.")
def is_directed_acyclic_graph(mem):
    g = mem.subgraph
    ok = g.directed and not np.any(g.src == g.dst) and alg.topo_order(g.neighbor_lists()) is not None
    return Output(f"The current subgraph {'is' if ok else 'is not'} a directed acyclic graph.", ok)


@tool("all_topological_sorts", "topological", [Param("limit", "positive-int", 100)],
      source="nx.all_topological_sorts()", summary="Enumerate topological orders (capped).")
def all_topological_sorts(mem, limit):
    _need_dag(mem, "all_topological_sorts")
    _cap(mem, 5000, "all_topological_sorts")
    adj = mem.subgraph.neighbor_lists()
    if alg.topo_order(adj) is None:
        raise ToolExecutionError("all_topological_sorts failed: the subgraph contains a cycle")
    orders, truncated = alg.all_topo_orders(adj, limit)
    orders = [_ids(mem, o) for o in orders]
    count = f"at least {len(orders)}" if truncated else str(len(orders))
    desc = f"Found {count} topological orders; first: {fmt_nodes(orders[0] if orders else [], 12)}."
    return Output(desc, {"orders": orders, "truncated": truncated})


@tool("topological_generations", "topological", source="nx.topological_generations()",
      summary="Layers of a DAG by longest distance from the sources.")
def topological_generations(mem):
    _need_dag(mem, "topological_generations")
    gens = alg.topo_generations(mem.subgraph.neighbor_lists())
    if gens is None:
        raise ToolExecutionError("topological_generations failed: the subgraph contains a cycle")
    gens = [_ids(mem, layer) for layer in gens]
    desc = f"The DAG has {len(gens)} generations; sizes: {fmt_nodes([len(x) for x in gens], 10)}."
    return Output(desc, gens)


# == extraction ============================================================================

def _restrict(mem: MemoryState, local_keep) -> MemoryState:
    local_keep = np.unique(np.asarray(local_keep, dtype=np.int64))
    if len(local_keep) == mem.n:
        return mem
    sub, keep = induce(mem.subgraph, local_keep)
    return mem.restricted(keep, sub)


def _extract_output(mem, after, what) -> Output:
    desc = (f"{what}: memory now holds {after.n} nodes and {after.m} edges "
            f"(was {mem.n} nodes, {mem.m} edges). Nodes: {fmt_nodes(after.nodes().tolist())}.")
    return Output(desc, {"nodes": after.nodes().tolist() if after.n <= 5000 else None, "n": after.n,
                         "m": after.m}, memory=after)


@tool("induced_subgraph", "extraction", [("nodes", "node-set")], source="G.subgraph(nodes)",
      summary="Keep only the given nodes.")
def induced_subgraph_tool(mem, nodes):
    after = _restrict(mem, [mem.local(v) for v in nodes])
    return _extract_output(mem, after, f"Induced subgraph on {len(nodes)} nodes")


@tool("k_hop_subgraph", "extraction", [("center", "node"), Param("k", "nonneg-int", 1)],
      source="nx.ego_graph(G, center, radius=k, undirected=True)",
      summary="Keep nodes within k hops of a center.",
      note="for directed graphs, hops follow edges in either direction")
def k_hop_subgraph(mem, center, k):
    keep = alg.ball(mem.subgraph.sym_adjacency, [mem.local(center)], k)
    after = _restrict(mem, keep)
    return _extract_output(mem, after, f"Kept the {k}-hop neighbourhood of {center}")


@tool("top_k_by_score", "extraction", [("column", "column"), ("k", "positive-int")],
      source="sorted(scores)[:k] + G.subgraph", summary="Keep the k highest-scoring nodes.")
def top_k_by_score(mem, column, k):
    vals = mem.column(column)
    order = np.lexsort((mem.parent_map, -vals))[:k]
    after = _restrict(mem, order)
    return _extract_output(mem, after, f"Kept the top {min(k, mem.n)} nodes by '{column}'")


@tool("threshold_filter", "extraction", [("column", "column"), ("threshold", "real")],
      source="[v for v in G if score[v] >= t] + G.subgraph", summary="Keep nodes scoring at least a threshold.")
def threshold_filter(mem, column, threshold):
    keep = np.flatnonzero(mem.column(column) >= threshold)
    after = _restrict(mem, keep)
    return _extract_output(mem, after, f"Kept nodes with '{column}' >= {fmt_num(threshold)}")


@tool("largest_component", "extraction", source="max(nx.weakly_connected_components(G), key=len)",
      summary="Keep the largest (weakly) connected component.")
def largest_component(mem):
    if mem.n == 0:
        return _extract_output(mem, mem, "The subgraph is empty")
    labels = alg.component_labels(mem.subgraph.sym_adjacency, strong=False)
    sizes = np.bincount(labels)
    best = int(np.argmax(sizes))  # first maximum: component holding the smallest id
    after = _restrict(mem, np.flatnonzero(labels == best))
    return _extract_output(mem, after, "Kept the largest connected component")


@tool("drop_feature_columns", "extraction", [Param("keep", "column", None)],
      source="G.nodes[v].clear()", summary="Drop feature and score columns (optionally keeping one).")
def drop_feature_columns(mem, keep):
    g = mem.subgraph
    feats = None
    if keep is not None and keep not in dict(mem.score_columns):
        feats = mem.column(keep)[:, None]
    sub = Graph(g.node_count, g.src, g.dst, g.weight, g.directed, feats, g.node_labels)
    cols = tuple((name, vals) for name, vals in mem.score_columns if name == keep)
    after = MemoryState(sub, mem.parent_map, cols, mem.history, mem.results)
    desc = (f"Dropped feature columns; d_f went from {mem.d_f} to {after.d_f}"
            + (f" (kept '{keep}')." if keep else "."))
    return Output(desc, {"kept": keep, "d_f": after.d_f}, memory=after)
