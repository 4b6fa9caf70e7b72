"""Graph algorithms over compact local ids (adjacency lists or CSR).

Everything here is deterministic; ties break by ascending node id.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .flow import FlowNetwork, max_flow


def bfs_distances(adj: list[list[int]], s: int) -> list[int]:
    dist = [-1] * len(adj)
    dist[s] = 0
    dq = deque([s])
    while dq:
        u = dq.popleft()
        du = dist[u] + 1
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = du
                dq.append(v)
    return dist


def ball(csr: sp.csr_matrix, sources, radius: int) -> np.ndarray:
    """Nodes within ``radius`` hops of ``sources`` (vectorized BFS)."""
    n = csr.shape[0]
    seen = np.zeros(n, dtype=bool)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    seen[frontier] = True
    for _ in range(radius):
        if len(frontier) == 0:
            break
        nbrs = csr[frontier].indices
        nbrs = np.unique(nbrs)
        frontier = nbrs[~seen[nbrs]]
        seen[frontier] = True
    return np.flatnonzero(seen)


def brandes(adj: list[list[int]], source_weight=None) -> list[float]:
    """Accumulated pair dependencies over ordered pairs ``(s, t)``.

    With ``source_weight`` each source's dependencies are scaled by its
    weight (used for percolation centrality).
    """
    n = len(adj)
    bc = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        sigma[s] = 1
        dist = [-1] * n
        dist[s] = 0
        dq = deque([s])
        while dq:
            v = dq.popleft()
            stack.append(v)
            dv = dist[v] + 1
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    dq.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        ws = 1.0 if source_weight is None else float(source_weight[s])
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w] * ws
    return bc


def closeness(adj_in: list[list[int]]) -> np.ndarray:
    """Wasserman-Faust closeness over distances *to* each node."""
    n = len(adj_in)
    out = np.zeros(n)
    if n <= 1:
        return out
    for u in range(n):
        dist = bfs_distances(adj_in, u)
        reach = [d for d in dist if d > 0]
        total = sum(reach)
        if total > 0:
            r = len(reach)
            out[u] = (r / total) * (r / (n - 1))
    return out


def harmonic(adj_in: list[list[int]]) -> np.ndarray:
    n = len(adj_in)
    out = np.zeros(n)
    for u in range(n):
        out[u] = sum(1.0 / d for d in bfs_distances(adj_in, u) if d > 0)
    return out


def dijkstra(csr: sp.csr_matrix, s: int, t: int | None = None) -> tuple[list[float], list[int]]:
    n = csr.shape[0]
    inf = float("inf")
    dist = [inf] * n
    pred = [-1] * n
    dist[s] = 0.0
    done = [False] * n
    heap = [(0.0, s)]
    indptr, indices, data = csr.indptr, csr.indices.tolist(), csr.data.tolist()
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == t:
            break
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            nd = d + data[k]
            if nd < dist[v] or (nd == dist[v] and not done[v] and u < pred[v]):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def path_to(pred: list[int], s: int, t: int) -> list[int]:
    path = [t]
    while path[-1] != s:
        path.append(pred[path[-1]])
    return path[::-1]


def floyd_warshall(csr: sp.csr_matrix) -> np.ndarray:
    n = csr.shape[0]
    d = np.full((n, n), np.inf)
    coo = csr.tocoo()
    # parallel entries cannot occur (canonical graphs), keep the min anyway
    np.minimum.at(d, (coo.row, coo.col), coo.data)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :], out=d)
    return d


def component_labels(csr: sp.csr_matrix, strong: bool) -> np.ndarray:
    """Component ids numbered in order of each component's smallest node."""
    if csr.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, labels = connected_components(csr, directed=True, connection="strong" if strong else "weak")
    first = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels.tolist()):
        out[i] = first.setdefault(lab, len(first))
    return out


def groups(labels: np.ndarray) -> list[list[int]]:
    res: dict[int, list[int]] = {}
    for i, lab in enumerate(labels.tolist()):
        res.setdefault(lab, []).append(i)
    return [res[k] for k in sorted(res)]


def articulation_points_and_bridges(adj: list[list[int]]) -> tuple[list[int], list[tuple[int, int]]]:
    """Iterative Tarjan low-link on a simple undirected graph."""
    n = len(adj)
    disc = [-1] * n
    low = [0] * n
    timer = 0
    points = set()
    bridges = []
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        children = 0
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, parent, it = stack[-1]
            advanced = False
            for v in it:
                if v == parent:
                    continue
                if disc[v] < 0:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, u, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if advanced:
                continue
            stack.pop()
            if parent >= 0:
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    bridges.append((min(parent, u), max(parent, u)))
                if parent == root:
                    children += 1
                elif low[u] >= disc[parent]:
                    points.add(parent)
        if children > 1:
            points.add(root)
    return sorted(points), sorted(bridges)


def cycle_basis(adj: list[list[int]]) -> list[list[int]]:
    """Fundamental cycles of a spanning forest (undirected, simple)."""
    n = len(adj)
    parent = [-1] * n
    depth = [-1] * n
    cycles = []
    for root in range(n):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        dq = deque([root])
        order = []
        while dq:
            u = dq.popleft()
            order.append(u)
            for v in adj[u]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    parent[v] = u
                    dq.append(v)
        for u in order:
            for v in adj[u]:
                if u < v and parent[v] != u and parent[u] != v:
                    a, b = u, v
                    left, right = [a], [b]
                    while depth[a] > depth[b]:
                        a = parent[a]
                        left.append(a)
                    while depth[b] > depth[a]:
                        b = parent[b]
                        right.append(b)
                    while a != b:
                        a, b = parent[a], parent[b]
                        left.append(a)
                        right.append(b)
                    cycles.append(left + right[-2::-1])
    return cycles


def simple_cycles(adj: list[list[int]], directed: bool, self_loops: list[int],
                  max_cycles: int = 1000, max_work: int = 200_000) -> tuple[list[list[int]], bool]:
    """Enumerate simple cycles, each rooted at its smallest node.

    Returns ``(cycles, truncated)``. Undirected cycles have length >= 3 and
    are reported once (not once per orientation).
    """
    cycles = [[v] for v in self_loops]
    work = 0
    n = len(adj)
    for s in range(n):
        path = [s]
        on_path = {s}
        stack = [iter(adj[s])]
        while stack:
            work += 1
            if work > max_work or len(cycles) >= max_cycles:
                return cycles[:max_cycles], True
            advanced = False
            for v in stack[-1]:
                if v == s:
                    if directed or (len(path) >= 3 and path[1] < path[-1]):
                        cycles.append(list(path))
                        if len(cycles) >= max_cycles:
                            return cycles, True
                    continue
                if v > s and v not in on_path:
                    path.append(v)
                    on_path.add(v)
                    stack.append(iter(adj[v]))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                on_path.discard(path.pop())
    return cycles, False


def has_cycle(adj: list[list[int]], directed: bool, has_self_loop: bool) -> bool:
    if has_self_loop:
        return True
    if not directed:
        edges = sum(len(a) for a in adj) // 2
        comps = len(groups(component_labels(_adj_to_csr(adj), strong=False)))
        return edges > len(adj) - comps
    return topo_order(adj) is None


def _adj_to_csr(adj: list[list[int]]) -> sp.csr_matrix:
    n = len(adj)
    rows = [u for u in range(n) for _ in adj[u]]
    cols = [v for u in range(n) for v in adj[u]]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def topo_order(adj: list[list[int]]) -> list[int] | None:
    """Kahn's algorithm with a min-heap; None when a cycle exists."""
    n = len(adj)
    indeg = [0] * n
    for u in range(n):
        for v in adj[u]:
            indeg[v] += 1
    heap = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in adj[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    return order if len(order) == n else None


def topo_generations(adj: list[list[int]]) -> list[list[int]] | None:
    n = len(adj)
    indeg = [0] * n
    for u in range(n):
        for v in adj[u]:
            indeg[v] += 1
    layer = [v for v in range(n) if indeg[v] == 0]
    out = []
    seen = 0
    while layer:
        out.append(layer)
        seen += len(layer)
        nxt = []
        for u in layer:
            for v in adj[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    nxt.append(v)
        layer = sorted(nxt)
    return out if seen == n else None


def all_topo_orders(adj: list[list[int]], limit: int) -> tuple[list[list[int]], bool]:
    """Lexicographic enumeration of topological orders, capped at ``limit``."""
    n = len(adj)
    indeg = [0] * n
    for u in range(n):
        for v in adj[u]:
            indeg[v] += 1
    placed = [False] * n
    order: list[int] = []
    found: list[list[int]] = []

    def rec() -> bool:
        if len(found) >= limit:
            return True
        if len(order) == n:
            found.append(list(order))
            return len(found) >= limit
        for v in range(n):
            if not placed[v] and indeg[v] == 0:
                placed[v] = True
                order.append(v)
                for w in adj[v]:
                    indeg[w] -= 1
                stop = rec()
                for w in adj[v]:
                    indeg[w] += 1
                order.pop()
                placed[v] = False
                if stop:
                    return True
        return False

    truncated = rec() and len(found) >= limit
    return found, truncated


# -- connectivity via max flow ---------------------------------------------------------

def edge_flow_network(adj: list[list[int]], directed: bool) -> FlowNetwork:
    """Unit-capacity network; undirected edges become bidirectional pairs."""
    net = FlowNetwork(len(adj))
    for u, nbrs in enumerate(adj):
        for v in nbrs:
            if directed:
                net.add_arc(u, v, 1.0)
            elif u < v:
                net.add_arc(u, v, 1.0, 1.0)
    return net


def local_edge_connectivity(net: FlowNetwork, s: int, t: int) -> tuple[float, set[int]]:
    return max_flow(net, s, t, "dinic")


def edge_connectivity(adj: list[list[int]], directed: bool) -> int:
    n = len(adj)
    if n <= 1:
        return 0
    net = edge_flow_network(adj, directed)
    best = float("inf")
    for t in range(1, n):
        best = min(best, local_edge_connectivity(net, 0, t)[0])
        if directed:
            best = min(best, local_edge_connectivity(net, t, 0)[0])
        if best == 0:
            break
    return int(round(best))


def vertex_split_network(adj: list[list[int]], directed: bool, s: int, t: int) -> FlowNetwork:
    n = len(adj)
    big = float(n + 1)
    net = FlowNetwork(2 * n)
    for v in range(n):
        net.add_arc(2 * v, 2 * v + 1, big if v in (s, t) else 1.0)
    for u, nbrs in enumerate(adj):
        for v in nbrs:
            if directed or u < v:
                net.add_arc(2 * u + 1, 2 * v, big)
                if not directed:
                    net.add_arc(2 * v + 1, 2 * u, big)
    return net


def local_vertex_cut(adj: list[list[int]], directed: bool, s: int, t: int) -> tuple[int, list[int]]:
    """Minimum s-t vertex separator for non-adjacent ``s``, ``t``."""
    net = vertex_split_network(adj, directed, s, t)
    value, side = max_flow(net, 2 * s + 1, 2 * t, "dinic")
    cut = [v for v in range(len(adj)) if 2 * v in side and 2 * v + 1 not in side]
    return int(round(value)), cut


def node_connectivity(adj: list[list[int]], directed: bool) -> tuple[int, list[int]]:
    """Global vertex connectivity and a minimum separator.

    Undirected graphs use Esfahanian-Hakimi (flows from a min-degree node
    and between its non-adjacent neighbours); directed graphs check every
    non-adjacent ordered pair.
    """
    n = len(adj)
    if n <= 1:
        return 0, []
    nbr = [set(a) for a in adj]
    best, best_cut = n - 1, []
    if directed:
        pairs = [(u, v) for u in range(n) for v in range(n) if u != v and v not in nbr[u]]
    else:
        v0 = min(range(n), key=lambda v: (len(nbr[v]), v))
        pairs = [(v0, w) for w in range(n) if w != v0 and w not in nbr[v0]]
        around = sorted(nbr[v0])
        pairs += [(x, y) for i, x in enumerate(around) for y in around[i + 1:] if y not in nbr[x]]
    for s, t in pairs:
        k, cut = local_vertex_cut(adj, directed, s, t)
        if k < best:
            best, best_cut = k, cut
            if best == 0:
                break
    return best, best_cut


def k_edge_components(adj: list[list[int]], k: int) -> list[list[int]]:
    """Gusfield flow-equivalent tree, then drop tree edges lighter than k."""
    n = len(adj)
    if n == 0:
        return []
    net = edge_flow_network(adj, directed=False)
    parent = [0] * n
    weight = [0.0] * n
    for s in range(1, n):
        t = parent[s]
        value, side = local_edge_connectivity(net, s, t)
        weight[s] = value
        for i in range(s + 1, n):
            if i in side and parent[i] == t:
                parent[i] = s
    uf = list(range(n))

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    for s in range(1, n):
        if weight[s] >= k - 1e-9:
            a, b = find(s), find(parent[s])
            if a != b:
                uf[max(a, b)] = min(a, b)
    comps: dict[int, list[int]] = {}
    for v in range(n):
        comps.setdefault(find(v), []).append(v)
    return sorted(comps.values(), key=lambda c: c[0])


def k_node_components(adj: list[list[int]], k: int) -> list[list[int]]:
    """Maximal node sets whose induced subgraph is k-vertex-connected
    (more than k nodes, connectivity >= k), by recursive separation."""
    n = len(adj)
    nbr = [set(a) for a in adj]
    leaves: list[frozenset] = []

    def sub_adj(nodes):
        idx = {v: i for i, v in enumerate(nodes)}
        return [[idx[w] for w in sorted(nbr[v]) if w in idx] for v in nodes]

    work = [tuple(range(n))]
    while work:
        nodes = work.pop()
        if len(nodes) <= k:
            continue
        a = sub_adj(nodes)
        labels = component_labels(_adj_to_csr(a), strong=False) if len(nodes) else np.zeros(0)
        comps = groups(labels)
        if len(comps) > 1:
            work.extend(tuple(nodes[i] for i in c) for c in comps)
            continue
        kappa, cut = node_connectivity(a, directed=False)
        if kappa >= k:
            leaves.append(frozenset(nodes))
            continue
        cut_set = set(cut)
        rest = [i for i in range(len(nodes)) if i not in cut_set]
        rest_adj = [[j for j in a[i] if j not in cut_set] for i in range(len(nodes))]
        sub = [[rest.index(j) for j in rest_adj[i]] for i in rest]
        parts = groups(component_labels(_adj_to_csr(sub), strong=False))
        for part in parts:
            members = sorted({nodes[rest[i]] for i in part} | {nodes[i] for i in cut})
            work.append(tuple(members))
    uniq = sorted(set(leaves), key=lambda s: (-len(s), sorted(s)))
    maximal = [s for i, s in enumerate(uniq) if not any(s < t for t in uniq[:i])]
    return sorted((sorted(s) for s in maximal), key=lambda c: c[0])
