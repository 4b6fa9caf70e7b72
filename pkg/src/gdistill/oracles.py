"""Brute-force reference computations.

These are deliberately written from the textbook definitions with plain
Python containers and share no code with the tool library; they provide
task ground truth and the reference side of every equivalence test.
Inputs are ``(n, edges, directed)`` with ``edges`` a list of ``(u, v, w)``.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np
from scipy.optimize import linprog


def _out_lists(n, edges, directed, reverse=False):
    adj = [set() for _ in range(n)]
    for u, v, *_ in edges:
        if u == v:
            continue
        if reverse:
            u, v = v, u
        adj[u].add(v)
        if not directed:
            adj[v].add(u)
    return [sorted(a) for a in adj]


def hop_table(n, edges, directed) -> tuple[list[list[float]], list[list[int]]]:
    """Hop distances and shortest-path counts ``sigma[s][t]`` (BFS per source)."""
    adj = _out_lists(n, edges, directed)
    dist = [[math.inf] * n for _ in range(n)]
    sigma = [[0] * n for _ in range(n)]
    for s in range(n):
        dist[s][s] = 0
        sigma[s][s] = 1
        frontier = [s]
        d = 0
        while frontier:
            d += 1
            nxt = {}
            for u in frontier:
                for v in adj[u]:
                    if dist[s][v] == math.inf or dist[s][v] == d:
                        if dist[s][v] == math.inf:
                            dist[s][v] = d
                            nxt[v] = True
                        sigma[s][v] += sigma[s][u]
            frontier = list(nxt)
    return dist, sigma


def betweenness(n, edges, directed, normalized=True) -> list[float]:
    """Pair-dependency definition: sum over s != v != t of sigma_st(v)/sigma_st."""
    dist, sigma = hop_table(n, edges, directed)
    bc = [0.0] * n
    for s in range(n):
        for t in range(n):
            if s == t or dist[s][t] == math.inf:
                continue
            for v in range(n):
                if v in (s, t):
                    continue
                if dist[s][v] + dist[v][t] == dist[s][t]:
                    bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t]
    return _scale_betweenness(bc, n, directed, normalized)


def _scale_betweenness(bc, n, directed, normalized):
    if normalized:
        scale = 1.0 / ((n - 1) * (n - 2)) if n > 2 else 1.0
    else:
        scale = 1.0 if directed else 0.5
    return [b * scale for b in bc]


def all_shortest_paths(n, edges, directed, s, t) -> list[list[int]]:
    """Every shortest s-t path, by exhaustive depth-first enumeration of
    simple paths (only sensible for tiny graphs)."""
    adj = _out_lists(n, edges, directed)
    best = [math.inf]
    found: list[list[int]] = []

    def walk(path, seen):
        u = path[-1]
        if len(path) - 1 > best[0]:
            return
        if u == t:
            if len(path) - 1 < best[0]:
                best[0] = len(path) - 1
                found.clear()
            found.append(list(path))
            return
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                path.append(v)
                walk(path, seen)
                path.pop()
                seen.discard(v)

    walk([s], {s})
    return found


def betweenness_by_enumeration(n, edges, directed, normalized=True) -> list[float]:
    bc = [0.0] * n
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            paths = all_shortest_paths(n, edges, directed, s, t)
            for p in paths:
                for v in p[1:-1]:
                    bc[v] += 1.0 / len(paths)
    return _scale_betweenness(bc, n, directed, normalized)


def closeness(n, edges, directed) -> list[float]:
    dist, _ = hop_table(n, edges, directed)
    out = []
    for u in range(n):
        ds = [dist[v][u] for v in range(n) if v != u and dist[v][u] < math.inf]
        tot = sum(ds)
        out.append(0.0 if tot == 0 or n <= 1 else (len(ds) / tot) * (len(ds) / (n - 1)))
    return out


def harmonic(n, edges, directed) -> list[float]:
    dist, _ = hop_table(n, edges, directed)
    return [sum(1.0 / dist[v][u] for v in range(n) if v != u and dist[v][u] < math.inf)
            for u in range(n)]


def degree(n, edges) -> list[float]:
    deg = [0.0] * n
    for u, v, *_ in edges:
        deg[u] += 1
        deg[v] += 1
    return deg


def bellman_ford(n, edges, directed, s) -> list[float]:
    dist = [math.inf] * n
    dist[s] = 0.0
    arcs = [(u, v, w) for u, v, w in edges]
    if not directed:
        arcs += [(v, u, w) for u, v, w in edges]
    for _ in range(n - 1):
        changed = False
        for u, v, w in arcs:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    return dist


def shortest_path_nodes(n, edges, directed, s, t) -> set[int]:
    """Nodes lying on at least one minimum-weight s-t path."""
    ds = bellman_ford(n, edges, directed, s)
    rev = [(v, u, w) for u, v, w in edges] if directed else edges
    dt = bellman_ford(n, rev, directed, t)
    if ds[t] == math.inf:
        return set()
    tol = 1e-9 * max(1.0, abs(ds[t]))
    return {v for v in range(n) if abs(ds[v] + dt[v] - ds[t]) <= tol}


def max_flow_by_cuts(n, edges, directed, s, t) -> float:
    """Minimum over all 2^(n-2) s-t cuts of the crossing capacity."""
    others = [v for v in range(n) if v not in (s, t)]
    best = math.inf
    for bits in range(1 << len(others)):
        side = {s} | {others[i] for i in range(len(others)) if bits >> i & 1}
        cap = 0.0
        for u, v, w in edges:
            if u == v:
                continue
            if u in side and v not in side:
                cap += w
            elif not directed and v in side and u not in side:
                cap += w
        best = min(best, cap)
    return best


def max_flow_by_lp(n, edges, directed, s, t) -> float:
    """Max flow as a linear program over arc flows."""
    arcs = [(u, v, w) for u, v, w in edges if u != v]
    if not directed:
        arcs += [(v, u, w) for u, v, w in arcs]
    if not arcs:
        return 0.0
    k = len(arcs)
    c = np.zeros(k)
    for i, (u, v, _) in enumerate(arcs):
        c[i] = -(1.0 if u == s else 0.0) + (1.0 if v == s else 0.0)
    rows = [v for v in range(n) if v not in (s, t)]
    a_eq = np.zeros((len(rows), k))
    for r, v in enumerate(rows):
        for i, (a, b, _) in enumerate(arcs):
            if b == v:
                a_eq[r, i] += 1.0
            if a == v:
                a_eq[r, i] -= 1.0
    res = linprog(c, A_eq=a_eq if rows else None, b_eq=np.zeros(len(rows)) if rows else None,
                  bounds=[(0.0, w) for _, _, w in arcs], method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return float(-res.fun)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


def component_count(n, edges, skip=()) -> int:
    """Weakly connected components, ignoring nodes in ``skip``."""
    uf = _UnionFind(n)
    skip = set(skip)
    for u, v, *_ in edges:
        if u not in skip and v not in skip:
            uf.union(u, v)
    return len({uf.find(v) for v in range(n) if v not in skip})


def articulation_points(n, edges) -> set[int]:
    base = component_count(n, edges)
    return {v for v in range(n) if component_count(n, edges, skip=[v]) > base - (1 if _isolated(v, edges) else 0)}


def _isolated(v, edges) -> bool:
    return not any((a == v or b == v) and a != b for a, b, *_ in edges)


def bridges(n, edges) -> set[tuple[int, int]]:
    base = component_count(n, edges)
    out = set()
    simple = {(min(u, v), max(u, v)) for u, v, *_ in edges if u != v}
    for e in simple:
        rest = [x for x in simple if x != e]
        if component_count(n, rest) > base:
            out.add(e)
    return out


def reachability(n, edges, directed) -> list[list[bool]]:
    """Transitive closure by Warshall's algorithm (paths of length >= 1)."""
    r = [[False] * n for _ in range(n)]
    for u, v, *_ in edges:
        r[u][v] = True
        if not directed:
            r[v][u] = True
    for k in range(n):
        rk = r[k]
        for i in range(n):
            if r[i][k]:
                ri = r[i]
                for j in range(n):
                    if rk[j]:
                        ri[j] = True
    return r


def has_directed_cycle(n, edges) -> bool:
    r = reachability(n, edges, True)
    return any(r[v][v] for v in range(n))


def node_on_cycle(n, edges, directed, v) -> bool:
    if any(a == v and b == v for a, b, *_ in edges):
        return True
    if directed:
        return reachability(n, edges, True)[v][v]
    simple = {(min(a, b), max(a, b)) for a, b, *_ in edges if a != b}
    for e in simple:
        if v in e:
            other = e[0] if e[1] == v else e[1]
            rest = [x for x in simple if x != e]
            uf = _UnionFind(n)
            for a, b in rest:
                uf.union(a, b)
            if uf.find(v) == uf.find(other):
                return True
    return False


def is_topological_order(order, n, edges) -> bool:
    if sorted(order) != list(range(n)):
        return False
    pos = {v: i for i, v in enumerate(order)}
    return all(pos[u] < pos[v] for u, v, *_ in edges)


def k_hop_ball(n, edges, center, k) -> set[int]:
    """Nodes within k hops of ``center``, edges followed in both directions."""
    adj = _out_lists(n, edges, directed=False)
    seen = {center: 0}
    dq = deque([center])
    while dq:
        u = dq.popleft()
        if seen[u] == k:
            continue
        for v in adj[u]:
            if v not in seen:
                seen[v] = seen[u] + 1
                dq.append(v)
    return set(seen)


def top_k(scores, nodes, k) -> set[int]:
    """Highest ``k`` scores among ``nodes``; ties prefer smaller ids."""
    ranked = sorted(nodes, key=lambda v: (-scores[v], v))
    return set(ranked[:k])


def modularity(n, edges, labels) -> float:
    a = np.zeros((n, n))
    for u, v, w in edges:
        if u == v:
            a[u, u] += 2 * w
        else:
            a[u, v] += w
            a[v, u] += w
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    k = a.sum(axis=1)
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += a[i, j] - k[i] * k[j] / two_m
    return q / two_m


def set_partitions(n):
    """Restricted-growth strings of length n (every set partition once)."""
    if n == 0:
        yield ()
        return

    def rec(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for lab in range(top + 2):
            prefix.append(lab)
            yield from rec(prefix, max(top, lab))
            prefix.pop()

    yield from rec([0], 0)


def best_partition(n, edges, tol=1e-9) -> tuple[tuple[int, ...], float, bool]:
    """Exhaustive modularity maximization; returns (labels, Q, unique)."""
    best, best_q, ties = None, -math.inf, 0
    for labels in set_partitions(n):
        q = modularity(n, edges, labels)
        if q > best_q + tol:
            best, best_q, ties = labels, q, 1
        elif abs(q - best_q) <= tol:
            ties += 1
    return best, best_q, ties == 1


def permutations_check(order, n, edges) -> bool:
    """Whether ``order`` is among the orders found by brute force over all
    permutations (for tiny n)."""
    valid = [p for p in itertools.permutations(range(n)) if is_topological_order(list(p), n, edges)]
    return tuple(order) in set(valid)
