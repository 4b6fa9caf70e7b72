"""Immutable sparse graphs, edge-list I/O, synthetic generators and the
normalized Laplacian.

Edges are stored as three parallel numpy arrays in canonical form:
undirected edges are oriented ``(min, max)``, parallel edges are collapsed
by summing weights, and the edge list is sorted lexicographically by
``(src, dst)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphValidationError(ValueError):
    """Invalid graph data (out-of-range ids, bad weights, bad generator params)."""


class EdgeListParseError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable (optionally weighted / featured) sparse graph.

    Use :meth:`from_edges` to build one from arbitrary edge input; the
    constructor canonicalizes whatever it is given.
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    directed: bool = False
    features: np.ndarray | None = None
    node_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        n = int(self.node_count)
        if n < 0:
            raise GraphValidationError("node_count must be >= 0")
        src = np.asarray(self.src, dtype=np.int64).ravel()
        dst = np.asarray(self.dst, dtype=np.int64).ravel()
        w = np.asarray(self.weight, dtype=np.float64).ravel()
        if not (len(src) == len(dst) == len(w)):
            raise GraphValidationError("src, dst and weight must have equal length")
        if len(src):
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise GraphValidationError("edge endpoint out of range")
            if not np.all(np.isfinite(w)):
                raise GraphValidationError("edge weights must be finite")
        src, dst, w = _canonical_edges(n, src, dst, w, self.directed)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "src", _readonly(src))
        object.__setattr__(self, "dst", _readonly(dst))
        object.__setattr__(self, "weight", _readonly(w))
        object.__setattr__(self, "directed", bool(self.directed))
        if self.features is not None:
            x = np.array(self.features, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.ndim != 2 or x.shape[0] != n:
                raise GraphValidationError(
                    f"features must have {n} rows, got shape {x.shape}")
            object.__setattr__(self, "features", _readonly(x))
        if self.node_labels is not None:
            labels = tuple(str(s) for s in self.node_labels)
            if len(labels) != n:
                raise GraphValidationError("node_labels must have one entry per node")
            object.__setattr__(self, "node_labels", labels)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence], directed: bool = False,
                   features=None, node_labels=None) -> "Graph":
        """Build from ``(u, v)`` or ``(u, v, w)`` tuples."""
        edges = list(edges)
        src = np.array([e[0] for e in edges], dtype=np.int64)
        dst = np.array([e[1] for e in edges], dtype=np.int64)
        w = np.array([float(e[2]) if len(e) > 2 else 1.0 for e in edges], dtype=np.float64)
        return cls(n, src, dst, w, directed, features, node_labels)

    # -- basic accessors ---------------------------------------------------

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def m(self) -> int:
        return len(self.src)

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()))

    def label(self, v: int) -> str:
        return self.node_labels[v] if self.node_labels is not None else str(v)

    # -- sparse views (cached; safe because the graph is immutable) --------

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Weighted adjacency; symmetric for undirected graphs."""
        n = self.node_count
        if self.directed:
            rows, cols, vals = self.src, self.dst, self.weight
        else:
            off = self.src != self.dst
            rows = np.concatenate([self.src, self.dst[off]])
            cols = np.concatenate([self.dst, self.src[off]])
            vals = np.concatenate([self.weight, self.weight[off]])
        a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    @cached_property
    def reverse_adjacency(self) -> sp.csr_matrix:
        if not self.directed:
            return self.adjacency
        a = self.adjacency.T.tocsr()
        a.sort_indices()
        return a

    @cached_property
    def sym_adjacency(self) -> sp.csr_matrix:
        """``max(A, A^T)``: the undirected view of the graph."""
        if not self.directed:
            return self.adjacency
        a = self.adjacency.maximum(self.adjacency.T).tocsr()
        a.sort_indices()
        return a

    def out_neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        a = self.reverse_adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def neighbor_lists(self, undirected: bool = False, reverse: bool = False) -> list[list[int]]:
        """Python adjacency lists (ascending ids); self-loops dropped."""
        a = self.sym_adjacency if undirected else (self.reverse_adjacency if reverse else self.adjacency)
        indptr, indices = a.indptr, a.indices.tolist()
        out = []
        for v in range(self.node_count):
            out.append([u for u in indices[indptr[v]:indptr[v + 1]] if u != v])
        return out

    def digest(self) -> str:
        """Structural hash over nodes, edges, weights, direction and features."""
        h = hashlib.sha256()
        h.update(f"n={self.node_count};d={int(self.directed)};".encode())
        h.update(self.src.tobytes())
        h.update(self.dst.tobytes())
        h.update(self.weight.tobytes())
        if self.features is not None:
            h.update(np.ascontiguousarray(self.features).tobytes())
        return h.hexdigest()

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.node_count}, m={self.m}, {kind}, d_f={self.feature_dim})"


def _canonical_edges(n, src, dst, w, directed):
    if not directed:
        lo = np.minimum(src, dst)
        hi = np.maximum(src, dst)
        src, dst = lo, hi
    if len(src) == 0:
        return src.copy(), dst.copy(), w.copy()
    key = src * max(n, 1) + dst
    order = np.argsort(key, kind="stable")
    key = key[order]
    uniq, start = np.unique(key, return_index=True)
    if len(uniq) == len(key):
        return src[order], dst[order], w[order]
    summed = np.add.reduceat(w[order], start)
    return src[order][start], dst[order][start], summed


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric matrix in coordinate form (both triangles stored)."""

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def entry(self, i: int, j: int) -> float:
        return float(self.to_scipy()[i, j])


def normalized_laplacian(g: Graph) -> SparseSymMatrix:
    """``L = I - D^{-1/2} A D^{-1/2}`` on the symmetrized adjacency.

    Isolated nodes get a diagonal entry of 1 and no off-diagonals.
    """
    a = g.sym_adjacency.tocoo()
    deg = np.asarray(g.sym_adjacency.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    vals = -a.data * inv_sqrt[a.row] * inv_sqrt[a.col]
    diag = np.arange(g.node_count)
    lap = sp.coo_matrix(
        (np.concatenate([np.ones(g.node_count), vals]),
         (np.concatenate([diag, a.row]), np.concatenate([diag, a.col]))),
        shape=(g.node_count, g.node_count)).tocsr()
    lap.sum_duplicates()
    lap.eliminate_zeros()
    coo = lap.tocoo()
    return SparseSymMatrix(g.node_count, _readonly(coo.row.astype(np.int64)),
                           _readonly(coo.col.astype(np.int64)), _readonly(coo.data.copy()))


def induced_subgraph(g: Graph, nodes: Iterable[int]) -> Graph:
    """Subgraph on ``nodes``, re-compacted in ascending parent-id order.

    ``node_labels`` of the result carry the parent's labels (or the parent
    ids as strings when the parent is unlabeled).
    """
    sub, _ = induce(g, nodes)
    return sub


def induce(g: Graph, nodes: Iterable[int]) -> tuple[Graph, np.ndarray]:
    """Like :func:`induced_subgraph` but also returns the kept parent ids."""
    keep = np.unique(np.fromiter((int(v) for v in nodes), dtype=np.int64)) \
        if not isinstance(nodes, np.ndarray) else np.unique(nodes.astype(np.int64))
    if len(keep) and (keep[0] < 0 or keep[-1] >= g.node_count):
        raise GraphValidationError("node id out of range")
    remap = np.full(g.node_count, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    ns, nd = remap[g.src], remap[g.dst]
    ok = (ns >= 0) & (nd >= 0)
    feats = g.features[keep] if g.features is not None else None
    if g.node_labels is not None:
        labels = tuple(g.node_labels[i] for i in keep.tolist())
    else:
        labels = tuple(str(i) for i in keep.tolist())
    sub = Graph(len(keep), ns[ok], nd[ok], g.weight[ok], g.directed, feats, labels)
    return sub, keep


# -- edge-list I/O -----------------------------------------------------------

def load_edge_list(path, directed: bool = False, weighted: bool = False) -> Graph:
    """Read ``src dst [weight]`` lines; ids are arbitrary strings.

    Ids are compacted to ``0..n-1`` in order of first appearance. A line
    holding a single token declares a node (this is how isolated nodes and
    node order survive a save/load round trip). Blank lines and lines
    starting with ``#`` are ignored.
    """
    ids: dict[str, int] = {}
    src, dst, wts = [], [], []

    def node(tok):
        i = ids.get(tok)
        if i is None:
            i = ids[tok] = len(ids)
        return i

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) == 1:
                node(parts[0])
                continue
            if len(parts) > 3:
                raise EdgeListParseError(path, lineno, f"expected 'src dst [weight]', got {s!r}")
            w = 1.0
            if len(parts) == 3:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise EdgeListParseError(path, lineno, f"bad weight {parts[2]!r}") from None
                if not math.isfinite(w):
                    raise EdgeListParseError(path, lineno, "weight must be finite")
                if w < 0:
                    raise GraphValidationError(f"{path}:{lineno}: negative weight {w}")
                if not weighted:
                    w = 1.0
            src.append(node(parts[0]))
            dst.append(node(parts[1]))
            wts.append(w)
    labels = tuple(ids)
    return Graph(len(ids), np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                 np.array(wts, dtype=np.float64), directed, None, labels)


def save_edge_list(g: Graph, path) -> None:
    """Write the canonical form: node declarations, then sorted edges with
    17-significant-digit weights."""
    lines = [f"# nodes={g.node_count} edges={g.m} directed={int(g.directed)}"]
    lines.extend(g.label(v) for v in range(g.node_count))
    for u, v, w in g.edges():
        lines.append(f"{g.label(u)} {g.label(v)} {format(w, '.17g')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- synthetic generators ----------------------------------------------------

FAMILIES = ("erdos-renyi", "barabasi-albert", "stochastic-block", "grid", "complete", "path")


@dataclass(frozen=True)
class GraphGenSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def validate(self) -> None:
        p = self.params
        if self.family not in FAMILIES:
            raise GraphValidationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")

        def count(name, minimum=0):
            v = p.get(name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < minimum:
                raise GraphValidationError(f"{self.family}: {name} must be an integer >= {minimum}")
            return int(v)

        def prob(name):
            v = p.get(name)
            if not isinstance(v, (int, float)) or not 0.0 <= float(v) <= 1.0:
                raise GraphValidationError(f"{self.family}: {name} must be in [0, 1]")

        if self.family == "erdos-renyi":
            count("n")
            prob("p")
        elif self.family == "barabasi-albert":
            n, m = count("n", 1), count("m", 1)
            if m >= n:
                raise GraphValidationError("barabasi-albert: need 1 <= m < n")
        elif self.family == "stochastic-block":
            sizes = p.get("sizes")
            if not sizes or any(not isinstance(s, int) or s < 1 for s in sizes):
                raise GraphValidationError("stochastic-block: sizes must be positive integers")
            prob("p_in")
            prob("p_out")
        elif self.family == "grid":
            count("rows", 1)
            count("cols", 1)
        else:
            count("n")


def generate_synthetic(spec: GraphGenSpec) -> Graph:
    """Deterministic synthetic graph for a fixed ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    p = spec.params
    fam = spec.family
    directed = bool(p.get("directed", False))
    if fam == "erdos-renyi":
        n = int(p["n"])
        if directed:
            idx = _bernoulli_indices(rng, n * (n - 1), float(p["p"]))
            i = idx // max(n - 1, 1)
            j = idx % max(n - 1, 1)
            j = j + (j >= i)
        else:
            idx = _bernoulli_indices(rng, n * (n - 1) // 2, float(p["p"]))
            i, j = _triangular_pair(idx)
        return Graph(n, i, j, np.ones(len(i)), directed)
    if fam == "barabasi-albert":
        return _barabasi_albert(rng, int(p["n"]), int(p["m"]))
    if fam == "stochastic-block":
        sizes = [int(s) for s in p["sizes"]]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        srcs, dsts = [], []
        for a in range(len(sizes)):
            for b in range(a, len(sizes)):
                if a == b:
                    idx = _bernoulli_indices(rng, sizes[a] * (sizes[a] - 1) // 2, float(p["p_in"]))
                    i, j = _triangular_pair(idx)
                else:
                    idx = _bernoulli_indices(rng, sizes[a] * sizes[b], float(p["p_out"]))
                    i, j = idx // sizes[b], idx % sizes[b]
                    j = j + offsets[b] - offsets[a]
                srcs.append(i + offsets[a])
                dsts.append(j + offsets[a])
        s = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
        d = np.concatenate(dsts) if dsts else np.zeros(0, np.int64)
        return Graph(int(offsets[-1]), s, d, np.ones(len(s)), False)
    if fam == "grid":
        r, c = int(p["rows"]), int(p["cols"])
        ids = np.arange(r * c).reshape(r, c)
        s = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
        d = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
        return Graph(r * c, s, d, np.ones(len(s)), False)
    if fam == "complete":
        n = int(p["n"])
        i, j = np.triu_indices(n, k=1)
        return Graph(n, i, j, np.ones(len(i)), directed)
    n = int(p["n"])
    return Graph(n, np.arange(max(n - 1, 0)), np.arange(1, n) if n else np.zeros(0, np.int64),
                 np.ones(max(n - 1, 0)), directed)


def _bernoulli_indices(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Indices in ``[0, total)`` kept independently with probability ``p``
    (geometric skipping, so cost scales with the number kept)."""
    if total <= 0 or p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    batch = max(16, int(total * p * 1.1) + 16)
    while True:
        gaps = rng.geometric(p, size=batch)
        idx = pos + np.cumsum(gaps)
        chunks.append(idx[idx < total])
        if idx[-1] >= total:
            break
        pos = int(idx[-1])
    return np.concatenate(chunks).astype(np.int64)


def _triangular_pair(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map a linear index over pairs ``j < i`` to ``(j, i)``."""
    i = np.floor((np.sqrt(8.0 * idx + 1.0) + 1.0) / 2.0).astype(np.int64)
    # float correction for large indices
    i -= (i * (i - 1) // 2 > idx)
    i += ((i + 1) * i // 2 <= idx)
    j = idx - i * (i - 1) // 2
    return j, i


def _barabasi_albert(rng: np.random.Generator, n: int, m: int) -> Graph:
    # seed graph: star on m+1 nodes
    src = list(range(1, m + 1))
    dst = [0] * m
    repeated = np.empty(2 * m * n, dtype=np.int64)
    size = 0
    for v in range(m + 1):
        k = m if v == 0 else 1
        repeated[size:size + k] = v
        size += k
    uniform = rng.random(4 * m * n)
    u_pos = 0
    for v in range(m + 1, n):
        targets: list[int] = []
        while len(targets) < m:
            if u_pos >= len(uniform):
                uniform = rng.random(4 * m * n)
                u_pos = 0
            t = int(repeated[int(uniform[u_pos] * size)])
            u_pos += 1
            if t not in targets:
                targets.append(t)
        for t in targets:
            src.append(v)
            dst.append(t)
        repeated[size:size + m] = targets
        repeated[size + m:size + 2 * m] = v
        size += 2 * m
    return Graph(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                 np.ones(len(src)), False)
