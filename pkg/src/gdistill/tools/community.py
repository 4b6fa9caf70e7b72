"""Community detection: modularity, seeded Louvain and label propagation.

Both detectors work on a symmetric weight matrix ``A`` in which a self-loop
of weight ``w`` is stored as ``A[i, i] = 2w`` so that node strengths are
plain row sums (this is also what aggregation produces).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def symmetric_weights(adj: sp.csr_matrix) -> sp.csr_matrix:
    """Symmetric weight matrix with doubled diagonal."""
    a = adj.tocsr().astype(np.float64)
    a = a.maximum(a.T).tocsr()
    diag = a.diagonal()
    if np.any(diag):
        a = (a + sp.diags(diag)).tocsr()
    a.sum_duplicates()
    return a


def modularity(a: sp.csr_matrix, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    two_m = float(a.sum())
    if two_m == 0:
        return 0.0
    k = np.asarray(a.sum(axis=1)).ravel()
    coo = a.tocoo()
    inside = float(coo.data[labels[coo.row] == labels[coo.col]].sum())
    tot = np.bincount(labels, weights=k)
    return inside / two_m - float(np.sum(tot ** 2)) / two_m ** 2


def relabel_by_first_member(labels) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    seen: dict[int, int] = {}
    for i, lab in enumerate(np.asarray(labels).tolist()):
        out[i] = seen.setdefault(lab, len(seen))
    return out


def _one_level(a: sp.csr_matrix, rng: np.random.Generator, tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    n = a.shape[0]
    two_m = float(a.sum())
    k = np.asarray(a.sum(axis=1)).ravel()
    comm = np.arange(n)
    tot = k.copy()
    indptr, indices, data = a.indptr, a.indices, a.data
    moved_any = False
    order = rng.permutation(n)
    improved = True
    while improved:
        improved = False
        for i in order.tolist():
            ci = comm[i]
            links: dict[int, float] = {}
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    links[comm[j]] = links.get(comm[j], 0.0) + data[p]
            tot[ci] -= k[i]
            best, best_gain = ci, links.get(ci, 0.0) - k[i] * tot[ci] / two_m
            for c in sorted(links):
                gain = links[c] - k[i] * tot[c] / two_m
                if gain > best_gain + tol:
                    best, best_gain = c, gain
            tot[best] += k[i]
            if best != ci:
                comm[i] = best
                improved = True
                moved_any = True
    return relabel_by_first_member(comm), moved_any


def louvain(adj: sp.csr_matrix, seed: int, max_levels: int = 32) -> np.ndarray:
    """Multi-level Louvain; returns per-node community ids.

    If the result has negative modularity (possible only on degenerate
    inputs) the connected-component partition is returned instead, which
    always has nonnegative modularity.
    """
    a = symmetric_weights(adj)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if a.nnz == 0:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    labels = np.arange(n)
    cur = a
    for _ in range(max_levels):
        level, moved = _one_level(cur, rng)
        if not moved:
            break
        labels = level[labels]
        c = int(level.max()) + 1
        proj = sp.csr_matrix((np.ones(len(level)), (np.arange(len(level)), level)), shape=(len(level), c))
        cur = (proj.T @ cur @ proj).tocsr()
    labels = relabel_by_first_member(labels)
    if modularity(a, labels) < 0:
        from scipy.sparse.csgraph import connected_components
        _, comp = connected_components(a, directed=False)
        labels = relabel_by_first_member(comp)
    return labels


def label_propagation(adj: sp.csr_matrix, seed: int, max_rounds: int = 100) -> np.ndarray:
    """Asynchronous label propagation with a seeded visiting order.

    A node keeps its label when it is among the most frequent neighbour
    labels; otherwise it adopts the smallest most-frequent label.
    """
    a = symmetric_weights(adj)
    n = a.shape[0]
    labels = np.arange(n)
    rng = np.random.default_rng(seed)
    indptr, indices, data = a.indptr, a.indices, a.data
    for _ in range(max_rounds):
        changed = False
        for i in rng.permutation(n).tolist():
            counts: dict[int, float] = {}
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    counts[labels[j]] = counts.get(labels[j], 0.0) + data[p]
            if not counts:
                continue
            top = max(counts.values())
            if counts.get(labels[i], -1.0) >= top - 1e-12:
                continue
            labels[i] = min(c for c, w in counts.items() if w >= top - 1e-12)
            changed = True
        if not changed:
            break
    return relabel_by_first_member(labels)
