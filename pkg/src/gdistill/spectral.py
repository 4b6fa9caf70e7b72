"""Spectral fingerprint: the smallest eigenvalues of the normalized
Laplacian by thick-restart Lanczos with full reorthogonalization and locking.

Because ``L`` is symmetric PSD its singular values are its eigenvalues, so
the smallest eigenvalues are the smallest singular values.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

from .graph import Graph, normalized_laplacian

log = logging.getLogger(__name__)


class Unconverged(RuntimeError):
    def __init__(self, message: str, values: np.ndarray, residuals: np.ndarray):
        super().__init__(message)
        self.values = values
        self.residuals = residuals


@dataclass(frozen=True)
class Fingerprint:
    values: np.ndarray
    M: int
    graph_hash: str
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    matvecs: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"M": self.M, "graph_hash": self.graph_hash, "values": [float(v) for v in self.values],
                "residuals": [float(r) for r in self.residuals], "matvecs": self.matvecs}

    @classmethod
    def from_dict(cls, d: dict) -> "Fingerprint":
        return cls(np.array(d["values"]), int(d["M"]), d["graph_hash"], np.array(d.get("residuals", [])),
                   int(d.get("matvecs", 0)))


def _orthogonalize(w, basis, locked):
    """Classical Gram-Schmidt against ``basis`` and ``locked`` with a second
    pass only when the first one cancelled most of ``w`` (DGKS criterion)."""
    before = np.linalg.norm(w)
    for _ in range(2):
        if len(basis):
            w = w - basis.T @ (basis @ w)
        if len(locked):
            w = w - locked.T @ (locked @ w)
        after = np.linalg.norm(w)
        if after > 0.7071 * before:
            break
        before = after
    return w


def _fresh(rng, n, basis, locked, floor=1e-8):
    """A random unit vector orthogonal to ``basis`` and ``locked`` (None if
    the complement is numerically empty)."""
    for _ in range(5):
        w = _orthogonalize(rng.standard_normal(n), basis, locked)
        nw = np.linalg.norm(w)
        if nw > floor:
            return w / nw
    return None


def smallest_eigenpairs(matvec, n: int, k: int, tol: float = 1e-10, max_iter: int = 20000,
                        seed: int = 0, scale: float = 2.0, basis_size: int | None = None
                        ) -> tuple[np.ndarray, np.ndarray, int]:
    """The ``k`` smallest eigenvalues of a symmetric operator, with residual
    norms ``||A x - theta x||`` and the number of matrix-vector products.

    Thick-restart Lanczos: the basis is extended with full
    reorthogonalization (against itself and the locked vectors); when it is
    full, the wanted Ritz vectors are kept and the search continues from
    their common residual direction. Converged leading Ritz pairs are locked
    and deflated. On breakdown the search continues from a fresh random
    vector, which is how repeated eigenvalues are found. Once ``k`` pairs are
    locked, a search from a random start in the deflated complement checks
    that nothing smaller was missed.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    p_max = basis_size or max(2 * k + 30, 60)
    Qbuf = np.empty((p_max, n))
    Wbuf = np.empty((p_max, n))
    Lbuf = np.empty((k + p_max, n))
    size = 0
    n_locked = 0
    locked_vals: list[float] = []
    locked_res: list[float] = []
    nxt = _fresh(rng, n, Qbuf[:0], Lbuf[:0])
    used = 0
    verifying = False
    while True:
        locked = Lbuf[:n_locked]
        p = min(p_max, n - n_locked)
        exhausted = False
        while size < p:
            if nxt is None:
                exhausted = True
                break
            Qbuf[size] = nxt
            Wbuf[size] = matvec(nxt)
            used += 1
            size += 1
            r = _orthogonalize(Wbuf[size - 1], Qbuf[:size], locked)
            nr = np.linalg.norm(r)
            nxt = r / nr if nr > 1e-12 * scale else _fresh(rng, n, Qbuf[:size], locked)
        if size == 0:
            break
        Q, W = Qbuf[:size], Wbuf[:size]
        H = Q @ W.T
        H = 0.5 * (H + H.T)
        theta, S = eigh(H)
        X = S.T @ Q
        SW = S.T @ W
        resid = np.linalg.norm(SW - theta[:, None] * X, axis=1)
        need = k - len(locked_vals)
        kth = sorted(locked_vals)[k - 1] if verifying else np.inf
        n_lock = 0
        while n_lock < len(theta) and resid[n_lock] <= tol and theta[n_lock] < kth - tol:
            n_lock += 1
            if not verifying and n_lock >= need:
                break
        if n_locked + n_lock > Lbuf.shape[0]:
            Lbuf = np.vstack([Lbuf, np.empty((p_max, n))])
        Lbuf[n_locked:n_locked + n_lock] = X[:n_lock]
        n_locked += n_lock
        locked = Lbuf[:n_locked]
        locked_vals.extend(float(t) for t in theta[:n_lock])
        locked_res.extend(float(r) for r in resid[:n_lock])
        if verifying and n_lock == 0 and (resid[0] <= tol or exhausted):
            break  # the complement holds nothing below the k-th locked value
        if n_locked >= n:
            break
        if used > max_iter:
            rest = max(need - n_lock, 0)
            vals = np.sort(np.concatenate([locked_vals, theta[n_lock:n_lock + rest]]))[:k]
            raise Unconverged(f"Lanczos did not converge within {max_iter} matrix-vector products",
                              vals, np.concatenate([locked_res, resid[n_lock:n_lock + rest]]))
        if len(locked_vals) >= k and not verifying:
            # restart in the deflated complement from a random vector
            verifying = True
            size = 0
            nxt = _fresh(rng, n, Qbuf[:0], locked)
            continue
        # thick restart: keep the next wanted Ritz vectors, extend along their residual
        keep = min(max(k - len(locked_vals), 1) + 10, p // 2, len(theta) - n_lock)
        sel = slice(n_lock, n_lock + keep)
        R = SW[sel] - theta[sel, None] * X[sel]
        Qbuf[:keep] = X[sel]
        Wbuf[:keep] = SW[sel]
        size = keep
        cand = R[int(np.argmax(np.linalg.norm(R, axis=1)))] if keep else rng.standard_normal(n)
        cand = _orthogonalize(cand, Qbuf[:size], locked)
        nc = np.linalg.norm(cand)
        nxt = cand / nc if nc > 1e-12 * scale else _fresh(rng, n, Qbuf[:size], locked)
    order = np.argsort(locked_vals, kind="stable")[:k]
    if len(order) < k:
        raise Unconverged("eigenvalue search ended with too few converged pairs",
                          np.array(locked_vals), np.array(locked_res))
    return np.array(locked_vals)[order], np.array(locked_res)[order], used


def fingerprint(g: Graph, M: int = 16, tol: float = 1e-10, max_iter: int = 20000, seed: int = 0) -> Fingerprint:
    """``z_G = (sigma_0, ..., sigma_M)``: the M+1 smallest eigenvalues of the
    normalized Laplacian (ascending)."""
    if M < 0 or M + 1 > g.node_count:
        raise ValueError(f"fingerprint needs M + 1 <= node_count (M={M}, n={g.node_count})")
    t0 = time.perf_counter()
    lap = normalized_laplacian(g).to_scipy()
    vals, res, used = smallest_eigenpairs(lambda v: lap @ v, g.node_count, M + 1, tol, max_iter, seed)
    vals = np.clip(vals, 0.0, None)
    return Fingerprint(vals, M, g.digest(), res, used, time.perf_counter() - t0)


class FingerprintCache:
    """JSON files keyed by graph hash and M."""

    def __init__(self, directory):
        self.dir = Path(directory)

    def _path(self, graph_hash: str, M: int) -> Path:
        return self.dir / f"fp-{graph_hash[:32]}-M{M}.json"

    def get(self, g: Graph, M: int) -> Fingerprint | None:
        p = self._path(g.digest(), M)
        if p.exists():
            return Fingerprint.from_dict(json.loads(p.read_text()))
        return None

    def compute(self, g: Graph, M: int, **kw) -> Fingerprint:
        fp = self.get(g, M)
        if fp is None:
            fp = fingerprint(g, M, **kw)
            self.dir.mkdir(parents=True, exist_ok=True)
            self._path(fp.graph_hash, M).write_text(json.dumps(fp.to_dict(), sort_keys=True))
        return fp
