"""Memory state, Graph Description Length, relevance scoring and the
distillation reward.

The memory state is the agent's externalized working set: the current
subgraph (with its base features), any per-node score columns appended by
tools, the description history and the raw tool payloads. GDL prices it as
``alpha_s * m' + alpha_f * n' * d_f``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)


class ContractError(RuntimeError):
    """A caller violated an operation's precondition."""


class ScorerUnavailable(RuntimeError):
    """The remote relevance scorer could not produce a score."""


@dataclass(frozen=True)
class ToolCall:
    """Raw payload of one successful tool invocation, kept out of band."""

    tool_id: str
    params: Mapping[str, Any]
    payload: Any


@dataclass(frozen=True, eq=False)
class MemoryState:
    subgraph: Graph
    parent_map: np.ndarray
    score_columns: tuple[tuple[str, np.ndarray], ...] = ()
    history: tuple[str, ...] = ()
    results: tuple[ToolCall, ...] = ()

    def __post_init__(self):
        pm = np.asarray(self.parent_map, dtype=np.int64)
        if len(pm) != self.subgraph.node_count:
            raise ContractError("parent_map must have one entry per subgraph node")
        if len(pm) > 1 and np.any(np.diff(pm) <= 0):
            raise ContractError("parent_map must be strictly increasing")
        pm.setflags(write=False)
        object.__setattr__(self, "parent_map", pm)
        cols = []
        for name, vals in self.score_columns:
            v = np.asarray(vals, dtype=np.float64)
            if v.shape != (self.subgraph.node_count,):
                raise ContractError(f"score column {name!r} has wrong length")
            v.setflags(write=False)
            cols.append((str(name), v))
        object.__setattr__(self, "score_columns", tuple(cols))

    @classmethod
    def from_graph(cls, g: Graph) -> "MemoryState":
        return cls(g, np.arange(g.node_count, dtype=np.int64))

    # -- sizes ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.subgraph.node_count

    @property
    def m(self) -> int:
        return self.subgraph.m

    @property
    def d_f(self) -> int:
        """Base feature columns plus appended score columns."""
        return self.subgraph.feature_dim + len(self.score_columns)

    # -- columns ---------------------------------------------------------------

    @property
    def column_names(self) -> list[str]:
        base = [f"x{i}" for i in range(self.subgraph.feature_dim)]
        return base + [name for name, _ in self.score_columns]

    def has_column(self, name: str) -> bool:
        return name in self.column_names

    def column(self, name: str) -> np.ndarray:
        for cname, vals in self.score_columns:
            if cname == name:
                return vals
        if name.startswith("x") and name[1:].isdigit() and int(name[1:]) < self.subgraph.feature_dim:
            return self.subgraph.features[:, int(name[1:])]
        raise KeyError(name)

    @property
    def last_score_column(self) -> str | None:
        return self.score_columns[-1][0] if self.score_columns else None

    # -- id translation ----------------------------------------------------------

    def nodes(self) -> np.ndarray:
        """Original (root-graph) ids of the current nodes, ascending."""
        return self.parent_map

    def contains(self, orig_id: int) -> bool:
        i = np.searchsorted(self.parent_map, orig_id)
        return bool(i < len(self.parent_map) and self.parent_map[i] == orig_id)

    def local(self, orig_id: int) -> int:
        i = int(np.searchsorted(self.parent_map, orig_id))
        if i >= len(self.parent_map) or self.parent_map[i] != orig_id:
            raise KeyError(orig_id)
        return i

    def orig(self, local_id: int) -> int:
        return int(self.parent_map[local_id])

    # -- functional updates --------------------------------------------------------

    def with_column(self, name: str, values: np.ndarray) -> "MemoryState":
        """Append (or replace, keeping position) a score column."""
        cols = list(self.score_columns)
        for i, (cname, _) in enumerate(cols):
            if cname == name:
                cols[i] = (name, values)
                break
        else:
            cols.append((name, values))
        return MemoryState(self.subgraph, self.parent_map, tuple(cols), self.history, self.results)

    def restricted(self, local_keep: np.ndarray, subgraph: Graph) -> "MemoryState":
        """Memory on a node subset (local ids ``local_keep``, ascending)."""
        cols = tuple((name, vals[local_keep]) for name, vals in self.score_columns)
        return MemoryState(subgraph, self.parent_map[local_keep], cols, self.history, self.results)

    def recorded(self, description: str, call: ToolCall) -> "MemoryState":
        return MemoryState(self.subgraph, self.parent_map, self.score_columns,
                           self.history + (description,), self.results + (call,))

    def latest(self, *tool_ids: str) -> ToolCall | None:
        for call in reversed(self.results):
            if call.tool_id in tool_ids:
                return call
        return None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.subgraph.digest().encode())
        h.update(self.parent_map.tobytes())
        for name, vals in self.score_columns:
            h.update(name.encode())
            h.update(vals.tobytes())
        for d in self.history:
            h.update(d.encode())
        h.update(str(len(self.results)).encode())
        return h.hexdigest()


# -- GDL ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GdlWeights:
    alpha_s: float = 1.0
    alpha_f: float = 1.0

    def __post_init__(self):
        for v in (self.alpha_s, self.alpha_f):
            if not math.isfinite(v) or v < 0:
                raise ValueError("GDL weights must be finite and >= 0")


def gdl(m: MemoryState, w: GdlWeights = GdlWeights()) -> float:
    return gdl_from_sizes(m.n, m.m, m.d_f, w)


def gdl_from_sizes(n: int, m: int, d_f: int, w: GdlWeights = GdlWeights()) -> float:
    return w.alpha_s * m + w.alpha_f * n * d_f


# -- rewards ------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardWeights:
    w1: float = 0.2
    w2: float = 0.4
    w3: float = 0.4
    w_solve: float = 10.0
    beta: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("w1", "w2", "w3", "w_solve"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive")
        if not (0 < self.epsilon <= 1e-6):
            raise ValueError("epsilon must be in (0, 1e-6]")


@dataclass(frozen=True)
class RewardBreakdown:
    succ: int
    delta_gdl: float
    delta_rel: float
    total: float
    gdl_before: float
    gdl_after: float
    rel_before: float
    rel_after: float
    terminal: bool
    task_success: int = 0

    def recompute(self, w: RewardWeights) -> float:
        if self.terminal:
            return w.w_solve * self.task_success
        return w.w1 * self.succ + w.w2 * self.delta_gdl + w.w3 * self.delta_rel

    def to_dict(self) -> dict:
        return {
            "succ": self.succ, "delta_gdl": self.delta_gdl, "delta_rel": self.delta_rel,
            "total": self.total, "gdl_before": self.gdl_before, "gdl_after": self.gdl_after,
            "rel_before": self.rel_before, "rel_after": self.rel_after,
            "terminal": self.terminal, "task_success": self.task_success,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RewardBreakdown":
        return cls(int(d["succ"]), float(d["delta_gdl"]), float(d["delta_rel"]), float(d["total"]),
                   float(d["gdl_before"]), float(d["gdl_after"]), float(d["rel_before"]),
                   float(d["rel_after"]), bool(d["terminal"]), int(d.get("task_success", 0)))


def delta_gdl_term(gdl_before: float, gdl_after: float, w: RewardWeights) -> float:
    return math.tanh(w.beta * (gdl_before - gdl_after) / (gdl_before + w.epsilon))


def step_reward(gdl_before: float, gdl_after: float, rel_before: float, rel_after: float,
                exec_ok: bool, w: RewardWeights = RewardWeights()) -> RewardBreakdown:
    succ = 1 if exec_ok else 0
    dg = delta_gdl_term(gdl_before, gdl_after, w)
    dr = rel_after - rel_before
    total = w.w1 * succ + w.w2 * dg + w.w3 * dr
    return RewardBreakdown(succ, dg, dr, total, gdl_before, gdl_after, rel_before, rel_after, False)


def terminal_reward(task_success: int, w: RewardWeights = RewardWeights(), *,
                    gdl_before: float = 0.0, gdl_after: float | None = None,
                    rel_before: float = 0.0, rel_after: float | None = None,
                    exec_ok: bool = True) -> RewardBreakdown:
    """Final-step reward ``w_solve * task_success``.

    The GDL/relevance fields are informational (they keep trajectory
    telescoping checks exact); they do not enter the total.
    """
    ts = 1 if task_success else 0
    return RewardBreakdown(
        1 if exec_ok else 0, 0.0, 0.0, w.w_solve * ts, gdl_before,
        gdl_before if gdl_after is None else gdl_after, rel_before,
        rel_before if rel_after is None else rel_after, True, ts)


# -- relevance -------------------------------------------------------------------------

def relevance_heuristic(m: MemoryState, q, column_bonus: float = 0.25) -> float:
    """Recall of the query's target node set among the current nodes, plus a
    bonus when a score column relevant to the query exists; clamped to [0, 1].
    """
    target = getattr(q, "target_set", None)
    if target is None:
        raise ContractError("query carries no ground-truth target set; use relevance_remote")
    target = frozenset(int(v) for v in target)
    if target:
        nodes = m.parent_map
        t = np.fromiter(target, dtype=np.int64, count=len(target))
        hit = int(np.isin(t, nodes, assume_unique=True).sum())
        recall = hit / len(target)
    else:
        recall = 0.0
    bonus = 0.0
    relevant = getattr(q, "relevant_columns", ()) or ()
    if any(name for name, _ in m.score_columns if name in relevant):
        bonus = column_bonus
    return min(1.0, max(0.0, recall + bonus))


def relevance_remote(endpoint: str, q, history: Iterable[str], d: str, timeout: float = 2.0) -> float:
    """POST ``{query, history, description}`` to ``endpoint``; the response
    body is a single decimal. Out-of-range scores are clamped."""
    text = q if isinstance(q, str) else getattr(q, "text", str(q))
    body = json.dumps({"query": text, "history": list(history), "description": d}).encode()
    req = urllib.request.Request(endpoint, data=body, method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read().decode("utf-8", errors="replace").strip()
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ScorerUnavailable(f"scorer at {endpoint} unavailable: {exc}") from exc
    try:
        score = float(raw)
    except ValueError:
        raise ScorerUnavailable(f"scorer returned non-numeric body {raw[:40]!r}") from None
    if not math.isfinite(score):
        raise ScorerUnavailable(f"scorer returned non-finite score {raw!r}")
    if score < 0.0 or score > 1.0:
        log.warning("relevance score %s outside [0, 1]; clamping", score)
        score = min(1.0, max(0.0, score))
    return score


@dataclass
class HeuristicScorer:
    """Target-recall relevance; ignores descriptions."""

    column_bonus: float = 0.25

    def __call__(self, memory: MemoryState, query, description: str = "") -> float:
        return relevance_heuristic(memory, query, self.column_bonus)


@dataclass
class RemoteScorer:
    """Relevance from an HTTP scorer, with an optional local fallback."""

    endpoint: str
    timeout: float = 2.0
    fallback: Any = None
    warnings: list = field(default_factory=list)

    def __call__(self, memory: MemoryState, query, description: str = "") -> float:
        try:
            return relevance_remote(self.endpoint, query, memory.history, description, self.timeout)
        except ScorerUnavailable as exc:
            if self.fallback is None:
                raise
            if not self.warnings:
                log.warning("%s; falling back to heuristic relevance", exc)
            self.warnings.append(str(exc))
            return self.fallback(memory, query, description)
