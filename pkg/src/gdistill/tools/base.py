"""Tool registry plumbing: specs, results, errors, parameter validation and
the dual-output :func:`invoke` entry point."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from ..memory import MemoryState, ToolCall

DESCRIPTION_LIMIT = 512

CATEGORIES = ("basic", "centrality", "connectivity", "shortest-path", "clustering-community",
              "flow", "cycle", "topological", "extraction")

PARAM_KINDS = ("node", "node-id", "node-set", "positive-int", "nonneg-int", "real",
               "column", "flag", "seed", "none")

_REQUIRED = object()


class ToolNotFound(KeyError):
    pass


class ParamError(ValueError):
    pass


class ToolExecutionError(RuntimeError):
    """A tool precondition failed; ``description`` is agent-readable."""

    def __init__(self, description: str):
        super().__init__(description)
        self.description = clip(description)


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    default: Any = _REQUIRED

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED

    def to_record(self) -> dict:
        rec = {"name": self.name, "kind": self.kind}
        if not self.required:
            rec["default"] = self.default
        return rec


@dataclass(frozen=True)
class ToolSpec:
    tool_id: str
    category: str
    param_schema: tuple[Param, ...]
    mutates_memory: bool
    summary_template: str
    source_function: str
    produces_column: str | None = None
    note: str = ""

    def to_record(self) -> dict:
        rec = {
            "id": self.tool_id,
            "category": self.category,
            "param_schema": [p.to_record() for p in self.param_schema],
            "mutates_memory": self.mutates_memory,
            "source_function": self.source_function,
        }
        if self.produces_column:
            rec["produces_column"] = self.produces_column
        if self.note:
            rec["note"] = self.note
        return rec


@dataclass(frozen=True)
class ToolResult:
    description: str
    memory_after: MemoryState
    raw_payload: Any


@dataclass
class Output:
    """What a tool implementation hands back to :func:`invoke`."""

    description: str
    payload: Any = None
    column: tuple[str, np.ndarray] | None = None
    memory: MemoryState | None = None


_REGISTRY: dict[str, tuple[ToolSpec, Callable[..., Output]]] = {}
ALIASES: dict[str, str] = {"find_cycle": "simple_cycles", "shortest_path": "dijkstra_path"}


def tool(tool_id: str, category: str, params=(), *, source: str, summary: str,
         column: str | None = None, note: str = ""):
    """Register a tool implementation under ``tool_id``."""
    if category not in CATEGORIES:
        raise ValueError(category)
    schema = tuple(p if isinstance(p, Param) else Param(*p) for p in params)
    for p in schema:
        if p.kind not in PARAM_KINDS:
            raise ValueError(p.kind)

    def deco(fn):
        if tool_id in _REGISTRY:
            raise ValueError(f"duplicate tool {tool_id}")
        spec = ToolSpec(tool_id, category, schema, category == "extraction", summary, source,
                        column, note)
        _REGISTRY[tool_id] = (spec, fn)
        return fn

    return deco


def registry() -> list[ToolSpec]:
    return [spec for spec, _ in _REGISTRY.values()]


def get_spec(tool_id: str) -> ToolSpec:
    tid = ALIASES.get(tool_id, tool_id)
    if tid not in _REGISTRY:
        raise ToolNotFound(tool_id)
    return _REGISTRY[tid][0]


def manifest() -> str:
    return json.dumps([s.to_record() for s in registry()], indent=1, sort_keys=True)


def parse_manifest(text: str) -> list[dict]:
    return json.loads(text)


# -- parameter validation ------------------------------------------------------

def _as_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer, float)):
        raise ParamError(f"{name}: expected an integer, got {v!r}")
    if isinstance(v, float) and not v.is_integer():
        raise ParamError(f"{name}: expected an integer, got {v!r}")
    return int(v)


def validate_params(spec: ToolSpec, memory: MemoryState, params: Mapping[str, Any] | None) -> dict:
    params = dict(params or {})
    known = {p.name for p in spec.param_schema}
    extra = set(params) - known
    if extra:
        raise ParamError(f"{spec.tool_id}: unexpected parameter(s) {sorted(extra)}")
    out = {}
    for p in spec.param_schema:
        if p.name not in params:
            if p.required:
                raise ParamError(f"{spec.tool_id}: missing parameter {p.name!r}")
            out[p.name] = p.default
            continue
        v = params[p.name]
        if p.kind == "node":
            v = _as_int(p.name, v)
            if not memory.contains(v):
                raise ParamError(f"{p.name}: node {v} is not in the current subgraph")
        elif p.kind in ("node-id", "seed"):
            v = _as_int(p.name, v)
        elif p.kind == "node-set":
            if isinstance(v, (str, bytes)) or not hasattr(v, "__iter__"):
                raise ParamError(f"{p.name}: expected a collection of node ids")
            v = sorted({_as_int(p.name, x) for x in v})
            missing = [x for x in v if not memory.contains(x)]
            if missing:
                raise ParamError(f"{p.name}: nodes {missing[:5]} not in the current subgraph")
        elif p.kind == "positive-int":
            v = _as_int(p.name, v)
            if v < 1:
                raise ParamError(f"{p.name}: must be >= 1")
        elif p.kind == "nonneg-int":
            v = _as_int(p.name, v)
            if v < 0:
                raise ParamError(f"{p.name}: must be >= 0")
        elif p.kind == "real":
            if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)) \
                    or not math.isfinite(float(v)):
                raise ParamError(f"{p.name}: expected a finite real")
            v = float(v)
        elif p.kind == "column":
            if v is None and not p.required:
                pass
            elif not isinstance(v, str) or not memory.has_column(v):
                raise ParamError(f"{p.name}: no column {v!r} in memory")
        elif p.kind == "flag":
            if not isinstance(v, (bool, np.bool_)):
                raise ParamError(f"{p.name}: expected a boolean")
            v = bool(v)
        out[p.name] = v
    return out


def invoke(tool_id: str, memory: MemoryState, params: Mapping[str, Any] | None = None) -> ToolResult:
    """Run a tool: ``(m, params) -> (d, m')``. Never mutates ``memory``.

    Raises ToolNotFound, ParamError or ToolExecutionError; on any error the
    caller's memory is untouched.
    """
    tid = ALIASES.get(tool_id, tool_id)
    if tid not in _REGISTRY:
        raise ToolNotFound(tool_id)
    spec, fn = _REGISTRY[tid]
    bound = validate_params(spec, memory, params)
    try:
        out = fn(memory, **bound)
    except (ToolExecutionError, ParamError):
        raise
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RecursionError) as exc:
        raise ToolExecutionError(f"{tid} failed: {exc}") from exc
    after = out.memory if out.memory is not None else memory
    if out.column is not None:
        after = after.with_column(*out.column)
    desc = clip(out.description)
    after = after.recorded(desc, ToolCall(tid, bound, out.payload))
    return ToolResult(desc, after, out.payload)


# -- description helpers ----------------------------------------------------------

def clip(text: str, limit: int = DESCRIPTION_LIMIT) -> str:
    text = " ".join(str(text).split())
    if len(text) <= limit:
        return text
    return text[: limit - 3].rstrip() + "..."


def fmt_nodes(ids, limit: int = 8) -> str:
    ids = list(ids)
    if not ids:
        return "none"
    head = ", ".join(str(i) for i in ids[:limit])
    if len(ids) > limit:
        head += f", ... (+{len(ids) - limit} more)"
    return head


def fmt_num(x: float) -> str:
    if isinstance(x, (int, np.integer)) or float(x).is_integer():
        return str(int(x)) if abs(float(x)) < 1e15 else f"{float(x):.6g}"
    return f"{float(x):.4g}"


def top_entries(memory: MemoryState, values: np.ndarray, k: int = 3) -> str:
    if len(values) == 0:
        return "none"
    order = np.lexsort((memory.parent_map, -values))[:k]
    return ", ".join(f"{memory.orig(int(i))} ({fmt_num(values[i])})" for i in order)
