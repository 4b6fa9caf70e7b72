"""Sequential graph-exploration MDP: states, actions, transitions via tool
invocation, episodes and the line-delimited trajectory log."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .graph import Graph, GraphValidationError
from .memory import (ContractError, GdlWeights, HeuristicScorer, MemoryState, RewardBreakdown,
                     RewardWeights, gdl, step_reward, terminal_reward)
from .tasks import Query, get_template, is_success
from .tools import ParamError, ToolExecutionError, ToolNotFound, get_spec, invoke


@dataclass(frozen=True)
class EnvConfig:
    n_max: int = 16
    gdl_weights: GdlWeights = GdlWeights()
    reward_weights: RewardWeights = RewardWeights()
    gamma: float = 0.99

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")


@dataclass(frozen=True)
class Action:
    kind: str
    tool_id: str | None = None
    params: dict | None = None

    @classmethod
    def terminate(cls) -> "Action":
        return cls("terminate")

    @classmethod
    def tool(cls, tool_id: str, **params) -> "Action":
        return cls("tool", tool_id, params)

    def to_dict(self) -> dict:
        if self.kind == "terminate":
            return {"kind": "terminate"}
        return {"kind": "tool", "tool_id": self.tool_id, "params": _jsonable(self.params or {})}

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        if d["kind"] == "terminate":
            return cls.terminate()
        return cls("tool", d["tool_id"], dict(d.get("params") or {}))


@dataclass(frozen=True, eq=False)
class EnvState:
    graph: Graph
    query: Query
    memory: MemoryState
    config: EnvConfig
    step_index: int = 0
    action_history: tuple = ()
    done: bool = False
    rel: float = 0.0
    last_category: str | None = None
    success: int | None = None

    @property
    def gdl(self) -> float:
        return gdl(self.memory, self.config.gdl_weights)

    def summary(self) -> dict:
        return {"n": self.memory.n, "m": self.memory.m, "d_f": self.memory.d_f, "gdl": self.gdl,
                "rel": self.rel, "step": self.step_index, "last_category": self.last_category,
                "template": self.query.template_id}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        seq = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in seq]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def reset(g: Graph, q: Query, cfg: EnvConfig = EnvConfig(), scorer=None) -> EnvState:
    """Initial state: memory is the whole graph, no columns, empty history."""
    get_template(q.template_id)
    for key, v in q.bindings.items():
        if key in ("source", "target", "sink", "node", "center") and not (0 <= int(v) < g.n):
            raise GraphValidationError(f"query binding {key}={v} is not a node of the graph")
    for v in q.node_slots:
        if not 0 <= int(v) < g.n:
            raise GraphValidationError(f"query node {v} is not a node of the graph")
    scorer = scorer or HeuristicScorer()
    mem = MemoryState.from_graph(g)
    return EnvState(g, q, mem, cfg, rel=float(scorer(mem, q, "")))


def evaluate_task_success(q: Query, s: EnvState) -> int:
    if not s.done:
        raise ContractError("evaluate_task_success needs a finished episode")
    return is_success(q, s.memory)


def step(s: EnvState, a: Action, w: RewardWeights | None = None, scorer=None
         ) -> tuple[EnvState, RewardBreakdown, bool]:
    if s.done:
        raise ContractError("cannot step a finished episode")
    w = w or s.config.reward_weights
    scorer = scorer or HeuristicScorer()
    g_before = s.gdl
    last_step = s.step_index >= s.config.n_max - 1
    if a.kind == "terminate":
        desc = "TERMINATE"
        mem, rel, ok, category = s.memory, s.rel, True, "terminate"
    else:
        try:
            if a.kind != "tool" or a.tool_id is None:
                raise ParamError(f"malformed action {a!r}")
            res = invoke(a.tool_id, s.memory, a.params or {})
            mem, desc, ok = res.memory_after, res.description, True
            category = get_spec(a.tool_id).category
            rel = float(scorer(mem, s.query, desc))
        except ToolExecutionError as exc:
            mem, desc, ok, rel, category = s.memory, f"Error: {exc.description}", False, s.rel, "failure"
        except (ParamError, ToolNotFound) as exc:
            mem, desc, ok, rel, category = s.memory, f"Error: {exc}", False, s.rel, "failure"
    history = s.action_history + ((a, desc),)
    nxt = replace(s, memory=mem, step_index=s.step_index + 1, action_history=history, rel=rel,
                  last_category=category)
    g_after = nxt.gdl
    if a.kind == "terminate" or last_step:
        nxt = replace(nxt, done=True)
        success = evaluate_task_success(s.query, nxt)
        nxt = replace(nxt, success=success)
        rb = terminal_reward(success, w, gdl_before=g_before, gdl_after=g_after,
                             rel_before=s.rel, rel_after=rel, exec_ok=ok)
        return nxt, rb, True
    return nxt, step_reward(g_before, g_after, s.rel, rel, ok, w), False


@dataclass(frozen=True)
class StepRecord:
    state: dict
    action: Action
    description: str
    reward: RewardBreakdown

    def to_dict(self) -> dict:
        return {"state": _jsonable(self.state), "action": self.action.to_dict(),
                "description": self.description, "reward": self.reward.to_dict()}


@dataclass
class Trajectory:
    records: list
    terminal_eval: int
    gamma: float
    query: Query | None = None
    extras: list = field(default_factory=list)
    final_state: EnvState | None = None

    @property
    def N(self) -> int:
        return len(self.records)

    @property
    def rewards(self) -> list[float]:
        return [r.reward.total for r in self.records]

    @property
    def discounted_return(self) -> float:
        return float(sum(self.gamma ** t * r for t, r in enumerate(self.rewards)))

    @property
    def final_gdl(self) -> float:
        return self.records[-1].reward.gdl_after if self.records else 0.0

    def to_lines(self, meta: dict | None = None) -> list[str]:
        meta = _jsonable(dict(meta or {}))
        lines = []
        for t, rec in enumerate(self.records):
            d = dict(meta)
            d.update(rec.to_dict())
            d["t"] = t
            d["N"] = self.N
            d["terminal_eval"] = self.terminal_eval
            d["template"] = self.query.template_id if self.query else None
            lines.append(json.dumps(d, sort_keys=True))
        return lines

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.to_lines()).encode()).hexdigest()


def _as_policy(policy) -> Callable:
    act = getattr(policy, "act", None) or policy

    def call(state, rng):
        out = act(state, rng)
        return out if isinstance(out, tuple) else (out, None)

    return call


def run_episode(policy, g: Graph, q: Query, cfg: EnvConfig = EnvConfig(), seed: int = 0,
                scorer=None, w: RewardWeights | None = None) -> Trajectory:
    """Roll one episode; ``policy`` maps ``(state, rng)`` to an Action (or
    ``(Action, info)``; infos are kept in ``Trajectory.extras``)."""
    act = _as_policy(policy)
    rng = np.random.default_rng(seed)
    scorer = scorer or HeuristicScorer()
    s = reset(g, q, cfg, scorer)
    records, extras = [], []
    done = False
    while not done:
        try:
            a, info = act(s, rng)
            if not isinstance(a, Action):
                raise TypeError
        except (TypeError, ValueError, KeyError):
            a, info = Action("tool", None, None), None
        summary = s.summary()
        s, rb, done = step(s, a, w, scorer)
        records.append(StepRecord(summary, a, s.action_history[-1][1], rb))
        extras.append(info)
    return Trajectory(records, int(s.success), cfg.gamma, q, extras, s)


class TrajectoryLog:
    """Append-only JSONL sink; safe for concurrent writers in one process."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()

    def write(self, traj: Trajectory, meta: dict | None = None) -> None:
        text = "".join(line + "\n" for line in traj.to_lines(meta))
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(text)


def replay_totals(lines, w: RewardWeights = RewardWeights()) -> list[tuple[float, float]]:
    """(logged total, recomputed total) for each parsed log line."""
    out = []
    for line in lines:
        rb = RewardBreakdown.from_dict(json.loads(line)["reward"])
        out.append((rb.total, rb.recompute(w)))
    return out


def scripted_policy(actions: list[Action]):
    """Plays ``actions`` in order, then terminates."""

    def act(state, rng):
        i = state.step_index
        return actions[i] if i < len(actions) else Action.terminate()

    return act


def script_for(q: Query) -> list[Action]:
    return [Action("tool", tid, dict(p)) for tid, p in get_template(q.template_id).script(q)]


def random_policy(state, rng) -> Action:
    """Uniform over TERMINATE and every tool bound to query nodes / defaults
    (used by property tests; the learnable policy lives in policy.py)."""
    from .policy import ActionSpace
    space = ActionSpace.default()
    mask = space.mask(state)
    idx = int(rng.choice(np.flatnonzero(mask)))
    return space.resolve(idx, state)
