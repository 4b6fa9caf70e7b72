"""Discrete action space, frozen state encoder and the linear-softmax policy
over ``[prompt ; state features]``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .memory import ContractError
from .tasks import TEMPLATE_IDS
from .tools import CATEGORIES, registry

# parameter slot tokens resolved against the current state
Q0, Q1, QSET, TOP, FEAT, LAST = "@q0", "@q1", "@qset", "@top", "@feat", "@last"
K_CHOICES = (1, 5, 10, 20)
HOP_CHOICES = (1, 2, 3)
THRESHOLDS = (0.0, 0.5, 1.0)

_NODE_PAIR_TOOLS = ("has_edge", "get_edge_data", "dijkstra_path", "dijkstra_path_length",
                    "boykov_kolmogorov_min_cut", "dinic_min_cut", "edmonds_karp_min_cut", "minimum_cut")


@dataclass(frozen=True)
class ActionSpace:
    """Ordered (tool_id, slot bindings) entries; index 0 is TERMINATE."""

    entries: tuple

    @classmethod
    def default(cls, tools=None) -> "ActionSpace":
        allowed = None if tools is None else set(tools)
        out = [("TERMINATE", ())]

        def add(tid, **params):
            if allowed is None or tid in allowed:
                out.append((tid, tuple(sorted(params.items()))))

        for spec in registry():
            if all(not p.required for p in spec.param_schema):
                add(spec.tool_id)
        add("has_node", node=Q0)
        for tid in _NODE_PAIR_TOOLS:
            names = [p.name for p in [s for s in registry() if s.tool_id == tid][0].param_schema]
            add(tid, **{names[0]: Q0, names[1]: Q1})
        add("k_edge_components", k=2)
        add("k_node_components", k=2)
        for center in (Q0, Q1, TOP):
            for hops in HOP_CHOICES:
                add("k_hop_subgraph", center=center, k=hops)
        for col in (FEAT, LAST):
            for k in K_CHOICES:
                add("top_k_by_score", column=col, k=k)
        for col in (FEAT, LAST):
            for t in THRESHOLDS:
                add("threshold_filter", column=col, threshold=t)
        add("induced_subgraph", nodes=QSET)
        return cls(tuple(out))

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        out = []
        for tid, params in self.entries:
            out.append(tid if not params else f"{tid}({', '.join(f'{k}={v}' for k, v in params)})")
        return out

    # -- slot resolution ----------------------------------------------------

    @staticmethod
    def _slot(token, state):
        q, mem = state.query, state.memory
        if token == Q0:
            return q.node_slots[0] if len(q.node_slots) >= 1 else None
        if token == Q1:
            return q.node_slots[1] if len(q.node_slots) >= 2 else None
        if token == QSET:
            return list(q.node_slots) if q.node_slots else None
        if token == TOP:
            col = mem.last_score_column
            if col is None or mem.n == 0:
                return None
            vals = mem.column(col)
            return mem.orig(int(np.lexsort((mem.parent_map, -vals))[0]))
        if token == FEAT:
            return "x0" if mem.subgraph.feature_dim > 0 else None
        if token == LAST:
            return mem.last_score_column
        return token

    def bind(self, index: int, state) -> dict | None:
        """Concrete params for entry ``index`` or None if a slot is unresolvable."""
        _, params = self.entries[index]
        out = {}
        for name, token in params:
            v = self._slot(token, state)
            if v is None:
                return None
            if token in (Q0, Q1, TOP) and not state.memory.contains(v) and name != "node":
                return None
            if token == QSET and not all(state.memory.contains(x) for x in v):
                return None
            out[name] = v
        return out

    def mask(self, state) -> np.ndarray:
        m = np.zeros(len(self.entries), dtype=bool)
        m[0] = True
        for i in range(1, len(self.entries)):
            m[i] = self.bind(i, state) is not None
        return m

    def resolve(self, index: int, state):
        from .env import Action
        if index == 0:
            return Action.terminate()
        params = self.bind(index, state)
        if params is None:
            raise ContractError(f"action {index} is not valid in this state")
        return Action("tool", self.entries[index][0], params)


# -- state encoder -------------------------------------------------------------------------

STEP_BUCKETS = 6
LAST_KINDS = CATEGORIES + ("none", "failure", "terminate")


def feature_names() -> list[str]:
    names = ["n_frac", "m_frac", "d_f", "gdl_frac", "rel", "step_frac"]
    names += [f"step={i}" for i in range(STEP_BUCKETS - 1)] + [f"step>={STEP_BUCKETS - 1}"]
    names += [f"last={k}" for k in LAST_KINDS]
    names += [f"template={t}" for t in TEMPLATE_IDS]
    return names + ["bias"]


FEATURE_DIM = len(feature_names())


def state_features(state) -> np.ndarray:
    """Fixed encoder: sizes relative to the root graph, GDL ratio, relevance,
    step position, last tool category and query template."""
    g, mem, cfg = state.graph, state.memory, state.config
    f = np.zeros(FEATURE_DIM)
    gdl0 = g.m * cfg.gdl_weights.alpha_s + g.n * g.feature_dim * cfg.gdl_weights.alpha_f
    f[0] = mem.n / max(g.n, 1)
    f[1] = mem.m / max(g.m, 1)
    f[2] = mem.d_f / 8.0
    f[3] = state.gdl / gdl0 if gdl0 > 0 else 0.0
    f[4] = state.rel
    f[5] = state.step_index / cfg.n_max
    base = 6
    f[base + min(state.step_index, STEP_BUCKETS - 1)] = 1.0
    base += STEP_BUCKETS
    f[base + LAST_KINDS.index(state.last_category or "none")] = 1.0
    base += len(LAST_KINDS)
    f[base + TEMPLATE_IDS.index(state.query.template_id)] = 1.0
    f[-1] = 1.0
    return f


# -- policy ----------------------------------------------------------------------------------

@dataclass
class PolicyParams:
    theta: np.ndarray
    temperature: float = 1.0
    prompt_dim: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not np.all(np.isfinite(self.theta)):
            raise ContractError("theta has non-finite entries")
        if not self.temperature > 0:
            raise ContractError("temperature must be positive")

    @classmethod
    def init(cls, n_actions: int, prompt_dim: int = 0, feature_dim: int = FEATURE_DIM,
             seed: int = 0, prompt_scale: float = 1.0) -> "PolicyParams":
        """Zero weights on state features (uniform start); the prompt rows
        get a fixed random projection so a prompt can move the logits."""
        theta = np.zeros((prompt_dim + feature_dim, n_actions))
        if prompt_dim:
            rng = np.random.default_rng(seed)
            theta[:prompt_dim] = rng.normal(0.0, prompt_scale / np.sqrt(prompt_dim), (prompt_dim, n_actions))
        return cls(theta, 1.0, prompt_dim)

    def with_temperature(self, t: float) -> "PolicyParams":
        return PolicyParams(self.theta, t, self.prompt_dim)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.theta.copy(), self.temperature, self.prompt_dim)


@dataclass
class ValueParams:
    omega: np.ndarray
    bias: float = 0.0

    @classmethod
    def init(cls, feature_dim: int = FEATURE_DIM) -> "ValueParams":
        return cls(np.zeros(feature_dim), 0.0)

    def value(self, features: np.ndarray) -> float:
        return float(features @ self.omega + self.bias)

    def copy(self) -> "ValueParams":
        return ValueParams(self.omega.copy(), self.bias)


def policy_input(p: PolicyParams, features, prompt=None) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if prompt is None:
        prompt = np.zeros(p.prompt_dim)
    prompt = np.asarray(prompt, dtype=np.float64).ravel()
    x = np.concatenate([prompt, features])
    if x.shape[0] != p.theta.shape[0]:
        raise ContractError(f"input dimension {x.shape[0]} does not match theta rows {p.theta.shape[0]}")
    return x


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("mask allows no action")
    z = np.where(mask, logits, -np.inf)
    z = z - z[mask].max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def policy_probs(p: PolicyParams, state_features, prompt, mask) -> np.ndarray:
    """Softmax of ``theta^T [prompt ; features] / temperature`` over valid actions."""
    x = policy_input(p, state_features, prompt)
    return masked_softmax(x @ p.theta / p.temperature, mask)


def grad_log_prob(p: PolicyParams, x: np.ndarray, mask, action: int) -> np.ndarray:
    """``d log pi(action | x) / d theta`` for the linear-softmax policy."""
    probs = masked_softmax(x @ p.theta / p.temperature, mask)
    g = -probs
    g[action] += 1.0
    return np.outer(x, g) / p.temperature


@dataclass
class LinearPolicy:
    """Samples actions from :func:`policy_probs`; ``prompt`` is the adapter
    output prepended to the state encoding (zeros when unadapted)."""

    params: PolicyParams
    space: ActionSpace = field(default_factory=ActionSpace.default)
    prompt: np.ndarray | None = None
    greedy: bool = False

    def distribution(self, state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mask = self.space.mask(state)
        x = policy_input(self.params, state_features(state), self.prompt)
        return x, mask, masked_softmax(x @ self.params.theta / self.params.temperature, mask)

    def act(self, state, rng):
        x, mask, probs = self.distribution(state)
        a = int(np.argmax(probs)) if self.greedy else int(rng.choice(len(probs), p=probs))
        info = {"x": x, "mask": mask, "action": a, "logp": float(np.log(probs[a])), "probs": probs}
        return self.space.resolve(a, state), info
