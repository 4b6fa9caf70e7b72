"""Information-theoretic diagnostics: exact (conditional) mutual information
on discrete joint tables, the data-processing bound behind the distillation
argument, distillation curves from trajectory logs, and a behavioral check
on a small enumerable task family.

All information quantities are in bits.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .memory import ContractError, RewardBreakdown, RewardWeights

log = logging.getLogger(__name__)


class MarkovViolation(ValueError):
    def __init__(self, message: str, index: tuple, deviation: float):
        super().__init__(message)
        self.index = index
        self.deviation = deviation


@dataclass(frozen=True)
class JointTable:
    variables: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "variables", tuple(self.variables))
        if p.ndim != len(self.variables):
            raise ContractError(f"{len(self.variables)} variables but a {p.ndim}-d table")
        if len(set(self.variables)) != len(self.variables):
            raise ContractError("variable names must be distinct")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ContractError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ContractError(f"probabilities sum to {p.sum()!r}, not 1")

    @property
    def sizes(self) -> tuple:
        return self.probs.shape

    @classmethod
    def from_counts(cls, variables, counts) -> "JointTable":
        c = np.asarray(counts, dtype=np.float64)
        return cls(variables, c / c.sum())

    @classmethod
    def from_samples(cls, variables, samples) -> tuple["JointTable", list]:
        """Empirical joint of hashable tuples; returns the table and, per
        variable, the list of observed values (index order)."""
        samples = list(samples)
        levels = [sorted({s[i] for s in samples}, key=repr) for i in range(len(variables))]
        index = [{v: k for k, v in enumerate(lv)} for lv in levels]
        counts = np.zeros(tuple(len(lv) for lv in levels))
        for s in samples:
            counts[tuple(index[i][s[i]] for i in range(len(variables)))] += 1
        return cls.from_counts(variables, counts), levels

    def axes(self, names) -> tuple:
        try:
            return tuple(self.variables.index(v) for v in names)
        except ValueError as exc:
            raise ContractError(f"unknown variable in {names!r}") from exc

    def marginal(self, names, keepdims: bool = False) -> np.ndarray:
        keep = set(self.axes(names))
        drop = tuple(i for i in range(self.probs.ndim) if i not in keep)
        return self.probs.sum(axis=drop, keepdims=keepdims)


def _as_tuple(v) -> tuple:
    return (v,) if isinstance(v, str) else tuple(v)


def exact_mi(j: JointTable, a, b, cond=()) -> float:
    """``I(A; B | C)`` in bits, by direct summation over the joint."""
    a, b, cond = _as_tuple(a), _as_tuple(b), _as_tuple(cond)
    sa, sb, sc = set(a), set(b), set(cond)
    if not a or not b:
        raise ContractError("mutual information needs two nonempty variable sets")
    if sa & sb or sa & sc or sb & sc:
        raise ContractError("variable sets must be disjoint")
    j.axes(a + b + cond)
    p_abc = j.marginal(a + b + cond, keepdims=True)
    p_ac = j.marginal(a + cond, keepdims=True)
    p_bc = j.marginal(b + cond, keepdims=True)
    p_c = j.marginal(cond, keepdims=True) if cond else np.ones_like(p_abc[(0,) * p_abc.ndim])
    num = p_abc * p_c
    den = p_ac * p_bc
    mask = p_abc > 0
    num_b = np.broadcast_to(num, p_abc.shape)[mask]
    den_b = np.broadcast_to(den, p_abc.shape)[mask]
    return float(np.sum(p_abc[mask] * np.log2(num_b / den_b)))


def entropy(j: JointTable, names) -> float:
    p = j.marginal(_as_tuple(names))
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


# -- data-processing bound ------------------------------------------------------------------------

CHAIN = ("Y", "IR", "X", "m")


def random_markov_table(rng: np.random.Generator, sizes=(2, 2, 3, 3), sparsity: float = 0.0,
                        variables=CHAIN) -> JointTable:
    """Random joint over ``(Y, IR) -> X -> m``: an arbitrary ``p(y, ir)``,
    ``p(x | y, ir)`` and a channel ``p(m | x)``. ``sparsity`` zeroes a
    fraction of entries (keeping each conditional normalizable)."""
    ny, ni, nx, nm = sizes

    def dirichlet(shape):
        w = rng.gamma(0.5, size=shape)
        if sparsity > 0:
            w = w * (rng.random(shape) >= sparsity)
            empty = w.sum(axis=-1) == 0
            w[empty, rng.integers(shape[-1])] = 1.0
        return w / w.sum(axis=-1, keepdims=True)

    p_yi = dirichlet((ny * ni,)).reshape(ny, ni)
    p_x = dirichlet((ny, ni, nx))
    p_m = dirichlet((nx, nm))
    joint = p_yi[:, :, None, None] * p_x[:, :, :, None] * p_m[None, None, :, :]
    return JointTable(variables, joint / joint.sum())


def check_markov(j: JointTable, y="Y", ir="IR", x="X", m="m", tol: float = 1e-10) -> None:
    """Raise :class:`MarkovViolation` unless ``p(m | x, y, ir) = p(m | x)``."""
    p = np.transpose(j.probs, j.axes((y, ir, x, m)))
    p_yix = p.sum(axis=3, keepdims=True)
    p_xm = p.sum(axis=(0, 1))
    p_x = p_xm.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond_full = np.where(p_yix > 0, p / p_yix, 0.0)
        cond_x = np.where(p_x > 0, p_xm / p_x, 0.0)
    dev = np.abs(cond_full - cond_x[None, None]) * (p_yix > 0)
    worst = float(dev.max()) if dev.size else 0.0
    if worst > tol:
        idx = tuple(int(i) for i in np.unravel_index(int(np.argmax(dev)), dev.shape))
        raise MarkovViolation(f"p(m | x, y, ir) differs from p(m | x) at (y, ir, x, m) = {idx} by {worst:.3g}",
                              idx, worst)


@dataclass(frozen=True)
class DpiReport:
    i_yir_m: float
    i_x_m: float
    i_y_m: float
    i_ir_m_given_y: float
    tol: float

    @property
    def joint_ok(self) -> bool:
        return self.i_yir_m <= self.i_x_m + self.tol

    @property
    def conditional_ok(self) -> bool:
        return self.i_ir_m_given_y <= self.i_x_m - self.i_y_m + self.tol

    @property
    def ok(self) -> bool:
        return self.joint_ok and self.conditional_ok

    def to_dict(self) -> dict:
        return {"I((Y,IR);m)": self.i_yir_m, "I(X;m)": self.i_x_m, "I(Y;m)": self.i_y_m,
                "I(IR;m|Y)": self.i_ir_m_given_y, "tol": self.tol, "joint_ok": self.joint_ok,
                "conditional_ok": self.conditional_ok}


def dpi_bound_check(j: JointTable, y="Y", ir="IR", x="X", m="m", tol: float = 1e-10) -> DpiReport:
    """``I((Y,IR); m) <= I(X; m)`` and ``I(IR; m | Y) <= I(X; m) - I(Y; m)``."""
    check_markov(j, y, ir, x, m)
    return DpiReport(exact_mi(j, (y, ir), m), exact_mi(j, x, m), exact_mi(j, y, m), exact_mi(j, ir, m, y), tol)


# -- distillation curves --------------------------------------------------------------------------

@dataclass
class EpisodeSeries:
    gdl: list
    rel: list
    succ: list
    delta_gdl: list
    delta_rel: list
    total: list
    terminal_total: float
    terminal_eval: int | None


@dataclass
class DistillationSeries:
    episodes: list = field(default_factory=list)
    skipped: int = 0
    max_recompute_error: float = 0.0

    def _steps(self):
        for ep in self.episodes:
            for t in range(len(ep.gdl) - 1):
                yield ep.gdl[t], ep.gdl[t + 1], ep.rel[t], ep.rel[t + 1]

    @property
    def frac_gdl_decrease(self) -> float:
        steps = list(self._steps())
        return float(np.mean([b < a for a, b, _, _ in steps])) if steps else 0.0

    @property
    def frac_rel_increase(self) -> float:
        steps = list(self._steps())
        return float(np.mean([d > c for _, _, c, d in steps])) if steps else 0.0

    def summary(self) -> dict:
        return {"episodes": len(self.episodes), "skipped": self.skipped,
                "frac_gdl_decrease": self.frac_gdl_decrease, "frac_rel_increase": self.frac_rel_increase,
                "max_recompute_error": self.max_recompute_error}


def _episode(records, w: RewardWeights) -> tuple[EpisodeSeries, float]:
    inter = [r for r in records if not r["reward"].terminal]
    term = [r for r in records if r["reward"].terminal]
    err = max((abs(r["reward"].total - r["reward"].recompute(w)) for r in records), default=0.0)
    gdl, rel = [], []
    if inter:
        gdl = [inter[0]["reward"].gdl_before] + [r["reward"].gdl_after for r in inter]
        rel = [inter[0]["reward"].rel_before] + [r["reward"].rel_after for r in inter]
    ep = EpisodeSeries(gdl, rel, [r["reward"].succ for r in inter], [r["reward"].delta_gdl for r in inter],
                       [r["reward"].delta_rel for r in inter], [r["reward"].total for r in inter],
                       term[-1]["reward"].total if term else 0.0,
                       records[-1].get("terminal_eval") if records else None)
    return ep, err


def distillation_curves(lines, w: RewardWeights = RewardWeights()) -> DistillationSeries:
    """Per-episode aligned GDL / Rel / reward-component series from a
    trajectory log (an iterable of JSON lines). Episodes are delimited by
    ``t == 0``; unparseable records are skipped and counted."""
    out = DistillationSeries()
    current: list = []
    for line in lines:
        line = line.strip() if isinstance(line, str) else line
        if not line:
            continue
        try:
            d = json.loads(line)
            rec = {"t": int(d["t"]), "reward": RewardBreakdown.from_dict(d["reward"]),
                   "terminal_eval": d.get("terminal_eval")}
        except (ValueError, KeyError, TypeError):
            out.skipped += 1
            continue
        if rec["t"] == 0 and current:
            ep, err = _episode(current, w)
            out.episodes.append(ep)
            out.max_recompute_error = max(out.max_recompute_error, err)
            current = []
        current.append(rec)
    if current:
        ep, err = _episode(current, w)
        out.episodes.append(ep)
        out.max_recompute_error = max(out.max_recompute_error, err)
    if out.skipped:
        log.warning("skipped %d corrupt log records", out.skipped)
    return out


# -- behavioral check on an enumerable family ---------------------------------------------------

def toy_tasks(n: int = 8, graphs: int = 8, seed: int = 3) -> list:
    """Every solvable single-node planted query (one per center) on small graphs."""
    from .demos import planted_graphs
    from .tasks import TaskGenerationError, get_template, self_check
    tmpl = get_template("neighborhood-argmax")
    pairs = []
    for g in planted_graphs(graphs, n=n, mean_degree=2.0, seed=seed):
        seen = set()
        rng = np.random.default_rng(seed)
        for _ in range(20 * n):
            q = tmpl.make(g, rng)
            if q is None or q.node_slots in seen or not self_check(g, q):
                continue
            seen.add(q.node_slots)
            pairs.append((g, q))
    if not pairs:
        raise TaskGenerationError("toy family is empty")
    return pairs


def empirical_mi(pairs) -> float:
    """Plug-in ``I(A; B)`` in bits from observed ``(a, b)`` pairs."""
    table, _ = JointTable.from_samples(("a", "b"), pairs)
    return exact_mi(table, "a", "b")


@dataclass
class BehaviorReport:
    mi_trained: float
    mi_random: float
    gdl_trained: float
    gdl_random: float
    success_trained: float
    success_random: float
    rel_info_correlation: float
    episodes: int

    @property
    def ok(self) -> bool:
        return self.mi_trained > self.mi_random and self.gdl_trained < self.gdl_random

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def _final_pairs(trajs):
    out = []
    for tr in trajs:
        y = tr.query.ground_truth
        y = frozenset(y) if isinstance(y, (set, frozenset, list, tuple)) else y
        m = frozenset(tr.final_state.memory.nodes().tolist())
        out.append((tuple(sorted(m)), tuple(sorted(y)) if isinstance(y, frozenset) else y))
    return out


def proposition_check(episodes: int = 1000, iters: int = 150, seed: int = 0, tasks=None) -> BehaviorReport:
    """Train on the toy family with the shaped reward, then compare the
    trained and the uniform-random policy over ``episodes`` episodes each:
    the plug-in ``I(m_N; Y)`` and the mean final GDL."""
    from .env import EnvConfig, random_policy, run_episode
    from .policy import ActionSpace, LinearPolicy
    from .ppo import PpoConfig, train
    tasks = tasks or toy_tasks()
    space = ActionSpace.default()
    res = train(tasks, PpoConfig(), iters=iters, seed=seed, space=space)
    agent = LinearPolicy(res.policy, space)
    rng = np.random.default_rng(seed + 1)
    trained, rand = [], []
    for i in range(episodes):
        g, q = tasks[i % len(tasks)]
        s = int(rng.integers(2**63))
        trained.append(run_episode(agent, g, q, EnvConfig(), s))
        rand.append(run_episode(random_policy, g, q, EnvConfig(), s))
    pt, pr = _final_pairs(trained), _final_pairs(rand)
    # relevance vs pointwise information about Y, pooled over both policies
    pooled = pt + pr
    joint = Counter(pooled)
    pm = Counter(m for m, _ in pooled)
    py = Counter(y for _, y in pooled)
    total = len(pooled)
    pmi = [np.log2(joint[(m, y)] * total / (pm[m] * py[y])) for m, y in pooled]
    rels = [tr.final_state.rel for tr in trained + rand]
    corr = float(np.corrcoef(rels, pmi)[0, 1]) if np.std(rels) > 0 and np.std(pmi) > 0 else 0.0
    return BehaviorReport(empirical_mi(pt), empirical_mi(pr),
                          float(np.mean([t.final_state.gdl for t in trained])),
                          float(np.mean([t.final_state.gdl for t in rand])),
                          float(np.mean([t.terminal_eval for t in trained])),
                          float(np.mean([t.terminal_eval for t in rand])), corr, episodes)
