"""Run configuration: one YAML file with nested sections, merged over
defaults, with scalar overrides from ``GDISTILL__SECTION__KEY`` environment
variables. The resolved document (minus the output directory) is hashed and
the hash is stamped on every artifact.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .env import EnvConfig
from .graph import Graph, GraphGenSpec, GraphValidationError, generate_synthetic, load_edge_list
from .memory import GdlWeights, HeuristicScorer, RemoteScorer, RewardWeights
from .ppo import PpoConfig
from .stta import SttaConfig

ENV_PREFIX = "GDISTILL__"


class ConfigError(ValueError):
    pass


def _fields(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


DEFAULTS = {
    "seed": 0,
    "out": "runs/default",
    "graph": {"path": None, "directed": False, "weighted": False, "generate": None, "planted": None,
              "features": 0},
    "tasks": {"templates": None, "count": 8, "per_graph": 8, "query": None},
    "env": {"n_max": 16},
    "reward": _fields(RewardWeights),
    "gdl": _fields(GdlWeights),
    "ppo": _fields(PpoConfig),
    "train": {"iters": 300, "rollouts_per_iter": None, "save_every": 50, "eval_episodes": 100,
              "eval_temperature": 0.7, "tools": None},
    "policy": {"kind": "trained", "checkpoint": None, "temperature": None},
    "stta": {k: v for k, v in _fields(SttaConfig).items()},
    "adapt": {"graph": None, "features": 1, "held_out": 10, "eval_rollouts": 5},
    "scorer": {"kind": "heuristic", "endpoint": None, "timeout": 2.0, "fallback": "heuristic"},
    "bench": {"sizes": [1000, 10000, 100000, 200000], "family": "barabasi-albert", "m": 2, "steps": 5,
              "M": 16, "fingerprint": False},
}


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _env_overrides(doc: dict, environ) -> dict:
    doc = copy.deepcopy(doc)
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        node = doc
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"{key}: no config section {part!r}")
            node = node[part]
        if path[-1] not in node:
            raise ConfigError(f"{key}: unknown config key {'.'.join(path)}")
        if isinstance(node[path[-1]], dict) and node[path[-1]]:
            raise ConfigError(f"{key}: only scalar leaves can be overridden")
        node[path[-1]] = yaml.safe_load(environ[key])
    return doc


def builtin_config(name: str) -> Path | None:
    """Path of a config shipped with the package (``planted``, ...)."""
    ref = resources.files("gdistill") / "configs" / f"{name}.yaml"
    return Path(str(ref)) if ref.is_file() else None


def _resolve_paths(user: dict, base: Path) -> None:
    # relative edge-list paths are read next to the config file when present there
    for section in ("graph", "adapt"):
        sec = user.get(section)
        if isinstance(sec, dict) and isinstance(sec.get("path"), str):
            cand = base / sec["path"]
            if not Path(sec["path"]).is_absolute() and not Path(sec["path"]).exists() and cand.exists():
                sec["path"] = str(cand)


@dataclass(frozen=True)
class RunConfig:
    doc: dict

    # -- construction --------------------------------------------------------------------------

    @classmethod
    def load(cls, path=None, environ=None, seed: int | None = None, out: str | None = None) -> "RunConfig":
        user = {}
        if path is not None:
            p = Path(path)
            if not p.exists() and builtin_config(str(path)) is not None:
                p = builtin_config(str(path))
            try:
                user = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except yaml.YAMLError as exc:
                raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
            if not isinstance(user, dict):
                raise ConfigError(f"config {path} must be a mapping")
            _resolve_paths(user, p.parent)
        return cls.from_dict(user, environ=environ, seed=seed, out=out)

    @classmethod
    def from_dict(cls, user: dict, environ=None, seed: int | None = None, out: str | None = None) -> "RunConfig":
        doc = _merge(DEFAULTS, user)
        doc = _env_overrides(doc, os.environ if environ is None else environ)
        if seed is not None:
            doc["seed"] = int(seed)
        if out is not None:
            doc["out"] = str(out)
        cfg = cls(doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        g = self.doc["graph"]
        sources = [k for k in ("path", "generate", "planted") if g.get(k)]
        if len(sources) != 1:
            raise ConfigError(f"exactly one graph source (path, generate, planted) is required, got {sources}")
        if self.doc["scorer"]["kind"] not in ("heuristic", "remote"):
            raise ConfigError("scorer.kind must be heuristic or remote")
        if self.doc["scorer"]["kind"] == "remote" and not self.doc["scorer"]["endpoint"]:
            raise ConfigError("scorer.endpoint is required for the remote scorer")
        if self.doc["policy"]["kind"] not in ("trained", "scripted", "random"):
            raise ConfigError("policy.kind must be trained, scripted or random")
        if not isinstance(self.doc["seed"], int):
            raise ConfigError("seed must be an integer")
        try:
            self.reward_weights, self.gdl_weights, self.ppo, self.stta, self.env
            if g.get("generate"):
                self._gen_spec(g["generate"]).validate()
        except (TypeError, ValueError, GraphValidationError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    # -- typed views -----------------------------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def out(self) -> Path:
        return Path(self.doc["out"])

    @property
    def reward_weights(self) -> RewardWeights:
        return RewardWeights(**self.doc["reward"])

    @property
    def gdl_weights(self) -> GdlWeights:
        return GdlWeights(**self.doc["gdl"])

    @property
    def ppo(self) -> PpoConfig:
        return PpoConfig(**self.doc["ppo"])

    @property
    def stta(self) -> SttaConfig:
        d = dict(self.doc["stta"])
        if d.get("templates") is not None:
            d["templates"] = tuple(d["templates"])
        return SttaConfig(**d)

    @property
    def env(self) -> EnvConfig:
        return EnvConfig(int(self.doc["env"]["n_max"]), self.gdl_weights, self.reward_weights, self.ppo.gamma)

    def scorer(self):
        s = self.doc["scorer"]
        if s["kind"] == "heuristic":
            return HeuristicScorer()
        fallback = HeuristicScorer() if s.get("fallback") == "heuristic" else None
        return RemoteScorer(s["endpoint"], float(s["timeout"]), fallback)

    @property
    def hash(self) -> str:
        doc = {k: v for k, v in self.doc.items() if k != "out"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.doc, sort_keys=True)

    # -- graphs and tasks --------------------------------------------------------------------------

    @staticmethod
    def _gen_spec(d: dict) -> GraphGenSpec:
        if not isinstance(d, dict) or "family" not in d:
            raise ConfigError("graph.generate needs a family")
        extra = set(d) - {"family", "params", "seed"}
        if extra:
            raise ConfigError(f"unknown graph.generate keys {sorted(extra)}")
        return GraphGenSpec(d["family"], dict(d.get("params") or {}), int(d.get("seed", 0)))

    def graphs(self) -> list[Graph]:
        """The configured graph(s): one loaded or generated graph, or the
        planted family."""
        from .demos import planted_graphs, with_features
        g = self.doc["graph"]
        if g.get("planted"):
            p = g["planted"]
            return planted_graphs(int(p.get("graphs", 6)), int(p.get("n", 40)), float(p.get("mean_degree", 2.5)),
                                  int(p.get("seed", self.seed)))
        if g.get("path"):
            graph = load_edge_list(g["path"], bool(g["directed"]), bool(g["weighted"]))
        else:
            graph = generate_synthetic(self._gen_spec(g["generate"]))
        if g.get("features"):
            graph = with_features(graph, self.seed, int(g["features"]))
        return [graph]

    def tasks(self) -> list[tuple]:
        """``(graph, query)`` pairs: the pinned query, or generated ones."""
        from .tasks import SHIPPED, generate_tasks, make_query
        t = self.doc["tasks"]
        graphs = self.graphs()
        if t.get("query"):
            q = t["query"]
            return [(graphs[0], make_query(graphs[0], q["template"], **dict(q.get("bindings") or {})))]
        templates = tuple(t["templates"]) if t.get("templates") else SHIPPED
        pairs = []
        per = int(t["per_graph"]) if len(graphs) > 1 else int(t["count"])
        for i, g in enumerate(graphs):
            for q in generate_tasks(g, templates, per, self.seed + 1000 + i):
                pairs.append((g, q))
        return pairs

    def adapt_graph(self, path=None) -> Graph:
        from .demos import with_features
        a = self.doc["adapt"]
        if path is not None:
            g = self.doc["graph"]
            graph = load_edge_list(path, bool(g["directed"]), bool(g["weighted"]))
        elif a.get("graph"):
            graph = generate_synthetic(self._gen_spec(a["graph"]))
        else:
            raise ConfigError("adapt needs a graph path or adapt.graph in the config")
        if a.get("features") and graph.features is None:
            graph = with_features(graph, self.seed + 1, int(a["features"]))
        return graph


def np_seed(seed: int, *salt: int) -> int:
    """Derived integer seed (stable across runs and platforms)."""
    return int(np.random.SeedSequence([seed, *salt]).generate_state(1)[0])
