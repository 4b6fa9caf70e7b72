"""Command-line entry point: ``gdistill {tools,run,train,adapt,fingerprint,bench}``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
4 output directory locked by another command.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import resource
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, file_digest, load_policy, save_adapter, save_policy
from .config import ConfigError, RunConfig
from .env import Action, EnvConfig, TrajectoryLog, random_policy, run_episode, script_for, scripted_policy
from .graph import GraphGenSpec, GraphValidationError, generate_synthetic, load_edge_list
from .policy import ActionSpace, LinearPolicy, PolicyParams, ValueParams
from .spectral import FingerprintCache, Unconverged
from .tools import CATEGORIES, manifest, registry

log = logging.getLogger("gdistill")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_LOCKED = 0, 2, 3, 4


class OutputLocked(RuntimeError):
    pass


class _Lock:
    """Exclusive lock file in the output directory."""

    def __init__(self, out: Path):
        self.path = out / ".gdistill.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            pid = self.path.read_text().strip()
            if pid.isdigit() and not _alive(int(pid)):
                self.path.unlink(missing_ok=True)
                return self.__enter__()
            raise OutputLocked(f"{self.path.parent} is in use by process {pid or '?'}") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_table(path: Path, columns, rows, cfg: RunConfig) -> None:
    lines = [f"# config_hash={cfg.hash} seed={cfg.seed}", "\t".join(columns)]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    return str(x)


def _space(cfg: RunConfig) -> ActionSpace:
    tools = cfg.doc["train"].get("tools")
    return ActionSpace.default(tools)


# -- commands ----------------------------------------------------------------------------------

def cmd_tools_list(args, out: _Out) -> int:
    if args.format == "manifest":
        print(manifest())
        return EXIT_OK
    specs = registry()
    for cat in CATEGORIES:
        group = [s for s in specs if s.category == cat]
        if not group:
            continue
        print(f"[{cat}] ({len(group)})")
        for s in group:
            params = ", ".join(p.name for p in s.param_schema)
            flag = " *" if s.mutates_memory else ""
            print(f"  {s.tool_id}({params}){flag}")
    print(f"{len(specs)} tools in {len({s.category for s in specs})} categories (* = replaces memory)")
    return EXIT_OK


def _load_trained(cfg: RunConfig, path=None):
    path = path or cfg.doc["policy"].get("checkpoint") or cfg.out / "policy.json"
    if not Path(path).exists():
        raise CheckpointError(f"policy checkpoint {path} not found (run `gdistill train` first)")
    p, v, h, meta = load_policy(path)
    return p, v, Path(path)


def cmd_run(args, cfg: RunConfig, out: _Out) -> int:
    tasks = cfg.tasks()
    if not 0 <= args.query_id < len(tasks):
        raise ConfigError(f"query id {args.query_id} out of range (0..{len(tasks) - 1})")
    g, q = tasks[args.query_id]
    kind = args.policy or cfg.doc["policy"]["kind"]
    env_cfg = cfg.env
    if kind == "scripted":
        policy = scripted_policy(script_for(q))
    elif kind == "random":
        policy = random_policy
    else:
        p, _, _ = _load_trained(cfg, args.checkpoint)
        temp = cfg.doc["policy"].get("temperature")
        policy = LinearPolicy(p.with_temperature(temp) if temp else p, _space(cfg))
    scorer = cfg.scorer()
    traj = run_episode(policy, g, q, env_cfg, cfg.seed, scorer)
    log_path = cfg.out / "trajectory.jsonl"
    log_path.unlink(missing_ok=True)
    TrajectoryLog(log_path).write(traj, {"seed": cfg.seed, "config_hash": cfg.hash, "query_id": args.query_id})
    gdl_curve = [traj.records[0].reward.gdl_before] + [r.reward.gdl_after for r in traj.records]
    summary = {"query": q.text, "template": q.template_id, "N": traj.N, "return": traj.discounted_return,
               "success": traj.terminal_eval, "gdl_curve": gdl_curve, "log_digest": traj.digest(),
               "config_hash": cfg.hash, "seed": cfg.seed,
               "scorer_warnings": len(getattr(scorer, "warnings", []) or [])}
    _write_json(cfg.out / "run_summary.json", summary)
    out(f"query: {q.text}")
    for t, rec in enumerate(traj.records):
        out(f"  {t}: {rec.action.tool_id or 'TERMINATE'} -> {rec.description[:100]}")
    out(f"N={traj.N} return={_fmt(traj.discounted_return)} success={traj.terminal_eval}")
    out("GDL: " + " ".join(_fmt(x) for x in gdl_curve))
    out(f"log digest: {summary['log_digest']}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig, out: _Out) -> int:
    from .ppo import evaluate, train
    tr = cfg.doc["train"]
    tasks = cfg.tasks()
    space = _space(cfg)
    ppo = cfg.ppo
    prompt_dim = cfg.stta.prompt_dim
    p0 = PolicyParams.init(len(space), prompt_dim=prompt_dim, seed=cfg.seed + 7)
    v0 = ValueParams.init()
    ckdir = cfg.out / "checkpoints"
    meta = {"seed": cfg.seed, "actions": space.names()}
    save_policy(ckdir / "policy_00000.json", p0, v0, cfg.hash, dict(meta, iteration=0))
    every = int(tr["save_every"] or 0)

    def on_iter(row, p, v):
        it = row.iteration + 1
        if every and it % every == 0:
            save_policy(ckdir / f"policy_{it:05d}.json", p, v, cfg.hash, dict(meta, iteration=it))
        if it % max(1, int(tr["iters"]) // 10) == 0:
            out(f"iter {it}: return={_fmt(row.mean_return)} N={_fmt(row.mean_n)} "
                f"gdl={_fmt(row.mean_final_gdl)} success={_fmt(row.success_rate)}")

    t0 = time.perf_counter()
    res = train(tasks, ppo, tr["rollouts_per_iter"], int(tr["iters"]), cfg.seed, cfg.env, space, p0, v0,
                cfg.scorer(), on_iter)
    seconds = time.perf_counter() - t0
    save_policy(cfg.out / "policy.json", res.policy, res.value, cfg.hash, dict(meta, iteration=int(tr["iters"])))
    write_table(cfg.out / "curve.tsv", ("iter", "return", "N", "final_gdl", "success"),
                [r.as_tuple() for r in res.curve], cfg)
    report = {"iters": int(tr["iters"]), "diverged": res.diverged, "config_hash": cfg.hash, "seed": cfg.seed}
    if res.curve:
        q = max(1, len(res.curve) // 4)
        report["first_quartile_gdl"] = float(np.mean([r.mean_final_gdl for r in res.curve[:q]]))
        report["last_quartile_gdl"] = float(np.mean([r.mean_final_gdl for r in res.curve[-q:]]))
        report["final_success"] = float(np.mean([r.success_rate for r in res.curve[-q:]]))
    if int(tr["eval_episodes"]) > 0:
        ev = evaluate(res.policy, tasks, int(tr["eval_episodes"]), cfg.seed + 1, float(tr["eval_temperature"]),
                      cfg.env, space)
        report["eval_success"], report["eval_mean_n"] = ev["success"], ev["mean_n"]
        out(f"evaluation: success={_fmt(ev['success'])} mean N={_fmt(ev['mean_n'])}")
    _write_json(cfg.out / "train_report.json", report)
    log.info("training took %.1f s", seconds)
    out(f"wrote {cfg.out / 'policy.json'} and {cfg.out / 'curve.tsv'}")
    return EXIT_OK


def cmd_adapt(args, cfg: RunConfig, out: _Out) -> int:
    from .spectral import fingerprint
    from .stta import AdapterParams, adapt, adapter_forward, mean_chain_length, params_hash
    from .tasks import generate_aux_queries
    p, v, ck_path = _load_trained(cfg, args.checkpoint)
    digest_before = file_digest(ck_path)
    hash_before = params_hash(p.theta, v.omega, [v.bias])
    s = cfg.stta
    a = cfg.doc["adapt"]
    g = cfg.adapt_graph(args.graph)
    space = _space(cfg)
    if len(space) != p.theta.shape[1]:
        raise ConfigError(f"checkpoint has {p.theta.shape[1]} actions, the configured space {len(space)}")
    cache = FingerprintCache(cfg.out / "fingerprints")
    fp = cache.compute(g, s.M, seed=s.seed)
    psi0 = AdapterParams.init(s.M, s.hidden, s.prompt_len, s.prompt_width, seed=s.seed)
    res = adapt(psi0, g, p, s, value=v, space=space, env_cfg=cfg.env, scorer=cfg.scorer(), fp=fp)
    held = generate_aux_queries(g, int(a["held_out"]), s.seed + 7919, s.templates)
    R = int(a["eval_rollouts"])
    n_before = mean_chain_length(p, adapter_forward(psi0, fp), g, held, R, s.seed + 1, space, cfg.env)
    n_after = mean_chain_length(p, adapter_forward(res.adapter, fp), g, held, R, s.seed + 1, space, cfg.env)
    save_adapter(cfg.out / "adapter.json", res.adapter, cfg.hash, {"seed": cfg.seed, "graph_hash": g.digest()})
    write_table(cfg.out / "adapt_curve.tsv", ("step", "loss", "N", "kl", "lr"),
                [r.as_tuple() for r in res.curve], cfg)
    digest_after = file_digest(ck_path)
    unchanged = digest_before == digest_after and hash_before == params_hash(p.theta, v.omega, [v.bias])
    report = {"mean_n_before": n_before, "mean_n_after": n_after, "policy_digest": digest_after,
              "policy_unchanged": unchanged, "config_hash": cfg.hash, "seed": cfg.seed}
    _write_json(cfg.out / "adapt_report.json", report)
    out(f"mean N on held-out auxiliary queries: before={_fmt(n_before)} after={_fmt(n_after)}")
    out(f"base policy unchanged: {unchanged} (digest {digest_after[:16]})")
    if not unchanged:
        raise RuntimeError("base policy changed during adaptation")
    return EXIT_OK


def cmd_fingerprint(args, cfg: RunConfig, out: _Out) -> int:
    from .spectral import fingerprint
    if args.graph:
        gdoc = cfg.doc["graph"]
        g = load_edge_list(args.graph, bool(gdoc["directed"]), bool(gdoc["weighted"]))
    else:
        g = cfg.graphs()[0]
    M = args.M if args.M is not None else cfg.stta.M
    if M + 1 > g.n:
        raise ConfigError(f"M + 1 = {M + 1} exceeds the node count {g.n}")
    t0 = time.perf_counter()
    fp = fingerprint(g, M, seed=cfg.seed)
    seconds = time.perf_counter() - t0
    write_table(cfg.out / "fingerprint.tsv", ("i", "sigma", "residual"),
                [(i, s, r) for i, (s, r) in enumerate(zip(fp.values, fp.residuals))], cfg)
    doc = fp.to_dict()
    doc.update({"seconds": seconds, "nodes": g.n, "edges": g.m, "config_hash": cfg.hash,
                "peak_rss_mb": _peak_mb()})
    _write_json(cfg.out / "fingerprint.json", doc)
    out(" ".join(_fmt(x) for x in fp.values))
    out(f"n={g.n} m={g.m} M={M} matvecs={fp.matvecs} seconds={seconds:.2f}")
    return EXIT_OK


def _peak_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


BENCH_CHAIN = [("degree", {}), ("top_k_by_score", {"column": "degree", "k": 1000}), ("largest_component", {}),
               ("betweenness_centrality", {}), ("top_k_by_score", {"column": "betweenness", "k": 10})]


def bench_episode(g, steps: int = 5):
    """A scripted extraction chain run as an episode; returns the trajectory."""
    from .tasks import make_query
    q = make_query(g, "component-count")
    actions = [Action("tool", tid, dict(p)) for tid, p in BENCH_CHAIN[:steps]]
    return run_episode(scripted_policy(actions), g, q, EnvConfig(n_max=steps + 1), 0)


def cmd_bench(args, cfg: RunConfig, out: _Out) -> int:
    from .spectral import fingerprint
    b = cfg.doc["bench"]
    rows = []
    for i, n in enumerate(b["sizes"]):
        spec = GraphGenSpec(b["family"], {"n": int(n), "m": int(b["m"])} if b["family"] == "barabasi-albert"
                            else {"n": int(n), "p": 2.3 / max(int(n) - 1, 1)}, cfg.seed + i)
        g = generate_synthetic(spec)
        t0 = time.perf_counter()
        traj = bench_episode(g, int(b["steps"]))
        ep_s = time.perf_counter() - t0
        max_desc = max(len(r.description) for r in traj.records)
        fp_s = float("nan")
        if b.get("fingerprint"):
            t1 = time.perf_counter()
            fingerprint(g, int(b["M"]), seed=cfg.seed)
            fp_s = time.perf_counter() - t1
        rows.append((g.n, g.m, traj.N, ep_s, max_desc, fp_s, _peak_mb()))
        out(f"n={g.n} m={g.m} episode={ep_s:.2f}s max_desc={max_desc} "
            f"fingerprint={fp_s:.2f}s peak={_peak_mb():.0f}MB")
    write_table(cfg.out / "bench.tsv", ("nodes", "edges", "N", "episode_seconds", "max_description",
                                       "fingerprint_seconds", "peak_rss_mb"), rows, cfg)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML config path or built-in name")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="gdistill", parents=[common],
                                 description="Graph tool-chaining RL harness")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    tools = sub.add_parser("tools", parents=[common], help="tool registry")
    tsub = tools.add_subparsers(dest="tools_command", required=True)
    tl = tsub.add_parser("list", parents=[common], help="list registered tools")
    tl.add_argument("--format", choices=("table", "manifest"), default="table")

    run = sub.add_parser("run", parents=[common], help="run one episode")
    run.add_argument("--query-id", type=int, default=0)
    run.add_argument("--policy", choices=("trained", "scripted", "random"))
    run.add_argument("--checkpoint")

    sub.add_parser("train", parents=[common], help="PPO training")

    ad = sub.add_parser("adapt", parents=[common], help="test-time adaptation on a graph")
    ad.add_argument("graph", nargs="?", help="edge-list file (default: adapt.graph from the config)")
    ad.add_argument("--checkpoint")

    fp = sub.add_parser("fingerprint", parents=[common], help="spectral fingerprint of a graph")
    fp.add_argument("graph", nargs="?", help="edge-list file (default: the configured graph)")
    fp.add_argument("-M", type=int, default=None)

    sub.add_parser("bench", parents=[common], help="scalability benchmark")
    return ap


_COMMANDS = {"run": cmd_run, "train": cmd_train, "adapt": cmd_adapt, "fingerprint": cmd_fingerprint,
             "bench": cmd_bench}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = _Out(quiet)
    if args.command == "tools":
        return cmd_tools_list(args, out)
    try:
        cfg_path = getattr(args, "config", None)
        if cfg_path is None and args.command == "fingerprint" and args.graph:
            cfg = RunConfig.from_dict({"graph": {"path": args.graph}}, seed=getattr(args, "seed", None),
                                      out=getattr(args, "out", None))
        else:
            cfg = RunConfig.load(cfg_path or "default", seed=getattr(args, "seed", None), out=getattr(args, "out", None))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with _Lock(cfg.out):
            return _COMMANDS[args.command](args, cfg, out)
    except OutputLocked as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    except (ConfigError, GraphValidationError, KeyError, ValueError) as exc:
        if isinstance(exc, (CheckpointError,)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Unconverged as exc:
        print(f"error: {exc}; residuals: {' '.join(_fmt(r) for r in exc.residuals)}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
