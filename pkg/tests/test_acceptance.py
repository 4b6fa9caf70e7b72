"""End-to-end acceptance criteria, one test each, at their stated tolerances.

A one-line PASS/FAIL summary per criterion is printed at the end of the run
(see ``pytest_terminal_summary`` in conftest.py).
"""

from __future__ import annotations

import json
import math
import resource
import time

import numpy as np
import pytest

from gdistill import oracles
from gdistill.cli import EXIT_OK, bench_episode, main
from gdistill.demos import planted_tasks, two_family_demo
from gdistill.diagnostics import dpi_bound_check, proposition_check, random_markov_table
from gdistill.env import EnvConfig, random_policy, replay_totals, run_episode
from gdistill.graph import Graph, GraphGenSpec, generate_synthetic, normalized_laplacian
from gdistill.memory import MemoryState, RewardWeights, gdl_from_sizes, step_reward, terminal_reward
from gdistill.policy import ActionSpace, PolicyParams, grad_log_prob, masked_softmax
from gdistill.ppo import PpoConfig, bandit_probability, evaluate, gae, train
from gdistill.spectral import fingerprint
from gdistill.stta import AdapterParams, adapter_forward
from gdistill.tools import invoke, registry

from conftest import random_graph
from test_cli import SMALL
from test_tools import CATEGORY_LABELS, table_rows

EXACT = 1e-12


def _col(g, tool_id, column, **params):
    return invoke(tool_id, MemoryState.from_graph(g), params).memory_after.column(column)


def _payload(g, tool_id, **params):
    return invoke(tool_id, MemoryState.from_graph(g), params).raw_payload


def _random_dag(rng, n, p):
    perm = rng.permutation(n)
    edges = [(int(perm[u]), int(perm[v]), 1.0) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return Graph.from_edges(n, edges, directed=True)


# 1 ----------------------------------------------------------------------------------------------------

def test_criterion_01_tool_oracles(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    perm_checked = 0
    for i in range(200):
        n = int(rng.integers(2, 13))
        directed = bool(i % 2)
        g = random_graph(rng, n, float(rng.uniform(0.1, 0.6)), directed, weighted=bool(i % 3 == 0))
        e = g.edges()
        unit = Graph.from_edges(n, [(u, v, 1.0) for u, v, _ in e], directed=directed)
        ue = unit.edges()

        assert np.allclose(_col(unit, "betweenness_centrality", "betweenness"),
                           oracles.betweenness_by_enumeration(n, ue, directed), atol=EXACT, rtol=0)
        assert np.allclose(_col(unit, "closeness_centrality", "closeness"), oracles.closeness(n, ue, directed),
                           atol=EXACT, rtol=0)
        assert np.allclose(_col(unit, "harmonic_centrality", "harmonic"), oracles.harmonic(n, ue, directed),
                           atol=EXACT, rtol=0)

        dist = _payload(g, "floyd_warshall")["distances"]
        for s in range(n):
            ref = oracles.bellman_ford(n, e, directed, s)
            assert np.array_equal(np.asarray(dist[s]), np.asarray(ref))
        s, t = (int(x) for x in rng.choice(n, 2, replace=False))
        if math.isfinite(oracles.bellman_ford(n, e, directed, s)[t]):
            got = _payload(g, "dijkstra_path_length", source=s, target=t)
            assert abs(got - oracles.bellman_ford(n, e, directed, s)[t]) <= EXACT

        ref_flow = oracles.max_flow_by_cuts(n, e, directed, s, t)
        for tid in ("minimum_cut", "dinic_min_cut", "edmonds_karp_min_cut", "boykov_kolmogorov_min_cut"):
            assert abs(_payload(g, tid, source=s, sink=t)["value"] - ref_flow) <= EXACT, tid

        assert _payload(g, "weakly_connected_components")["count"] == oracles.component_count(n, e)
        if not directed:
            assert set(_payload(g, "articulation_points")) == oracles.articulation_points(n, e)

        if directed:
            dag = _random_dag(rng, n, float(rng.uniform(0.1, 0.5)))
            de = dag.edges()
            assert _payload(dag, "is_directed_acyclic_graph") is True
            assert oracles.is_topological_order(_payload(dag, "topological_sort"), n, de)
            assert oracles.is_topological_order([v for gen in _payload(dag, "topological_generations")
                                                 for v in gen], n, de)
            if n <= 8:
                assert oracles.permutations_check(_payload(dag, "topological_sort"), n, de)
                orders = _payload(dag, "all_topological_sorts", limit=50_000)
                assert not orders["truncated"]
                brute = {p for p in __import__("itertools").permutations(range(n))
                         if oracles.is_topological_order(list(p), n, de)}
                assert {tuple(o) for o in orders["orders"]} == brute
                perm_checked += 1
            if oracles.has_directed_cycle(n, e):
                assert _payload(g, "is_directed_acyclic_graph") is False
    seconds = time.perf_counter() - t0
    record_property("detail", f"200 graphs, {perm_checked} permutation checks, {seconds:.1f}s")
    assert seconds < 60


# 2 ----------------------------------------------------------------------------------------------------

def test_criterion_02_fingerprint_vs_dense(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(17, 501))
        kind = i % 3
        if kind == 0:
            spec = GraphGenSpec("erdos-renyi", {"n": n, "p": float(rng.uniform(1.0, 8.0)) / n}, i)
        elif kind == 1:
            spec = GraphGenSpec("barabasi-albert", {"n": n, "m": int(rng.integers(1, 4))}, i)
        else:
            spec = GraphGenSpec("erdos-renyi", {"n": n, "p": float(rng.uniform(0.02, 0.3))}, i)
        g = generate_synthetic(spec)
        fp = fingerprint(g, 16, seed=i)
        ref = np.clip(np.linalg.eigvalsh(normalized_laplacian(g).to_dense())[:17], 0, None)
        worst = max(worst, float(np.max(np.abs(fp.values - ref))))
        assert worst <= 1e-8
    for n in (17, 40, 120):
        fp = fingerprint(generate_synthetic(GraphGenSpec("complete", {"n": n})), 16)
        assert np.max(np.abs(fp.values - np.r_[0.0, np.full(16, n / (n - 1))])) <= 1e-8
    # five disjoint triangles plus isolated pairs: five zeros, then 1.5s
    tri = [(3 * k + a, 3 * k + b) for k in range(5) for a, b in ((0, 1), (1, 2), (0, 2))]
    fp = fingerprint(Graph.from_edges(15, tri), 9)
    assert np.max(np.abs(fp.values - np.r_[np.zeros(5), np.full(5, 1.5)])) <= 1e-8
    fp = fingerprint(Graph.from_edges(4, [(0, 1), (2, 3)]), 1)
    assert np.max(np.abs(fp.values)) <= 1e-8
    record_property("detail", f"max deviation {worst:.2e}")


# 3 ----------------------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_03_scale_200k(tmp_path, record_property):
    cfg = tmp_path / "scale.yaml"
    cfg.write_text("graph:\n  generate: {family: barabasi-albert, params: {n: 200000, m: 2}, seed: 0}\n")
    t0 = time.perf_counter()
    assert main(["fingerprint", "--quiet", "--config", str(cfg), "-M", "16", "--out", str(tmp_path / "fp")]) == EXIT_OK
    fp_total = time.perf_counter() - t0
    doc = json.loads((tmp_path / "fp" / "fingerprint.json").read_text())
    assert doc["nodes"] == 200_000 and len(doc["values"]) == 17
    g = generate_synthetic(GraphGenSpec("barabasi-albert", {"n": 200_000, "m": 2}, 0))
    t1 = time.perf_counter()
    traj = bench_episode(g, 5)
    ep_seconds = time.perf_counter() - t1
    assert traj.N == 6 and all(r.reward.succ == 1 for r in traj.records[:5])
    longest = max(len(r.description) for r in traj.records)
    peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024**2
    record_property("detail", f"fingerprint {fp_total:.0f}s, episode {ep_seconds:.1f}s, "
                              f"peak {peak_gb:.2f} GB, longest description {longest}")
    assert fp_total < 600 and ep_seconds < 600
    assert peak_gb < 8
    assert longest <= 512


# 4 ----------------------------------------------------------------------------------------------------

def test_criterion_04_reward_arithmetic(record_property):
    assert gdl_from_sizes(4, 10, 3) == 22
    assert gdl_from_sizes(0, 0, 0) == 0
    ones = RewardWeights(w1=1.0, w2=1.0, w3=1.0)
    assert step_reward(10, 10, 0.3, 0.3, True, ones).total == 1.0
    assert abs(step_reward(100, 50, 0, 0, True).delta_gdl - 0.462117157) <= 1e-6
    assert abs(step_reward(50, 100, 0, 0, True).delta_gdl - (-0.761594156)) <= 1e-6
    assert step_reward(10, 10, 0.2, 0.2, False).total == 0.0
    assert terminal_reward(1).total == 10.0 and terminal_reward(0).total == 0.0
    tasks = planted_tasks(4, 5, n=30, seed=3)
    w = RewardWeights()
    worst, records = 0.0, 0
    for i in range(1000):
        g, q = tasks[i % len(tasks)]
        lines = run_episode(random_policy, g, q, EnvConfig(), seed=i).to_lines()
        for logged, recomputed in replay_totals(lines, w):
            worst = max(worst, abs(logged - recomputed))
            records += 1
    record_property("detail", f"{records} records, max recompute error {worst:.1e}")
    assert worst <= EXACT


# 5 ----------------------------------------------------------------------------------------------------

def test_criterion_05_gae_gradients_bandit(record_property):
    rng = np.random.default_rng(5)
    for _ in range(200):
        r = rng.normal(size=int(rng.integers(1, 20)))
        gamma = float(rng.uniform(0, 1))
        adv = gae(r, np.zeros(len(r) + 1), gamma, 1.0)
        rtg = np.zeros(len(r))
        acc = 0.0
        for t in range(len(r) - 1, -1, -1):
            acc = r[t] + gamma * acc
            rtg[t] = acc
        assert np.array_equal(adv, rtg)
    worst = 0.0
    for _ in range(50):
        theta = rng.normal(size=(5, 6))
        p = PolicyParams(theta, float(rng.uniform(0.5, 2.0)))
        x = rng.normal(size=5)
        mask = rng.random(6) < 0.7
        mask[rng.integers(6)] = True
        act = int(rng.choice(np.flatnonzero(mask)))
        grad = grad_log_prob(p, x, mask, act)
        fd = np.zeros_like(theta)
        h = 1e-6
        for idx in np.ndindex(theta.shape):
            tp, tm = theta.copy(), theta.copy()
            tp[idx] += h
            tm[idx] -= h
            fd[idx] = (np.log(masked_softmax(x @ tp / p.temperature, mask)[act])
                       - np.log(masked_softmax(x @ tm / p.temperature, mask)[act])) / (2 * h)
        worst = max(worst, float(np.max(np.abs(grad - fd))))
    assert worst <= 1e-6
    t0 = time.perf_counter()
    final, _ = bandit_probability(PpoConfig(), updates=200, seed=0)
    seconds = time.perf_counter() - t0
    record_property("detail", f"FD error {worst:.1e}, bandit P(best)={final:.3f} in {seconds:.1f}s")
    assert final >= 0.95 and seconds < 30


# 6 ----------------------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_distillation_training(record_property):
    t0 = time.perf_counter()
    space = ActionSpace.default()
    tasks = planted_tasks(6, 8, seed=0)
    held_out = planted_tasks(6, 8, seed=100)
    untrained = evaluate(PolicyParams.init(len(space)), held_out, 200, 1, 1.0, EnvConfig(), space)
    res = train(tasks, PpoConfig(), None, 300, 0, EnvConfig(), space)
    trained = evaluate(res.policy, held_out, 200, 1, 0.7, EnvConfig(), space)
    q = len(res.curve) // 4
    first = float(np.mean([r.mean_final_gdl for r in res.curve[:q]]))
    last = float(np.mean([r.mean_final_gdl for r in res.curve[-q:]]))
    seconds = time.perf_counter() - t0
    record_property("detail", f"success {untrained['success']:.2f} -> {trained['success']:.2f}, "
                              f"quartile GDL {first:.1f} -> {last:.1f}, {seconds:.0f}s")
    assert untrained["success"] <= 0.2
    assert trained["success"] >= 0.8
    assert last <= first
    assert seconds < 600


# 7 ----------------------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_information_bounds(record_property):
    rng = np.random.default_rng(0)
    for i in range(500):
        sizes = tuple(int(s) for s in rng.integers(2, 6, 4))
        rep = dpi_bound_check(random_markov_table(rng, sizes, sparsity=0.3 if i % 3 == 0 else 0.0), tol=1e-10)
        assert rep.conditional_ok and rep.joint_ok, rep.to_dict()
    beh = proposition_check(episodes=1000, iters=300, seed=0)
    record_property("detail", f"I(m;Y) {beh.mi_random:.2f} -> {beh.mi_trained:.2f} bits, "
                              f"GDL {beh.gdl_random:.1f} -> {beh.gdl_trained:.1f}")
    assert beh.mi_trained > beh.mi_random
    assert beh.gdl_trained < beh.gdl_random


# 8 ----------------------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_test_time_adaptation(record_property):
    t0 = time.perf_counter()
    out = two_family_demo()
    seconds = time.perf_counter() - t0
    cfg_k, cfg_r, cfg_lr = 5, 3, 0.01
    psi0 = AdapterParams.init(16, 32, 4, 8, seed=0)
    prompt0 = adapter_forward(psi0, out["fingerprint"])
    policy = out["policy"]
    probe = np.random.default_rng(0).normal(size=policy.theta.shape[0] - policy.prompt_dim)
    mask = np.ones(policy.theta.shape[1], dtype=bool)
    with_prompt = masked_softmax(np.r_[prompt0, probe] @ policy.theta, mask)
    without = masked_softmax(np.r_[np.zeros(policy.prompt_dim), probe] @ policy.theta, mask)
    record_property("detail", f"N {out['n_before']:.2f} -> {out['n_after']:.2f}, {seconds:.0f}s "
                              f"(K={cfg_k}, R={cfg_r}, lr={cfg_lr})")
    assert np.max(np.abs(prompt0)) <= 1e-12
    assert np.max(np.abs(with_prompt - without)) <= 1e-12
    assert out["n_after"] < out["n_before"]
    assert out["policy_unchanged"]
    assert seconds < 300


# 9 ----------------------------------------------------------------------------------------------------

def test_criterion_09_toolkit_fidelity(record_property):
    rows = table_rows()
    analysis = [s for s in registry() if s.category != "extraction"]
    assert len(rows) == 45 and len(analysis) == 45
    assert sorted((s.category, s.source_function) for s in analysis) == sorted(
        (CATEGORY_LABELS[c], fn) for c, fn in rows)
    assert len([s for s in registry() if s.category == "extraction"]) == 6
    g = Graph.from_edges(5, [(0, 2, 3), (0, 3, 7), (1, 0, 2), (1, 4, 8), (2, 4, 1), (3, 4, 3)], directed=True)
    path = _payload(g, "dijkstra_path", source=1, target=4)
    assert path == {"path": [1, 0, 2, 4], "length": 6.0}
    assert _payload(g, "dijkstra_path_length", source=1, target=4) == 6.0
    c = Graph.from_edges(6, [(0, 1), (0, 3), (1, 2), (1, 4), (2, 5), (3, 4), (4, 5)])
    res = invoke("simple_cycles", MemoryState.from_graph(c))
    assert res.raw_payload["has_cycle"] is True and "Yes" in res.description
    record_property("detail", "45 + 6 tools, both worked examples")


# 10 ---------------------------------------------------------------------------------------------------

def test_criterion_10_reproducibility(tmp_path, record_property):
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    edges = tmp_path / "g.edges"
    g = generate_synthetic(GraphGenSpec("erdos-renyi", {"n": 60, "p": 0.08}, 3))
    edges.write_text("".join(f"{u} {v}\n" for u, v, _ in g.edges()))
    bench = tmp_path / "bench.yaml"
    bench.write_text("graph:\n  generate: {family: complete, params: {n: 3}}\nbench:\n  sizes: [500, 1500]\n")
    commands = {
        "run": (["run", "--config", str(cfg), "--policy", "random", "--query-id", "2"],
                ["trajectory.jsonl"]),
        "train": (["train", "--config", str(cfg)], ["curve.tsv", "policy.json", "checkpoints/policy_00002.json"]),
        "fingerprint": (["fingerprint", str(edges), "-M", "8"], ["fingerprint.tsv"]),
        "bench": (["bench", "--config", str(bench)], []),
    }
    checked = 0
    outputs = {}
    for rep in ("a", "b"):
        for name, (argv, files) in commands.items():
            out = tmp_path / rep / name
            assert main(argv + ["--quiet", "--out", str(out)]) == EXIT_OK
            outputs[(rep, name)] = {f: (out / f).read_bytes() for f in files}
            if name == "run":
                outputs[(rep, name)]["log_digest"] = json.loads((out / "run_summary.json").read_text())["log_digest"]
            if name == "bench":
                # wall-clock columns are measurements; the deterministic columns must match
                rows = (out / "bench.tsv").read_text().splitlines()
                outputs[(rep, name)]["bench"] = [tuple(r.split("\t")[i] for i in (0, 1, 2, 4)) for r in rows[2:]]
                outputs[(rep, name)]["header"] = rows[:2]
        out = tmp_path / rep / "train"
        assert main(["adapt", "--quiet", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        outputs[(rep, "adapt")] = {f: (out / f).read_bytes() for f in ("adapt_curve.tsv", "adapter.json")}
    for name in list(commands) + ["adapt"]:
        assert outputs[("a", name)] == outputs[("b", name)], name
        checked += len(outputs[("a", name)])
    record_property("detail", f"{checked} artifacts byte-identical across reruns")
