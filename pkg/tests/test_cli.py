from __future__ import annotations

import json
import os

import pytest

from gdistill.checkpoint import file_digest
from gdistill.cli import EXIT_CONFIG, EXIT_LOCKED, EXIT_OK, EXIT_RUNTIME, main
from gdistill.tools import registry

SMALL = """\
seed: 3
graph:
  planted: {graphs: 2, n: 20, mean_degree: 2.5}
tasks:
  templates: [neighborhood-top-k]
  per_graph: 3
train:
  iters: 3
  rollouts_per_iter: 4
  save_every: 2
  eval_episodes: 4
ppo:
  batch: 8
stta:
  steps: 2
  K: 2
  R: 2
  M: 4
  hidden: 8
  templates: [neighborhood-top-k]
adapt:
  graph: {family: barabasi-albert, params: {n: 25, m: 2}, seed: 5}
  held_out: 2
  eval_rollouts: 2
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def read(path):
    return path.read_text(encoding="utf-8")


def test_tools_list(capsys):
    assert main(["tools", "list"]) == EXIT_OK
    text = capsys.readouterr().out
    assert all(t.tool_id in text for t in registry())
    assert main(["tools", "list", "--format", "manifest"]) == EXIT_OK
    assert capsys.readouterr().out.strip()


def test_run_scripted_example(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", "path_example", "--out", str(out)]) == EXIT_OK
    summary = json.loads(read(out / "run_summary.json"))
    assert summary["N"] == 2 and summary["success"] == 1
    lines = read(out / "trajectory.jsonl").splitlines()
    assert len(lines) == 2
    assert "N=2" in capsys.readouterr().out
    assert main(["run", "--quiet", "--config", "cycle_example", "--out", str(tmp_path / "c")]) == EXIT_OK
    assert json.loads(read(tmp_path / "c" / "run_summary.json"))["success"] == 1


def test_run_is_reproducible(tmp_path, small_cfg):
    for d in ("a", "b"):
        assert main(["run", "--quiet", "--config", str(small_cfg), "--policy", "random", "--query-id", "1",
                     "--out", str(tmp_path / d)]) == EXIT_OK
    assert read(tmp_path / "a" / "trajectory.jsonl") == read(tmp_path / "b" / "trajectory.jsonl")
    assert read(tmp_path / "a" / "run_summary.json") == read(tmp_path / "b" / "run_summary.json")


def test_train_then_adapt(tmp_path, small_cfg, capsys):
    out = tmp_path / "t"
    assert main(["train", "--quiet", "--config", str(small_cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoints" / "policy_00000.json").exists()
    assert (out / "checkpoints" / "policy_00002.json").exists()
    curve = read(out / "curve.tsv").splitlines()
    assert curve[0].startswith("# config_hash=") and curve[1] == "iter\treturn\tN\tfinal_gdl\tsuccess"
    assert len(curve) == 2 + 3
    report = json.loads(read(out / "train_report.json"))
    assert report["iters"] == 3 and "eval_success" in report
    digest = file_digest(out / "policy.json")
    assert main(["adapt", "--config", str(small_cfg), "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "base policy unchanged: True" in text
    assert file_digest(out / "policy.json") == digest
    rep = json.loads(read(out / "adapt_report.json"))
    assert rep["policy_unchanged"] is True
    assert len(read(out / "adapt_curve.tsv").splitlines()) == 2 + 2


def test_train_is_byte_reproducible(tmp_path, small_cfg):
    for d in ("a", "b"):
        assert main(["train", "--quiet", "--config", str(small_cfg), "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("curve.tsv", "policy.json", "train_report.json"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)


def test_fingerprint_command(tmp_path):
    edges = tmp_path / "k4.edges"
    edges.write_text("0 1\n0 2\n0 3\n1 2\n1 3\n2 3\n")
    out = tmp_path / "f"
    assert main(["fingerprint", str(edges), "-M", "3", "--out", str(out), "--quiet"]) == EXIT_OK
    rows = read(out / "fingerprint.tsv").splitlines()[2:]
    sig = [float(r.split("\t")[1]) for r in rows]
    assert sig == pytest.approx([0, 4 / 3, 4 / 3, 4 / 3], abs=1e-10)
    assert main(["fingerprint", str(edges), "-M", "4", "--out", str(out), "--quiet"]) == EXIT_CONFIG


def test_bench_small(tmp_path):
    cfg = tmp_path / "b.yaml"
    cfg.write_text("graph:\n  generate: {family: complete, params: {n: 3}}\nbench:\n  sizes: [300]\n")
    assert main(["bench", "--quiet", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    row = read(tmp_path / "o" / "bench.tsv").splitlines()[2].split("\t")
    assert int(row[0]) == 300 and int(row[2]) == 6 and int(row[4]) <= 512


def test_exit_codes(tmp_path, small_cfg, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["run", "--quiet", "--config", str(small_cfg), "--query-id", "999",
                 "--out", str(tmp_path / "q")]) == EXIT_CONFIG
    assert main(["adapt", "--quiet", "--config", str(small_cfg), "--checkpoint", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "n")]) == EXIT_RUNTIME
    locked = tmp_path / "locked"
    locked.mkdir()
    (locked / ".gdistill.lock").write_text(str(os.getpid()))
    assert main(["run", "--quiet", "--config", "path_example", "--out", str(locked)]) == EXIT_LOCKED
    stale = tmp_path / "stale"
    stale.mkdir()
    (stale / ".gdistill.lock").write_text("999999999")
    assert main(["run", "--quiet", "--config", "path_example", "--out", str(stale)]) == EXIT_OK
    assert not (stale / ".gdistill.lock").exists()
    capsys.readouterr()


def test_global_flags_after_subcommand(tmp_path):
    assert main(["--quiet", "run", "--config", "path_example", "--out", str(tmp_path / "x")]) == EXIT_OK
    assert (tmp_path / "x" / "run_summary.json").exists()
