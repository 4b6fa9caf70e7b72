from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdistill.demos import planted_tasks
from gdistill.diagnostics import (JointTable, MarkovViolation, check_markov, distillation_curves, dpi_bound_check,
                                  empirical_mi, entropy, exact_mi, random_markov_table, toy_tasks)
from gdistill.env import EnvConfig, random_policy, run_episode, script_for, scripted_policy
from gdistill.memory import ContractError


def loop_cmi(p):
    """I(A;B|C) in bits by explicit loops over a 3-axis array (a, b, c)."""
    total = 0.0
    na, nb, nc = p.shape
    for k in range(nc):
        pc = sum(p[i, j, k] for i in range(na) for j in range(nb))
        for i in range(na):
            pac = sum(p[i, j, k] for j in range(nb))
            for j in range(nb):
                pbc = sum(p[ii, j, k] for ii in range(na))
                if p[i, j, k] > 0:
                    total += p[i, j, k] * np.log2(p[i, j, k] * pc / (pac * pbc))
    return total


def test_mi_examples():
    indep = JointTable(("a", "b"), np.outer([0.3, 0.7], [0.5, 0.25, 0.25]))
    assert abs(exact_mi(indep, "a", "b")) <= 1e-12
    copy = JointTable(("a", "b"), np.diag([0.5, 0.5]))
    assert exact_mi(copy, "a", "b") == pytest.approx(1.0, abs=1e-12)
    four = JointTable(("a", "b"), np.eye(4) / 4)
    assert exact_mi(four, "a", "b") == pytest.approx(2.0, abs=1e-12)
    assert entropy(four, "a") == pytest.approx(2.0, abs=1e-12)


def test_xor_conditional_information():
    # a, b fair independent bits, c = a xor b: I(a;b)=0, I(a;b|c)=1
    p = np.zeros((2, 2, 2))
    for a, b in itertools.product((0, 1), repeat=2):
        p[a, b, a ^ b] = 0.25
    j = JointTable(("a", "b", "c"), p)
    assert abs(exact_mi(j, "a", "b")) <= 1e-12
    assert exact_mi(j, "a", "b", "c") == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.6))
def test_conditional_mi_matches_loop_oracle(seed, sparsity):
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in rng.integers(1, 4, 3))
    w = rng.gamma(0.5, size=shape) * (rng.random(shape) >= sparsity)
    if w.sum() == 0:
        w.flat[0] = 1.0
    j = JointTable(("a", "b", "c"), w / w.sum())
    assert exact_mi(j, "a", "b", "c") == pytest.approx(loop_cmi(j.probs), abs=1e-10)
    # chain rule I(a;(b,c)) = I(a;c) + I(a;b|c)
    assert exact_mi(j, "a", ("b", "c")) == pytest.approx(exact_mi(j, "a", "c") + exact_mi(j, "a", "b", "c"),
                                                         abs=1e-10)
    assert exact_mi(j, "a", "b", "c") >= -1e-12


def test_dpi_holds_on_random_markov_tables():
    rng = np.random.default_rng(0)
    for i in range(300):
        sizes = tuple(int(s) for s in rng.integers(2, 5, 4))
        rep = dpi_bound_check(random_markov_table(rng, sizes, sparsity=0.3 if i % 2 else 0.0))
        assert rep.ok, rep.to_dict()


def test_non_markov_table_is_rejected():
    # m copies y directly, bypassing x
    p = np.zeros((2, 1, 1, 2))
    p[0, 0, 0, 0] = p[1, 0, 0, 1] = 0.5
    with pytest.raises(MarkovViolation) as err:
        check_markov(JointTable(("Y", "IR", "X", "m"), p))
    assert err.value.deviation == pytest.approx(0.5)


def test_table_validation():
    with pytest.raises(ContractError):
        JointTable(("a", "b"), np.full((2, 2), 0.3))
    with pytest.raises(ContractError):
        JointTable(("a",), np.full((2, 2), 0.25))
    with pytest.raises(ContractError):
        JointTable(("a", "a"), np.full((2, 2), 0.25))
    j = JointTable(("a", "b"), np.full((2, 2), 0.25))
    with pytest.raises(ContractError):
        exact_mi(j, "a", "a")
    with pytest.raises(ContractError):
        exact_mi(j, "a", "z")


def test_empirical_mi_of_copied_labels():
    pairs = [(i % 4, i % 4) for i in range(400)]
    assert empirical_mi(pairs) == pytest.approx(2.0, abs=1e-12)


def test_distillation_curves_from_log():
    tasks = planted_tasks(2, 3, n=20, seed=1)
    lines = []
    for i, (g, q) in enumerate(tasks):
        pol = scripted_policy(script_for(q)) if i % 2 else random_policy
        lines += run_episode(pol, g, q, EnvConfig(), seed=i).to_lines()
    lines.insert(3, "{not json")
    series = distillation_curves(lines)
    assert len(series.episodes) == len(tasks)
    assert series.skipped == 1
    assert series.max_recompute_error <= 1e-12
    for ep in series.episodes:
        assert len(ep.gdl) == len(ep.delta_gdl) + 1
        gb, ga = np.array(ep.gdl[:-1]), np.array(ep.gdl[1:])
        assert np.allclose(ep.delta_gdl, np.tanh((gb - ga) / (gb + 1e-8)), atol=1e-12)
        assert np.allclose(ep.delta_rel, np.diff(ep.rel), atol=1e-12)
    assert 0.0 <= series.frac_gdl_decrease <= 1.0


def test_toy_family_is_deterministic_and_solvable():
    a, b = toy_tasks(), toy_tasks()
    assert [q.to_dict() for _, q in a] == [q.to_dict() for _, q in b]
    for g, q in a[:10]:
        assert run_episode(scripted_policy(script_for(q)), g, q, EnvConfig()).terminal_eval == 1
