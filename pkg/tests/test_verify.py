import json

from mpctrees.decompose import mpc_decompose_bounded, mpc_decompose_general
from mpctrees.forest import TreeGenSpec, generate, load_forest
from mpctrees.runtime import MpcConfig, RoundLog
from mpctrees.verify import (Report, check_budgets, check_maximal_matching, check_mis, check_proper_coloring,
                             dense_rank, oracle_compare_layers, reference_layers, reference_recolor)


def test_proper_coloring_clauses():
    f = load_forest("1 2\n2 3\n")
    assert check_proper_coloring(f, {1: 1, 2: 2, 3: 1}).ok
    assert check_proper_coloring(f, {1: 1, 2: 1, 3: 2}).clauses() == {"monochromatic"}
    assert check_proper_coloring(f, {1: 1, 2: 4, 3: 1}).clauses() == {"palette"}
    assert check_proper_coloring(f, {1: 1, 2: 2}).clauses() == {"missing"}


def test_mis_clauses():
    f = load_forest("1 2\n2 3\n")
    assert check_mis(f, {1, 3}).ok
    assert check_mis(f, {1, 2}).clauses() == {"independence"}
    assert check_mis(f, {1}).clauses() == {"maximality"}
    assert "unknown" in check_mis(f, {1, 3, 9}).clauses()


def test_matching_clauses():
    f = load_forest("1 2\n2 3\n3 4\n")
    assert check_maximal_matching(f, {(1, 2), (3, 4)}).ok
    assert check_maximal_matching(f, {(2, 3)}).ok
    assert check_maximal_matching(f, {(1, 2)}).clauses() == {"maximality"}
    assert check_maximal_matching(f, {(1, 2), (2, 3)}).clauses() >= {"degree"}
    assert "not-an-edge" in check_maximal_matching(f, {(1, 3)}).clauses()


def test_budget_report_names_round_and_machine():
    cfg = MpcConfig(local_cap_words=10)
    log = RoundLog()
    log.charge([3, 4], ["a", "b"])
    log.charge([20, 1], ["big", "small"])
    rep = check_budgets(log, cfg, {}, 100, 99)
    assert not rep.ok
    (v,) = rep.violations
    assert v.subject == 2 and v.clause == "local" and "big" in v.detail
    assert check_budgets(log, cfg, {0: 25}, 100, 99).ok


def test_budget_report_on_general_run():
    f = generate(TreeGenSpec("random_pruefer", 2**16, 0))
    cfg = MpcConfig()
    d, log = mpc_decompose_general(f, cfg)
    assert check_budgets(log, cfg, {p.phase: p.budget for p in d.phases}, f.n, f.m).ok


def test_oracle_compare_detects_corruption():
    f = generate(TreeGenSpec("random_bounded", 300, 4, 4))
    d, _ = mpc_decompose_bounded(f)
    layer = d.layer
    assert oracle_compare_layers(f, layer).ok
    layer[1] += 1
    rep = oracle_compare_layers(f, layer)
    assert rep.clauses() == {"layer-mismatch"}
    assert [v.subject for v in rep.violations] == [1]


def test_oracle_compare_renumbered():
    f = generate(TreeGenSpec("random_bounded", 300, 4, 4))
    shifted = {v: 10 * x + 7 for v, x in reference_layers(f).items()}
    assert not oracle_compare_layers(f, shifted).ok
    assert oracle_compare_layers(f, shifted, renumber=True).ok


def test_dense_rank():
    assert dense_rank({1: 5, 2: 9, 3: 5, 4: 40}) == {1: 1, 2: 2, 3: 1, 4: 3}


def test_reference_recolor_fixes_clash():
    f = load_forest("1 2\n")
    assert reference_recolor(f, {1: 1, 2: 2}, {1: 1, 2: 1}) == {1: 2, 2: 1}


def test_report_json():
    rep = Report()
    assert json.loads(rep.to_json()) == {"ok": True, "violations": []}
    rep.add((1, 2), "monochromatic", "both 1")
    data = json.loads(rep.to_json())
    assert data["ok"] is False and data["violations"][0]["subject"] == [1, 2]
    assert "monochromatic" in str(rep)


def test_general_run_on_large_star_is_within_budget():
    f = generate(TreeGenSpec("star", 10**4))
    cfg = MpcConfig()
    d, log = mpc_decompose_general(f, cfg)
    assert check_budgets(log, cfg, {p.phase: p.budget for p in d.phases}, f.n, f.m).ok
