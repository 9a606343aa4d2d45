from __future__ import annotations

import json

import networkx as nx
import pytest

from routefix.harness import (CATEGORIES, ErrorSpec, InvalidK, TargetNotApplicable, bench, end_to_end, fattree_size,
                              gen_fattree, gen_fattree_pinned, gen_wan, inject, parse_errors, parse_seeds, scenario)
from routefix.sim import simulate, verify


@pytest.mark.parametrize("k, switches, prefixes", [(4, 20, 16), (6, 45, 54), (8, 80, 128)])
def test_fattree_sizes(k, switches, prefixes):
    sc = gen_fattree(k)
    assert fattree_size(k) == (switches, prefixes)
    assert len(sc.corpus) == switches
    assert len({r.prefix for r in sc.requirements}) == prefixes


def test_fattree_wiring():
    sc = gen_fattree(4)
    net = simulate(sc.corpus)
    g = nx.Graph([l.routers for l in net.all_links])
    degree = {n: d for n, d in g.degree()}
    assert all(d == 4 for n, d in degree.items() if n.startswith(("core", "p")) and "edge" not in n)
    # edge switches: 2 uplinks plus their stub interfaces, which are not links
    assert all(degree[n] == 2 for n in g if "edge" in n)
    assert nx.is_connected(g)
    assert all(v.satisfied for v in verify(sc.requirements, net))


@pytest.mark.parametrize("k", [0, 2, 3, 5])
def test_invalid_arity(k):
    with pytest.raises(InvalidK):
        gen_fattree(k)


def test_wan_fixture():
    sc = gen_wan()
    assert len(sc.corpus) == 8 and len(sc.requirements) == 12
    assert all(v.satisfied for v in verify(sc.requirements, simulate(sc.corpus)))


def test_pinned_requirements_hold_and_name_paths():
    sc = gen_fattree_pinned(4)
    net = simulate(sc.corpus)
    for v in verify(sc.requirements, net):
        assert v.satisfied and " ".join(v.path) == v.requirement.path_regex


def test_injection_reproduces_running_example(load):
    good, bad = load("fig2_correct"), load("fig2")
    step = inject(good.corpus, ErrorSpec("redistribution", "D", 0))
    assert step.description == "D: drop redistribute static"
    step = inject(step.corpus, ErrorSpec("preference", "A", 0))
    assert step.description == "A: FROM_B 10 local-preference 100->200"
    assert step.corpus.texts == bad.corpus.texts


def test_injection_is_seeded(load):
    c = gen_wan()
    a = inject(c.corpus, ErrorSpec("send_receive", None, 7), c.requirements)
    b = inject(c.corpus, ErrorSpec("send_receive", None, 7), c.requirements)
    assert a.edits == b.edits and a.corpus.texts == b.corpus.texts
    assert not all(v.satisfied for v in verify(c.requirements, simulate(a.corpus)))


def test_not_applicable(load):
    sc = gen_fattree(4)
    with pytest.raises(TargetNotApplicable):
        inject(sc.corpus, ErrorSpec("ospf_cost"))
    with pytest.raises(TargetNotApplicable):
        inject(sc.corpus, ErrorSpec("redistribution", "core00"))
    with pytest.raises(ValueError):
        ErrorSpec("typo")


def test_end_to_end_running_example(load):
    sc = load("fig2_correct")
    specs = [ErrorSpec("redistribution", "D", 0), ErrorSpec("preference", "A", 0)]
    board = end_to_end(sc.corpus, sc.requirements, specs)
    assert board.repaired and board.status == "repaired"
    assert board.diagnoses == 2 and board.violated == 1 and board.regressed == []


def test_zero_injections_is_a_clean_run(load):
    sc = load("fig2_correct")
    board = end_to_end(sc.corpus, sc.requirements, [])
    assert board.repaired and board.status == "verified" and board.patches == 0


@pytest.mark.parametrize("category", ["redistribution", "missing_peer", "send_receive", "preference"])
def test_pinned_fattree_twenty_seeds(category):
    sc = gen_fattree_pinned(4)
    for seed in range(20):
        board = end_to_end(sc.corpus, sc.requirements, [ErrorSpec(category, None, seed)])
        assert board.repaired, (seed, board.status, board.error)
        assert board.modified_line_ratio < 0.05


def test_bench_report_is_deterministic():
    sc = scenario("wan")
    a = bench(sc, parse_errors("preference,send_receive"), parse_seeds("0..2"))
    b = bench(sc, parse_errors("preference,send_receive"), parse_seeds("0..2"))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["summary"]["runs"] == 3 and a["summary"]["repaired"] == a["summary"]["applicable"]


def test_parse_errors_and_seeds():
    assert parse_errors("preference:3, redistribution") == [("preference", 3), ("redistribution", 1)]
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("1,4,9") == [1, 4, 9]
    assert parse_seeds("5") == [5]
    with pytest.raises(ValueError):
        parse_errors("nonsense:2")
    assert set(CATEGORIES) == {"redistribution", "missing_peer", "send_receive", "preference", "ospf_peer",
                               "ospf_cost"}


def test_scenario_names(load):
    assert scenario("fattree:4").name == "fattree4"
    assert scenario("fattree-pinned:4").name == "fattree4-pinned"
    assert scenario("fig2").corpus.texts == load("fig2").corpus.texts
