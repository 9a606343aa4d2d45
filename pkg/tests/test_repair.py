from __future__ import annotations

import ipaddress
import itertools
import random

import networkx as nx
import pytest

from routefix.config import patched_corpus
from routefix.harness import NetBuilder
from routefix.repair import (MISSING_PEER, PREFERENCE, REDISTRIBUTION, SEND_RECEIVE, CostConstraint, CostEdge,
                             CostUnsolvable, PatchConflict, diagnose, fallback_static_routes, generate_patches,
                             modified_line_ratio, repair_ospf_costs, solve_ospf_costs)
from routefix.requirements import Requirement
from routefix.rpg import build_ft_rpg, build_rpg
from routefix.sim import check_path, simulate, verify
from routefix.symsim import run_symbolic, run_symbolic_ft


def _rows(patches):
    return [(str(p.loc), p.op, p.command.strip()) for p in patches]


def _config_lines(corpus) -> int:
    # non-blank lines that are not "!" separators
    return sum(1 for t in corpus.texts.values() for ln in t.splitlines() if ln.strip() not in ("", "!"))


def _diagnose(sc):
    net = simulate(sc.corpus)
    if any(r.k for r in sc.requirements):
        res = run_symbolic_ft(net, build_ft_rpg(sc.requirements, net))
    else:
        res = run_symbolic(net, build_rpg(sc.requirements, net, verify(sc.requirements, net)))
    return net, diagnose(res.deviations, sc.corpus, net)


def test_running_example_diagnoses_and_patches(load):
    sc = load("fig2")
    net, ds = _diagnose(sc)
    assert [d.category for d in ds] == [REDISTRIBUTION, PREFERENCE]
    assert [d.condition.ident for d in ds] == ["Cond1", "Cond2"]
    patches = generate_patches(ds, sc.corpus, net)
    assert _rows(patches) == [
        ("D.cfg:19", "add", "redistribute static"),
        ("A.cfg:24", "add", "route-map FROM_D permit 5"),
        ("A.cfg:24", "add", "match prefix 192.168.4.0/24"),
        ("A.cfg:24", "add", "set local-preference 201"),
    ]
    fixed = patched_corpus(sc.corpus, patches)
    assert all(v.satisfied for v in verify(sc.requirements, simulate(fixed)))
    assert modified_line_ratio(patches, sc.corpus) == pytest.approx(4 / _config_lines(sc.corpus))


def test_multiprotocol_diagnosis(load):
    sc = load("fig5")
    _, ds = _diagnose(sc)
    (d,) = ds
    assert d.category == MISSING_PEER
    assert {loc.file for loc in d.locations} == {"C1.cfg", "C3.cfg"}


def test_fault_tolerant_patches(load):
    sc = load("fig6")
    net, ds = _diagnose(sc)
    assert [d.category for d in ds] == [MISSING_PEER, MISSING_PEER, SEND_RECEIVE]
    # the overlay only removes the deny clause; the sessions are fixed in the underlay
    assert _rows(generate_patches(ds, sc.corpus, net)) == [
        ("B.cfg:22", "delete", "route-map FROM_C2 deny 10"),
        ("B.cfg:23", "delete", "match prefix 200.0.3.0/24"),
    ]


def test_no_diagnoses_no_patches(load):
    sc = load("fig2_correct")
    net, ds = _diagnose(sc)
    assert ds == [] and generate_patches(ds, sc.corpus, net) == []


# ---------------------------------------------------------------- OSPF costs

def _e(a, b):
    return CostEdge(a, b, "eth0")


def test_waypoint_cost_inequality():
    a, b = _e("C1", "C4"), _e("C4", "C3")
    x, y = _e("C1", "C2"), _e("C2", "C3")
    got = solve_ospf_costs([CostConstraint((a, b), (x, y))], {a: 10, b: 10, x: 1, y: 1})
    # a = b = 1, then the smallest right-hand edge (ties broken by name) goes up by one
    assert got == {a: 1, b: 1, x: 2, y: 1}


def test_single_symbol_drops_to_one():
    a, x = _e("A", "B"), _e("A", "C")
    assert solve_ospf_costs([CostConstraint((a,), (x,))], {a: 20, x: 10}) == {a: 1, x: 10}


def test_satisfied_constraints_are_untouched():
    a, x = _e("A", "B"), _e("A", "C")
    assert solve_ospf_costs([CostConstraint((a,), (x,))], {a: 3, x: 10}) == {a: 3, x: 10}


def test_all_symbolic_contradiction():
    a, b = _e("A", "B"), _e("B", "A")
    with pytest.raises(CostUnsolvable):
        solve_ospf_costs([CostConstraint((a,), (b,)), CostConstraint((b,), (a,))], {a: 5, b: 5})


def _exhaustive(constraints, edges, top):
    for values in itertools.product(range(1, top + 1), repeat=len(edges)):
        costs = dict(zip(edges, values))
        if all(c.holds(costs) for c in constraints):
            return costs
    return None


@pytest.mark.parametrize("seed", range(40))
def test_solver_agrees_with_exhaustive_search(seed):
    rng = random.Random(seed)
    edges = [_e(f"R{i}", f"R{(i + 1) % 5}") for i in range(5)]
    constraints = []
    for _ in range(rng.randint(1, 3)):
        lhs = tuple(rng.sample(edges, rng.randint(1, 2)))
        rhs = tuple(rng.sample([e for e in edges if e not in lhs], rng.randint(1, 3)))
        constraints.append(CostConstraint(lhs, rhs))
    concrete = {e: rng.randint(1, 12) for e in edges}
    feasible = _exhaustive(constraints, edges, 6) is not None
    try:
        got = solve_ospf_costs(constraints, concrete)
    except CostUnsolvable:
        assert not feasible or any(not set(c.rhs) - {e for d in constraints for e in d.lhs}
                                   for c in constraints)
        return
    assert all(c.holds(got) for c in constraints)
    assert all(v >= 1 for v in got.values())
    assert feasible or _exhaustive(constraints, edges, 16) is not None


def test_waypoint_repair_by_costs(load):
    sc = load("ospf_waypoint")
    net = simulate(sc.corpus)
    (req,) = sc.requirements
    assert verify([req], net)[0].path == ("C1", "C2", "C3")
    patches, costs, constraints = repair_ospf_costs([(req, ("C1", "C4", "C3"))], net)
    assert [str(c) for c in constraints][0] == "C1->C4 + C4->C3 < C1->C2 + C2->C3"
    assert {str(e): c for e, c in costs.items() if c != 10 or str(e) in ("C1->C4", "C4->C3")} == {
        "C1->C4": 1, "C4->C3": 1, "C1->C2": 2, "C2->C3": 1, "C2->C1": 1, "C3->C2": 1}
    (v,) = verify([req], simulate(patched_corpus(sc.corpus, patches)))
    assert v.satisfied and v.path == ("C1", "C4", "C3")


def _random_ospf(rng):
    names = [f"R{i}" for i in range(5)]
    b = NetBuilder()
    for r in names:
        b.router(r, ospf=True)
    g = nx.cycle_graph(names)
    g.add_edges_from((a, c) for a, c in itertools.combinations(names, 2) if rng.random() < 0.3)
    for a, c in sorted(g.edges):
        b.link(a, c, cost=rng.randint(1, 10))
    return b.corpus(), g


@pytest.mark.parametrize("seed", range(20))
def test_any_simple_path_can_be_forced(seed):
    rng = random.Random(seed)
    corpus, g = _random_ospf(rng)
    src, dst = "R0", rng.choice(["R2", "R3"])
    path = tuple(rng.choice(sorted(nx.all_simple_paths(g, src, dst))))
    prefix = ipaddress.IPv4Network(f"{corpus[dst].loopback_ip()}/32")
    req = Requirement(src, dst, prefix, "".join(path))
    net = simulate(corpus)
    patches, _, _ = repair_ospf_costs([(req, path)], net)
    assert check_path(simulate(patched_corpus(corpus, patches)), req).path == path


# ---------------------------------------------------------------- static fallback

def test_static_fallback_pins_path(load):
    sc = load("ospf_waypoint")
    net = simulate(sc.corpus)
    (req,) = sc.requirements
    patches = fallback_static_routes([(req, ("C1", "C4", "C3"))], net)
    assert [p.command for p in patches] == ["ip route 4.4.4.3/32 10.0.3.2", "ip route 4.4.4.3/32 10.0.4.1"]
    (v,) = verify([req], simulate(patched_corpus(sc.corpus, patches)))
    assert v.satisfied


def test_static_fallback_rejects_two_next_hops(load):
    sc = load("ospf_waypoint")
    net = simulate(sc.corpus)
    (req,) = sc.requirements
    with pytest.raises(PatchConflict):
        fallback_static_routes([(req, ("C1", "C4", "C3")), (req, ("C1", "C2", "C3"))], net)
