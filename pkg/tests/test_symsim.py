from __future__ import annotations

import ipaddress
import random

import pytest

from routefix.config import parse_texts
from routefix.harness import NetBuilder
from routefix.requirements import Requirement
from routefix.rpg import UnsatisfiableConflict, build_ft_rpg, build_rpg
from routefix.sim import Protocol, simulate, verify
from routefix.symsim import IS_EXPORT, IS_IMPORT, PEER, PREFER, Condition, condition_holds, derive_underlay_reqs, \
    run_symbolic, run_symbolic_ft


def _standard(sc):
    net = simulate(sc.corpus)
    rpg = build_rpg(sc.requirements, net, verify(sc.requirements, net))
    return net, run_symbolic(net, rpg)


def _ft(sc):
    net = simulate(sc.corpus)
    return net, run_symbolic_ft(net, build_ft_rpg(sc.requirements, net))


def test_running_example_conditions(load):
    _, res = _standard(load("fig2"))
    c1, c2 = res.deviations
    assert (c1.ident, c1.kind, str(c1.src), str(c1.dst)) == ("Cond1", IS_EXPORT, "D.STATIC", "D.BGP")
    assert (c2.ident, c2.kind, c2.router) == ("Cond2", PREFER, "A")
    assert c2.route.next_hop == "D" and c2.other.next_hop == "B"
    (row,) = res.routes_json()["S"]
    assert row["conditions"] == ["Cond1", "Cond2"]
    assert row["route"]["as_path"] == [2, 4]


def test_correct_network_has_no_deviations(load):
    _, res = _standard(load("fig2_correct"))
    assert len(res.deviations) == 0
    assert all(not row["conditions"] for rows in res.routes_json().values() for row in rows)


def test_multiprotocol_peer_condition(load):
    sc = load("fig5")
    _, res = _standard(sc)
    (c,) = res.deviations
    assert (c.kind, c.protocol, c.router, c.peer) == (PEER, Protocol.BGP, "C1", "C3")
    got = [(r.src, r.dst, str(r.prefix), r.path_regex, r.k) for r in derive_underlay_reqs(res.deviations, sc.corpus)]
    assert got == [("C1", "C3", "4.4.4.3/32", "C1*C3", 0), ("C3", "C1", "4.4.4.1/32", "C3*C1", 0)]


def test_fault_tolerant_conditions(load):
    sc = load("fig6")
    _, res = _ft(sc)
    kinds = {(c.kind, c.router, c.peer or c.src.router) for c in res.deviations}
    assert kinds == {(PEER, "C1", "C3"), (PEER, "C2", "C3"), (IS_IMPORT, "B", "C2")}
    # S keeps both disjoint routes as simultaneous bests
    assert sorted(r.learned_from for r in res.best["S"]) == ["A", "B"]
    under = derive_underlay_reqs(res.deviations, sc.corpus, k=1)
    assert all(r.k == 1 for r in under)
    assert {(r.src, r.dst) for r in under} == {("C1", "C3"), ("C3", "C1"), ("C2", "C3"), ("C3", "C2")}


def _diamond():
    b = NetBuilder()
    for i, r in enumerate(["S", "A", "B", "D"]):
        b.router(r, 65001 + i)
    for x, y in (("S", "A"), ("S", "B"), ("A", "D"), ("B", "D")):
        b.link(x, y)
    b.ebgp_all()
    b.stub("D", "10.60.0.0/24")
    b.network("D", "10.60.0.0/24")
    return b.corpus()


def test_clean_diamond_fault_tolerant():
    net = simulate(_diamond())
    req = Requirement("S", "D", ipaddress.IPv4Network("10.60.0.0/24"), "S*D", 1)
    res = run_symbolic_ft(net, build_ft_rpg([req], net))
    assert len(res.deviations) == 0
    assert sorted(r.learned_from for r in res.best["S"]) == ["A", "B"]


def test_direct_peers_need_no_underlay(load):
    c = load("fig2").corpus
    cond = Condition(PEER, Protocol.BGP, "S", "A")
    assert derive_underlay_reqs([cond], c) == []


def test_underlay_keeps_largest_k(load):
    c = load("fig5").corpus
    cond = Condition(PEER, Protocol.BGP, "C1", "C3")
    reqs = derive_underlay_reqs([cond, cond], c, k=2)
    assert [r.k for r in reqs] == [2, 2]


# ---------------------------------------------------------------- property: deviations are exactly the failed expectations

def _random_case(seed: int):
    rng = random.Random(seed)
    n = rng.randint(3, 7)
    names = [f"R{i}" for i in range(n)]
    b = NetBuilder()
    for i, r in enumerate(names):
        b.router(r, 65000 + i)
    edges = {(names[rng.randrange(i)], names[i]) for i in range(1, n)}
    edges |= {(a, c) for i, a in enumerate(names) for c in names[i + 1:] if rng.random() < 0.35}
    for a, c in sorted(edges):
        b.link(a, c)
    b.ebgp_all()
    dst = names[-1]
    b.stub(dst, "10.70.0.0/24")
    if rng.random() < 0.7:
        b.network(dst, "10.70.0.0/24")
    for r in names[:-1]:
        if rng.random() < 0.3:
            b.policy(r, f"route-map DROP{r} deny 10\n match prefix 10.70.0.0/24")
    corpus = b.corpus()
    texts = dict(corpus.texts)
    # attach the deny maps as import policies on a random session of their owner
    for r in names[:-1]:
        dev = corpus[r]
        if f"DROP{r}" in dev.route_policies and dev.bgp.neighbors:
            nb = rng.choice(dev.bgp.neighbors)
            lines = texts[nb.loc.file].split("\n")
            lines.insert(nb.loc.line, f" neighbor {nb.peer_ip} route-map DROP{r} in")
            texts[nb.loc.file] = "\n".join(lines)
    src = rng.choice(names[:-1])
    return parse_texts(texts), Requirement(src, dst, ipaddress.IPv4Network("10.70.0.0/24"), f"{src}*{dst}")


@pytest.mark.parametrize("seed", range(40))
def test_deviations_are_failed_expectations(seed):
    corpus, req = _random_case(seed)
    net = simulate(corpus)
    verdicts = verify([req], net)
    try:
        rpg = build_rpg([req], net, verdicts)
    except UnsatisfiableConflict:
        return
    res = run_symbolic(net, rpg)
    if verdicts[0].satisfied:
        assert len(res.deviations) == 0
        return
    assert len(res.deviations) > 0
    for c in res.deviations:
        assert not condition_holds(c, res.deviations.evidence[c], net), str(c)
    assert [c.ident for c in res.deviations] == [f"Cond{i}" for i in range(1, len(res.deviations) + 1)]
