from __future__ import annotations

import ipaddress
import itertools
import json
import random
import re

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routefix.requirements import (NoCompliantPath, RegexSyntaxError, Requirement, RequirementError,
                                   RoutingTopology, UnknownRouterSymbol, compile_regex, enumerate_paths,
                                   load_requirements)
from routefix.sim import simulate

ALPHA = ("A", "B", "C", "D")


def words(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


# A tiny regex generator that renders every expression twice: once in the
# routefix dialect and once as a Python ``re`` pattern over space-joined words.

def _atoms():
    sym = st.sampled_from(ALPHA).map(lambda s: (s, re.escape(s) + " "))
    any_one = st.just((".", r"\w+ "))
    wild = st.just(("*", r"(?:\w+ )*"))
    return st.one_of(sym, sym, any_one, wild)


def _extend(inner):
    cat = st.lists(inner, min_size=2, max_size=3).map(
        lambda xs: (" ".join(x[0] for x in xs), "".join(x[1] for x in xs)))
    alt = st.tuples(inner, inner).map(lambda p: (f"({p[0][0]}|{p[1][0]})", f"(?:{p[0][1]}|{p[1][1]})"))
    star = inner.map(lambda x: (f"({x[0]})*", f"(?:{x[1]})*"))
    opt = inner.map(lambda x: (f"({x[0]})?", f"(?:{x[1]})?"))
    return st.one_of(cat, alt, star, opt)


regexes = st.recursive(_atoms(), _extend, max_leaves=6)


@settings(max_examples=150, deadline=None)
@given(regexes, st.lists(st.sampled_from(ALPHA), max_size=1, unique=True))
def test_dfa_matches_python_re(pair, excluded):
    ours, theirs = pair
    if excluded:
        ours = f"{ours} ¬{excluded[0]}"
    dfa = compile_regex(ours, ALPHA)
    pat = re.compile(theirs)
    for w in words(ALPHA, 5):
        expect = pat.fullmatch("".join(x + " " for x in w)) is not None and not set(w) & set(excluded)
        assert dfa.accepts(w) == expect, (ours, w)


def test_running_example_language():
    dfa = compile_regex("S*A*D", ["S", "A", "B", "D"])
    assert dfa.accepts(["S", "A", "D"])
    assert dfa.accepts(["S", "B", "A", "D"])
    assert not dfa.accepts(["S", "B", "D"])


def test_single_literal():
    dfa = compile_regex("S", ["S", "A"])
    accepted = [w for w in words(["S", "A"], 4) if dfa.accepts(w)]
    assert accepted == [("S",)]


def test_negated_symbol_rejects_every_word_with_it():
    alpha = ["S", "A", "B", "D"]
    dfa = compile_regex("S*¬B*D", alpha)
    for w in words(alpha, 5):
        expect = len(w) >= 2 and w[0] == "S" and w[-1] == "D" and "B" not in w
        assert dfa.accepts(w) == expect


def test_dfa_is_total():
    dfa = compile_regex("(A|B)* C", ALPHA)
    for q in dfa.states:
        for s in ALPHA:
            assert dfa.step(q, s) in dfa.states


def test_concatenated_names_split_against_alphabet():
    dfa = compile_regex("C1C4C3", ["C1", "C3", "C4", "C13"])
    assert dfa.accepts(["C1", "C4", "C3"])


@pytest.mark.parametrize("bad", ["S(A", "S|)", "S#D", "¬"])
def test_syntax_errors(bad):
    with pytest.raises(RegexSyntaxError):
        compile_regex(bad, ["S", "A", "D"])


def test_unknown_router():
    with pytest.raises(UnknownRouterSymbol):
        compile_regex("S*Q*D", ["S", "D"])


@pytest.mark.parametrize("regex, kind", [
    ("S*D", "reachability"), ("S*A*D", "waypoint"), ("S*¬B*D", "bypass"), ("S(A|B)D", "reachability"),
    ("SABD", "waypoint"),
])
def test_classify(regex, kind):
    assert Requirement("S", "D", ipaddress.IPv4Network("10.0.0.0/8"), regex).kind == kind


def test_requirement_validation(tmp_path):
    with pytest.raises(RequirementError):
        Requirement("S", "S", ipaddress.IPv4Network("10.0.0.0/8"), "S")
    with pytest.raises(RequirementError):
        Requirement("S", "D", ipaddress.IPv4Network("10.0.0.0/8"), "S*D", k=-1)
    p = tmp_path / "r.json"
    p.write_text(json.dumps([{"src": "S", "dst": "D", "prefix": "10.0.0.0/33", "regex": "S*D"}]))
    with pytest.raises(RequirementError):
        load_requirements(p)
    p.write_text("{not json")
    with pytest.raises(RequirementError):
        load_requirements(p)


# ---------------------------------------------------------------- path enumeration

def _brute(graph: dict, dfa, src, dst):
    g = nx.Graph()
    g.add_nodes_from(graph)
    g.add_edges_from((u, v) for u, ns in graph.items() for v in ns)
    return sorted(tuple(p) for p in nx.all_simple_paths(g, src, dst) if dfa.accepts(p))


def test_running_example_paths(load):
    net = simulate(load("fig2").corpus)
    dfa = compile_regex("S*A*D", net.routers)
    found = enumerate_paths(dfa, net.topology, "S", "D", "BGP")
    assert {("S", "A", "D"), ("S", "B", "A", "D")} <= set(found)
    # S-A-B-D also passes through A, so it is compliant too
    assert found == [("S", "A", "B", "D"), ("S", "A", "D"), ("S", "B", "A", "D")]
    assert found == _brute(net.topology.graph("BGP"), dfa, "S", "D")


def test_reversed_traversal(load):
    net = simulate(load("fig2").corpus)
    dfa = compile_regex("D*A*S", net.routers)
    found = enumerate_paths(dfa, net.topology, "D", "S", "BGP")
    assert {("D", "A", "S"), ("D", "A", "B", "S"), ("D", "B", "A", "S")} <= set(found)


def test_disconnected_source():
    topo = RoutingTopology.from_edges([("A", "B"), ("C", "D")])
    with pytest.raises(NoCompliantPath) as exc:
        enumerate_paths(compile_regex("A*D", topo.routers), topo, "A", "D")
    assert not exc.value.only_via_down


def test_path_only_via_down_adjacency():
    topo = RoutingTopology.from_edges([("A", "B")], down=[("B", "D")])
    with pytest.raises(NoCompliantPath) as exc:
        enumerate_paths(compile_regex("A*D", topo.routers), topo, "A", "D")
    assert exc.value.only_via_down


def _random_graph(rng: random.Random, n: int) -> dict[str, list[str]]:
    names = [f"N{i}" for i in range(n)]
    edges = {frozenset((a, b)) for a, b in itertools.combinations(names, 2) if rng.random() < 0.45}
    return {x: sorted(y for e in edges if x in e for y in e if y != x) for x in names}


def _random_regex(rng: random.Random, names, src, dst) -> str:
    mids = rng.sample([x for x in names if x not in (src, dst)], k=min(2, len(names) - 2))
    shapes = [f"{src}*{dst}", f"{src}*{mids[0]}*{dst}" if mids else f"{src}*{dst}",
              f"{src}*¬{mids[0]}*{dst}" if mids else f"{src}.*{dst}",
              f"{src}(.)?{dst}", f"{src}*({mids[0]}|{mids[-1]})*{dst}" if mids else f"{src}*{dst}",
              f"{src} . . {dst}"]
    return rng.choice(shapes)


@pytest.mark.parametrize("seed", range(60))
def test_enumerate_paths_equals_brute_force(seed):
    rng = random.Random(seed)
    graph = _random_graph(rng, rng.randint(3, 8))
    names = sorted(graph)
    src, dst = rng.sample(names, 2)
    dfa = compile_regex(_random_regex(rng, names, src, dst), names)
    expect = _brute(graph, dfa, src, dst)
    if not expect:
        with pytest.raises(NoCompliantPath):
            enumerate_paths(dfa, graph, src, dst)
        return
    got = enumerate_paths(dfa, graph, src, dst)
    assert sorted(got) == expect
    assert got == enumerate_paths(dfa, graph, src, dst)
    assert all(len(set(p)) == len(p) for p in got)
