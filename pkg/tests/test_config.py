from __future__ import annotations

import ipaddress
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from routefix.config import (ConflictingPatches, DuplicateRouter, InvalidAnchor, ParseError, Patch, SourceLoc,
                             apply_patches, diff_corpus, parse_config, parse_corpus, parse_texts, patched_corpus,
                             serialize, token_stream)
from routefix.harness import NetBuilder


def _random_builder(rng: random.Random) -> NetBuilder:
    b = NetBuilder()
    n = rng.randint(2, 6)
    names = [f"R{i}" for i in range(n)]
    for i, r in enumerate(names):
        b.router(r, asn=65000 + rng.randint(0, 2), ospf=rng.random() < 0.5)
    for i in range(1, n):
        b.link(names[rng.randrange(i)], names[i], cost=rng.choice([None, 1, 5]))
    b.ebgp_all()
    for r in names:
        if rng.random() < 0.5:
            b.network(r, f"10.{100 + names.index(r)}.0.0/16")
        if rng.random() < 0.3:
            b.redistribute(r, rng.choice(["static", "connected"]))
        if rng.random() < 0.3:
            b.static(r, f"192.168.{names.index(r)}.0/24", "eth0")
        if rng.random() < 0.5:
            b.policy(r, f"route-map P{r} deny 10\n match community c{rng.randint(1, 3)}\n"
                        f"route-map P{r} permit 20\n set local-preference {rng.randint(50, 300)}\n"
                        f" set community c9 additive")
    return b


def test_empty_directory_is_empty_corpus(tmp_path):
    assert len(parse_corpus(tmp_path)) == 0


def test_fig2_corpus(load):
    c = load("fig2").corpus
    assert sorted(c) == ["A", "B", "D", "S"]
    a = c["A"]
    nb = a.bgp.neighbor(ipaddress.IPv4Address("10.0.23.3"))
    assert nb.import_policy == "FROM_B"
    (clause,) = a.route_policies["FROM_B"]
    assert clause.local_preference == 200


def test_neighbor_line_provenance():
    text = "\n".join([
        "hostname X",
        "!",
        "interface eth0",
        " ip address 10.0.0.1/24",
        "!",
        "router bgp 1",
        " neighbor 10.0.0.2 remote-as 2",
        "!",
    ]) + "\n"
    dev = parse_config(text, "X.cfg")
    (nb,) = dev.bgp.neighbors
    assert nb.loc == SourceLoc("X.cfg", 7)
    assert token_stream(serialize(dev)) == token_stream(text)


@pytest.mark.parametrize("seed", range(25))
def test_round_trip_generated(seed):
    texts = _random_builder(random.Random(seed)).render()
    corpus = parse_texts(texts)
    for file, text in texts.items():
        assert token_stream(serialize(corpus.by_file(file))) == token_stream(text)


@pytest.mark.parametrize("name", ["fig2", "fig3", "fig5", "fig6", "ospf_waypoint", "conflict_bgp", "conflict_ospf"])
def test_round_trip_fixtures(load, name):
    c = load(name).corpus
    for file, text in c.texts.items():
        assert token_stream(serialize(c.by_file(file))) == token_stream(text)


@pytest.mark.parametrize("text, line", [
    ("hostname X\nfrobnicate\n", 2),
    ("hostname X\ninterface eth0\n ip address 10.0.0.300/24\n", 3),
    ("hostname X\nrouter bgp 1\n neighbor 10.0.0.2 remote-as 2\n neighbor 10.0.0.2 route-map NOPE in\n", 4),
    ("hostname X\nroute-map P permit 20\nroute-map P permit 10\n", 3),
    ("hostname X\nroute-map P deny 10\n set local-preference 5\n", 2),
    ("hostname X\ninterface eth0\n ip ospf cost 0\n", 3),
])
def test_parse_errors_carry_location(text, line):
    with pytest.raises(ParseError) as exc:
        parse_config(text, "X.cfg")
    assert exc.value.line == line and exc.value.file == "X.cfg"


def test_duplicate_router():
    with pytest.raises(DuplicateRouter):
        parse_texts({"a.cfg": "hostname R\n", "b.cfg": "hostname R\n"})


def test_no_patches_is_identity(load):
    c = load("fig2").corpus
    assert apply_patches(c, []) == c.texts


def test_add_redistribute(load):
    c = load("fig2").corpus
    anchor = c["D"].bgp.neighbors[-1].export_loc
    new = patched_corpus(c, [Patch(anchor, "add", " redistribute static")])
    assert new["D"].bgp.redistributes("static")


def test_delete_deny_clause(load):
    c = load("fig6").corpus
    clauses = {n: cl for n, cl in c["B"].route_policies.items()}
    name, deny = next((n, x) for n, cl in clauses.items() for x in cl if x.action == "deny")
    patches = [Patch(deny.loc, "delete", c.texts[deny.loc.file].split("\n")[deny.loc.line - 1])]
    patches += [Patch(m.loc, "delete", f"match {m.kind} {m.value}") for m in deny.matches]
    new = patched_corpus(c, patches)
    remaining = new["B"].route_policies.get(name, ())
    assert all(x.action != "deny" or x.order != deny.order for x in remaining)
    assert [x.order for x in remaining] == [x.order for x in clauses[name] if x is not deny]


def test_delete_mismatch_and_duplicates(load):
    c = load("fig2").corpus
    loc = c["A"].bgp.loc
    with pytest.raises(InvalidAnchor):
        apply_patches(c, [Patch(loc, "delete", "router bgp 99")])
    with pytest.raises(InvalidAnchor):
        apply_patches(c, [Patch(SourceLoc("A.cfg", 10_000), "add", "x")])
    with pytest.raises(InvalidAnchor):
        apply_patches(c, [Patch(SourceLoc("nope.cfg", 1), "add", "x")])
    with pytest.raises(ConflictingPatches):
        apply_patches(c, [Patch(loc, "delete", "router bgp 2")] * 2)


def test_adds_keep_given_order(load):
    c = load("fig2").corpus
    anchor = SourceLoc("A.cfg", c["A"].last_line)
    cmds = ["route-map NEW permit 10", " match prefix 10.9.0.0/16", " set local-preference 300"]
    text = apply_patches(c, [Patch(anchor, "add", x) for x in cmds])["A.cfg"]
    assert text.rstrip("\n").split("\n")[-3:] == cmds
    (clause,) = parse_texts({"A.cfg": text})["A"].route_policies["NEW"]
    assert clause.local_preference == 300


def test_sub_command_stays_in_anchor_block():
    # a neighbor line and a new route-map share the end-of-file anchor
    text = "hostname X\nrouter bgp 1\n neighbor 10.0.0.2 remote-as 2\n"
    c = parse_texts({"X.cfg": text})
    patches = [Patch(SourceLoc("X.cfg", 3), "add", "route-map M permit 10"),
               Patch(SourceLoc("X.cfg", 3), "add", " set local-preference 120"),
               Patch(SourceLoc("X.cfg", 3), "add", " neighbor 10.0.0.3 remote-as 3")]
    new = patched_corpus(c, patches)
    assert len(new["X"].bgp.neighbors) == 2
    assert new["X"].route_policies["M"][0].local_preference == 120


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_diff_corpus_reproduces_target(seed, data):
    c = parse_texts(_random_builder(random.Random(seed)).render())
    file = data.draw(st.sampled_from(sorted(c.texts)))
    lines = c.texts[file].split("\n")
    deletable = [i + 1 for i, ln in enumerate(lines) if ln.startswith(" ip ospf cost")
                 or ln.startswith(" set community") or ln.startswith(" redistribute")]
    patches = [Patch(SourceLoc(file, i), "delete", lines[i - 1]) for i in
               data.draw(st.lists(st.sampled_from(deletable), unique=True))] if deletable else []
    patches.append(Patch(SourceLoc(file, len(lines) - 1), "add", "ip route 10.77.0.0/16 Null0"))
    target = patched_corpus(c, patches)
    again = patched_corpus(c, diff_corpus(c, target))
    assert again.texts == target.texts


def test_policy_first_match_and_defaults(load):
    s = load("fig2").corpus["S"]
    p = ipaddress.IPv4Network("192.168.4.0/24")
    assert not s.evaluate_policy("FILTER_D1", p, frozenset({"d1"}), [3, 4]).permit
    assert s.evaluate_policy("FILTER_D1", p, frozenset(), [3, 4]).permit
    assert s.evaluate_policy(None, p, frozenset({"d1"}), []).permit
