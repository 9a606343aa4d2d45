"""One test per acceptance criterion; each records a PASS/FAIL line for the terminal summary."""
from __future__ import annotations

import itertools
import json
import random
import time

import pytest

from conftest import ACCEPTANCE
from routefix import scenarios
from routefix.harness import ErrorSpec, TargetNotApplicable, end_to_end, gen_fattree_pinned, gen_wan, inject
from routefix.pipeline import Options, run
from routefix.repair import CostConstraint, CostEdge, solve_ospf_costs
from routefix.requirements import NoCompliantPath, compile_regex, enumerate_paths
from routefix.rpg import build_ft_rpg, path_edges
from routefix.sim import check_path, simulate, verify
from routefix.symsim import derive_underlay_reqs, run_symbolic_ft

import test_requirements
import test_rpg
import test_trace_diagnoser

BGP_CATEGORIES = ("redistribution", "missing_peer", "send_receive", "preference")
OSPF_CATEGORIES = ("ospf_peer", "ospf_cost")


class Check:
    """Collects named sub-checks; the criterion passes only if all hold."""

    def __init__(self, n: int):
        self.n = n
        self.failures: list[str] = []
        self.notes: list[str] = []

    def __call__(self, ok: bool, what: str) -> None:
        if not ok:
            self.failures.append(what)

    def note(self, text: str) -> None:
        self.notes.append(text)

    def done(self) -> None:
        detail = "; ".join(self.notes) if not self.failures else "failed: " + "; ".join(self.failures)
        ACCEPTANCE[self.n] = (not self.failures, detail)
        assert not self.failures, self.failures


def _timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def test_criterion_1_running_example():
    c = Check(1)
    sc = scenarios.load("fig2")
    rep, dt = _timed(lambda: run(sc.corpus, sc.requirements))
    conds = [str(d.condition) for d in rep.diagnoses]
    c(conds == ["Cond1: IsExport(D.STATIC->D.BGP, (192.168.4.0/24, nh=local, path=[]))",
                "Cond2: Prefer((192.168.4.0/24, nh=D, path=[4]), (192.168.4.0/24, nh=B, path=[3 4]), BGP)"],
      f"diagnoses {conds}")
    post = verify(sc.requirements, simulate(rep.patched))
    c(all(v.satisfied for v in post) and post[0].path == ("S", "A", "D"), "patched corpus does not verify")
    c(dt < 1.0, f"runtime {dt:.2f}s")
    c.note(f"2 diagnoses in condition order, post path S A D, {dt:.3f}s")
    c.done()


def test_criterion_2_multiprotocol():
    c = Check(2)
    sc = scenarios.load("fig5")
    rep, dt = _timed(lambda: run(sc.corpus, sc.requirements))
    overlay = [d.condition for g in rep.groups if g.stage == "overlay" for d in g.diagnoses]
    c([(x.kind, x.router, x.peer, str(x.protocol)) for x in overlay] == [("Peer", "C1", "C3", "BGP")],
      f"overlay conditions {[str(x) for x in overlay]}")
    under = [(r.src, r.dst, str(r.prefix), r.path_regex, r.k) for r in derive_underlay_reqs(overlay, sc.corpus)]
    c(under == [("C1", "C3", "4.4.4.3/32", "C1*C3", 0), ("C3", "C1", "4.4.4.1/32", "C3*C1", 0)],
      f"underlay requirements {under}")
    c(bool(rep.patches) and all(p.loc.file == "C3.cfg" and p.command.strip() == "ip ospf area 0"
                                for p in rep.patches), "patches are not OSPF enables on C3")
    c(rep.status == "repaired" and all(v.satisfied for v in rep.post), "post-verification fails")
    c(dt < 2.0, f"runtime {dt:.2f}s")
    c.note(f"Peer(C1,C3,BGP), 2 underlay requirements, {len(rep.patches)} OSPF lines on C3, {dt:.3f}s")
    c.done()


def test_criterion_3_fault_tolerant():
    c = Check(3)
    sc = scenarios.load("fig6")
    t0 = time.perf_counter()
    net = simulate(sc.corpus)
    rpg = build_ft_rpg(sc.requirements, net)
    for req in sc.requirements:
        paths = [p.packet_path for p in rpg.paths if p.requirement == req]
        c(len(paths) == 2 and not path_edges(paths[0]) & path_edges(paths[1]), f"{req.ident}: paths {paths}")
    devs = run_symbolic_ft(net, rpg).deviations
    got = {(x.kind, x.router, x.peer) for x in devs}
    c(got == {("Peer", "C1", "C3"), ("Peer", "C2", "C3"), ("IsImport", "B", "C2")}, f"diagnosis set {got}")
    rep = run(sc.corpus, sc.requirements)
    c(rep.status == "repaired", f"status {rep.status}")
    fixed = rep.patched
    links = simulate(fixed).all_links
    for link in links:
        failed = simulate(fixed, failed_links=[link])
        for req in sc.requirements:
            c(check_path(failed, req).satisfied, f"{req.ident} fails without {link}")
    dt = time.perf_counter() - t0
    c(dt < 5.0, f"runtime {dt:.2f}s")
    c.note(f"2 disjoint paths x 3 requirements, 3 conditions, survives all {len(links)} single failures, {dt:.3f}s")
    c.done()


def test_criterion_4_ospf_waypoint():
    c = Check(4)
    a, b = CostEdge("C1", "C4", "eth1"), CostEdge("C4", "C3", "eth1")
    x, y = CostEdge("C1", "C2", "eth0"), CostEdge("C2", "C3", "eth1")
    got = solve_ospf_costs([CostConstraint((a, b), (x, y))], {a: 10, b: 10, x: 1, y: 1})
    c(got == {a: 1, b: 1, x: 2, y: 1}, f"assignment {got}")
    sc = scenarios.load("ospf_waypoint")
    rep = run(sc.corpus, sc.requirements)
    c(rep.cost_constraints[:1] == ["C1->C4 + C4->C3 < C1->C2 + C2->C3"], f"constraints {rep.cost_constraints}")
    (v,) = verify(sc.requirements, simulate(rep.patched))
    c(v.satisfied and v.path == ("C1", "C4", "C3"), f"post path {v.path}")
    c.note("a=b=1, C1->C2 raised 1->2, C1 forwards via C4 after re-simulation")
    c.done()


@pytest.fixture(scope="module")
def injection_runs():
    """criterion-5 runs: 100 seeds per category on the pinned k=4 fat-tree and the WAN."""
    out = {}
    t0 = time.perf_counter()
    for sc, cats in ((gen_fattree_pinned(4), BGP_CATEGORIES + OSPF_CATEGORIES),
                     (gen_wan(), BGP_CATEGORIES + OSPF_CATEGORIES)):
        for cat in cats:
            out[(sc.name, cat)] = [end_to_end(sc.corpus, sc.requirements, [ErrorSpec(cat, None, s)])
                                   for s in range(100)]
    return out, time.perf_counter() - t0


def test_criterion_5_soundness_no_side_effects(injection_runs):
    c = Check(5)
    runs, dt = injection_runs
    applicable = 0
    for (name, cat), boards in runs.items():
        live = [b for b in boards if b.status != "not-applicable"]
        if name.startswith("fattree") and cat in OSPF_CATEGORIES:
            # the fat-tree runs no IGP, so there is nothing to break
            c(not live, f"{name}/{cat}: expected not-applicable")
            continue
        c(len(live) == 100, f"{name}/{cat}: only {len(live)} applicable")
        bad = [b for b in live if not b.repaired]
        c(not bad, f"{name}/{cat}: {len(bad)} unrepaired")
        c(not any(b.regressed for b in live), f"{name}/{cat}: regressions")
        applicable += len(live)
    c(dt < 300, f"runtime {dt:.0f}s")
    c.note(f"{applicable} injected runs repaired, 0 regressions, OSPF categories n/a on fat-tree, {dt:.0f}s")
    c.done()


def test_criterion_6_rpg_invariants():
    c = Check(6)
    failures = 0
    for seed in range(200):
        for fn in (test_rpg.test_standard_rpg_invariants, test_rpg.test_fault_tolerant_rpg_invariants):
            try:
                fn(seed)
            except AssertionError:
                failures += 1
    c(failures == 0, f"{failures} topologies violate an invariant")
    c.note("200 standard + 200 fault-tolerant random topologies, exact-k cuts brute forced")
    c.done()


def _all_topologies_up_to_8():
    for name in scenarios.names():
        net = simulate(scenarios.load(name).corpus)
        if len(net.routers) <= 8:
            yield name, net.topology.graph("BGP"), net.routers
    net = simulate(gen_wan().corpus)
    yield "wan", net.topology.graph("BGP"), net.routers


def test_criterion_7_path_enumeration():
    c = Check(7)
    checked = 0
    for name, graph, routers in _all_topologies_up_to_8():
        names = sorted(graph)
        for src, dst in itertools.permutations(names, 2):
            mids = [x for x in names if x not in (src, dst)]
            for rx in [f"{src}*{dst}"] + [f"{src}*{m}*{dst}" for m in mids[:2]] + [f"{src}*¬{mids[0]}*{dst}"] * bool(mids):
                dfa = compile_regex(rx, routers)
                expect = test_requirements._brute(graph, dfa, src, dst)
                try:
                    got = sorted(enumerate_paths(dfa, graph, src, dst))
                except NoCompliantPath:
                    got = []
                c(got == expect, f"{name} {rx}")
                checked += 1
    for seed in range(60):
        rng = random.Random(seed)
        graph = test_requirements._random_graph(rng, rng.randint(3, 8))
        names = sorted(graph)
        src, dst = rng.sample(names, 2)
        dfa = compile_regex(test_requirements._random_regex(rng, names, src, dst), names)
        try:
            got = sorted(enumerate_paths(dfa, graph, src, dst))
        except NoCompliantPath:
            got = []
        c(got == test_requirements._brute(graph, dfa, src, dst), f"random graph {seed}")
        checked += 1
    c.note(f"{checked} (topology, regex) pairs equal simple-path brute force")
    c.done()


def test_criterion_8_muc_completeness():
    c = Check(8)
    t0 = time.perf_counter()
    from routefix.trace_diagnoser import all_mucs, evaluate, explain
    total = 0
    for seed in range(50):
        trace = test_trace_diagnoser.random_trace(seed)
        c(len(trace) <= 12, f"trace {seed} too long")
        table = test_trace_diagnoser.Table(trace)
        expect = [] if table.sat(range(len(trace))) else table.mucs(len(trace))
        got = all_mucs(trace)
        c(got == expect, f"trace {seed}: {got} != {expect}")
        for muc in got:
            total += 1
            for ex in explain(muc, trace):
                c(all(evaluate(ex.formula, e) for e in table.models(ex.prefix, False)), f"trace {seed} prefix")
                c(not any(evaluate(ex.formula, e) for e in table.models(ex.suffix, True)), f"trace {seed} suffix")
    dt = time.perf_counter() - t0
    c(dt < 120, f"runtime {dt:.0f}s")
    c.note(f"50 traces, {total} MUCs equal power-set enumeration, explanations checked, {dt:.1f}s")
    c.done()


def test_criterion_9_modified_line_ratio(injection_runs):
    c = Check(9)
    runs, _ = injection_runs
    ratios = [b.modified_line_ratio for boards in runs.values() for b in boards if b.status != "not-applicable"]
    mean, worst = sum(ratios) / len(ratios), max(ratios)
    by_topo = {}
    for (name, _), boards in runs.items():
        by_topo.setdefault(name, []).extend(b.modified_line_ratio for b in boards if b.status != "not-applicable")
    c(mean < 0.05, f"mean ratio {mean:.2%}")
    c.note(f"mean {mean:.3%}, max {worst:.2%} over {len(ratios)} runs; "
           + ", ".join(f"{k} mean {sum(v) / len(v):.3%}" for k, v in sorted(by_topo.items())))
    c.done()


def test_criterion_10_determinism():
    c = Check(10)
    cases = [(n, scenarios.load(n)) for n in scenarios.names()]
    wan = gen_wan()
    broken = inject(wan.corpus, ErrorSpec("preference", None, 3), wan.requirements).corpus
    cases.append(("wan+preference", type(wan)(broken, wan.requirements, "wan")))
    for name, sc in cases:
        for seed in (None, 7):
            a = json.dumps(run(sc.corpus, sc.requirements, Options(seed=seed)).to_json(), sort_keys=True)
            b = json.dumps(run(sc.corpus, sc.requirements, Options(seed=seed)).to_json(), sort_keys=True)
            c(a == b, f"{name} seed={seed}")
    c.note(f"{len(cases)} scenarios x 2 seeds, byte-identical reports")
    c.done()
