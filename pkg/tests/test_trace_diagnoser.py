from __future__ import annotations

import ipaddress
import itertools
import random

import pytest

from routefix.harness import NetBuilder
from routefix.requirements import Requirement
from routefix.sim import simulate
from routefix.trace_diagnoser import (And, Atom, Const, Iff, Implies, Not, NotAnError, Or, Statement, Trace,
                                      UnsupportedConstraint, Var, all_mucs, check_sat, check_sat_tracked,
                                      diagnose_trace, eq, evaluate, explain, generate_trace, solve)


# ---------------------------------------------------------------- exhaustive oracle

class Table:
    """Every total assignment, with the statements it satisfies and whether the assertion holds."""

    def __init__(self, trace: Trace):
        names = sorted(trace.domains)
        self.rows = []
        for values in itertools.product(*(trace.domains[n] for n in names)):
            env = dict(zip(names, values))
            sat = frozenset(s.index for s in trace.statements if all(evaluate(c, env) for c in s.clauses))
            self.rows.append((env, sat, bool(evaluate(trace.phi, env))))

    def sat(self, subset, with_phi=True) -> bool:
        s = set(subset)
        return any(s <= sat and (phi or not with_phi) for _, sat, phi in self.rows)

    def mucs(self, n: int) -> list[tuple[int, ...]]:
        unsat = [c for k in range(n + 1) for c in itertools.combinations(range(n), k) if not self.sat(c)]
        bad = set(unsat)
        minimal = [c for c in unsat if not any(tuple(x for x in c if x != i) in bad for i in c)]
        return sorted(minimal, key=lambda m: (len(m), m))

    def models(self, subset, with_phi):
        s = set(subset)
        return [env for env, sat, phi in self.rows if s <= sat and (phi or not with_phi)]


VARS = ("x", "y", "z", "w")
DOM = (0, 1, 2)


def _atom(rng):
    a = Var(rng.choice(VARS))
    op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
    rhs = Var(rng.choice(VARS)) if rng.random() < 0.4 else rng.choice(DOM)
    return Atom(op, a, rhs, rng.choice([0, 0, 0, 1, -1]) if isinstance(rhs, Var) else 0)


def _formula(rng, depth=0):
    if depth >= 2 or rng.random() < 0.5:
        return _atom(rng)
    kind = rng.choice(["not", "and", "or", "imp", "iff"])
    if kind == "not":
        return Not(_formula(rng, depth + 1))
    if kind == "and":
        return And((_formula(rng, depth + 1), _formula(rng, depth + 1)))
    if kind == "or":
        return Or((_formula(rng, depth + 1), _formula(rng, depth + 1)))
    if kind == "imp":
        return Implies(_formula(rng, depth + 1), _formula(rng, depth + 1))
    return Iff(_formula(rng, depth + 1), _formula(rng, depth + 1))


def random_trace(seed: int) -> Trace:
    rng = random.Random(seed)
    n = rng.randint(1, 12)
    stmts = [Statement(i, "transformation", f"s{i}", tuple(_formula(rng) for _ in range(rng.randint(1, 2))))
             for i in range(n)]
    return Trace(stmts, _formula(rng), {v: DOM for v in VARS})


# ---------------------------------------------------------------- solver

@pytest.mark.parametrize("seed", range(60))
def test_solver_matches_exhaustive_search(seed):
    rng = random.Random(seed)
    fs = [_formula(rng) for _ in range(rng.randint(1, 4))]
    domains = {v: DOM for v in VARS}
    model = solve(fs, domains)
    expect = any(all(evaluate(f, dict(zip(VARS, vals))) for f in fs) for vals in itertools.product(DOM, repeat=4))
    assert (model is not None) == expect
    if model is not None:
        env = {v: model.get(v, DOM[0]) for v in VARS}
        assert all(evaluate(f, env) for f in fs)


def test_three_valued_evaluation():
    f = Or((eq("x", 1), eq("y", 2)))
    assert evaluate(f, {"x": 1}) is True
    assert evaluate(f, {"x": 0}) is None
    assert evaluate(Implies(eq("x", 0), Const(False)), {"x": 1}) is True
    assert evaluate(Atom("==", Var("a"), Var("b"), 1), {"a": 3, "b": 2}) is True


def test_unsupported_constraints():
    with pytest.raises(UnsupportedConstraint):
        Atom("~", Var("x"), 1)
    with pytest.raises(UnsupportedConstraint):
        evaluate(Atom("<", Var("x"), "permit"), {"x": 1})


# ---------------------------------------------------------------- MUCs and explanations

@pytest.mark.parametrize("seed", range(50))
def test_mucs_equal_power_set_enumeration(seed):
    trace = random_trace(seed)
    table = Table(trace)
    assert all_mucs(trace) == (table.mucs(len(trace)) if not table.sat(range(len(trace))) else [])


@pytest.mark.parametrize("seed", range(50))
def test_explanations_separate_prefix_from_suffix(seed):
    trace = random_trace(seed)
    table = Table(trace)
    for muc in all_mucs(trace):
        for ex in explain(muc, trace):
            assert ex.implied and ex.inconsistent
            assert all(evaluate(ex.formula, env) for env in table.models(ex.prefix, with_phi=False))
            assert not any(evaluate(ex.formula, env) for env in table.models(ex.suffix, with_phi=True))


@pytest.mark.parametrize("seed", range(20))
def test_selector_encoding_agrees(seed):
    trace = random_trace(seed)
    rng = random.Random(seed)
    for _ in range(5):
        subset = [i for i in range(len(trace)) if rng.random() < 0.5]
        assert check_sat_tracked(trace, subset) == check_sat(trace, subset)


def test_singleton_muc():
    stmts = [Statement(0, "origination", "a", (eq("x", 1),)),
             Statement(1, "transformation", "b", (eq("y", 0),)),
             Statement(2, "selection", "c", (Atom("!=", Var("z"), 2),))]
    trace = Trace(stmts, Atom("==", Var("y"), 2), {v: DOM for v in ("x", "y", "z")})
    assert all_mucs(trace) == [(1,)]
    (ex,) = explain((1,), trace)
    assert str(ex.formula) == "y=0"


def test_satisfiable_trace_has_no_mucs():
    stmts = [Statement(0, "origination", "a", (eq("x", 1),))]
    assert all_mucs(Trace(stmts, eq("x", 1), {"x": DOM})) == []


# ---------------------------------------------------------------- traces from networks

def test_running_example_trace(load):
    sc = load("fig3")
    net = simulate(sc.corpus)
    diag = diagnose_trace(net, sc.requirements[0])
    trace = diag.trace
    assert len(trace) == 9
    assert [s.kind for s in trace.statements] == ["origination", "transformation", "selection",
                                                  "transformation", "transformation", "selection",
                                                  "transformation", "transformation", "selection"]
    # A tags the route from D with 130, B with 120: B prefers the copy learned over iBGP
    assert "riA1.lp=130" in map(str, trace.statements[1].clauses)
    assert "riB2.lp=120" in map(str, trace.statements[4].clauses)
    assert diag.mucs == [(0, 1, 2, 3, 4, 5)]
    exps = diag.explanations[diag.mucs[0]]
    assert all(e.implied and e.inconsistent for e in exps)
    assert str(exps[-1].formula) == "bestB.nh=A"
    assert "riA1.lp" in trace.config_vars and "riB2.lp" in trace.config_vars


def test_muc_drops_when_preference_reversed(load):
    sc = load("fig3")
    trace = generate_trace(simulate(sc.corpus), sc.requirements[0])
    assert not check_sat(trace, range(len(trace)))
    assert check_sat(trace, [i for i in range(len(trace)) if i != 1])


def test_satisfied_requirement_is_not_an_error(load):
    sc = load("fig2_correct")
    with pytest.raises(NotAnError):
        generate_trace(simulate(sc.corpus), sc.requirements[0])


def _chain_with_filter():
    b = NetBuilder()
    for i, r in enumerate(["S", "A", "D"]):
        b.router(r, 65001 + i)
    b.link("S", "A")
    b.link("A", "D")
    b.ebgp_all()
    b.stub("D", "10.80.0.0/24")
    b.network("D", "10.80.0.0/24")
    b.policy("S", "route-map BLOCK deny 10\n match prefix 10.80.0.0/24")
    texts = b.render()
    lines = texts["S.cfg"].split("\n")
    at = next(i for i, ln in enumerate(lines) if ln.startswith(" neighbor"))
    lines.insert(at + 1, lines[at].split(" remote-as")[0] + " route-map BLOCK in")
    texts["S.cfg"] = "\n".join(lines)
    return texts


def test_filtered_chain(tmp_path):
    from routefix.config import parse_texts
    net = simulate(parse_texts(_chain_with_filter()))
    req = Requirement("S", "D", ipaddress.IPv4Network("10.80.0.0/24"), "S*D")
    diag = diagnose_trace(net, req)
    assert [s.kind for s in diag.trace.statements] == ["origination", "transformation", "selection",
                                                       "transformation", "selection"]
    # only the import at S is config-wrong; the MUC must name it
    (muc,) = diag.mucs
    assert 3 in muc
    assert "fS<-A" in diag.trace.config_vars
