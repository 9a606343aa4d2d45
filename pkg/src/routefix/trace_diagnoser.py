"""Data-flow diagnosis over a concrete error trace.

A trace is a sequence of route-computation statements (origination,
import/transformation, best-route selection), each a block of constraints
over finite-domain attribute variables, plus an assertion for the
requirement.  Minimal unsatisfiable cores are enumerated MARCO-style and each
core is explained cut by cut through the state shared across the cut.
"""
from __future__ import annotations

import itertools
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

from .requirements import Requirement
from .sim import BgpEngine, Protocol, SimResult, check_path

# ---------------------------------------------------------------- formulas


class UnsupportedConstraint(ValueError):
    pass


class NotAnError(Exception):
    """The requirement holds on this trace, so there is nothing to explain."""


class Timeout(RuntimeError):
    def __init__(self, budget: float, found: Sequence[tuple[int, ...]] = ()):
        super().__init__(f"MUC enumeration exceeded {budget}s budget ({len(found)} cores found)")
        self.budget = budget
        self.found = list(found)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


Value = Union[int, str]
Term = Union[Var, int, str]


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


_OPS = {"==", "!=", "<", "<=", ">", ">="}


@dataclass(frozen=True)
class Atom:
    """``lhs op rhs + offset``."""
    op: str
    lhs: Term
    rhs: Term
    offset: int = 0

    def __post_init__(self):
        if self.op not in _OPS:
            raise UnsupportedConstraint(f"operator {self.op!r}")

    def __str__(self) -> str:
        rhs = str(self.rhs)
        if self.offset:
            rhs += f" {'+' if self.offset > 0 else '-'} {abs(self.offset)}"
        op = "=" if self.op == "==" else self.op
        return f"{self.lhs}{op}{rhs}"


@dataclass(frozen=True)
class Not:
    arg: Formula

    def __str__(self) -> str:
        return f"¬({self.arg})"


@dataclass(frozen=True)
class And:
    args: tuple[Formula, ...]

    def __str__(self) -> str:
        return " ∧ ".join(_paren(a) for a in self.args) if self.args else "true"


@dataclass(frozen=True)
class Or:
    args: tuple[Formula, ...]

    def __str__(self) -> str:
        return " ∨ ".join(_paren(a) for a in self.args) if self.args else "false"


@dataclass(frozen=True)
class Implies:
    a: Formula
    b: Formula

    def __str__(self) -> str:
        return f"{_paren(self.a)} → {_paren(self.b)}"


@dataclass(frozen=True)
class Iff:
    a: Formula
    b: Formula

    def __str__(self) -> str:
        return f"{_paren(self.a)} ↔ {_paren(self.b)}"


Formula = Union[Const, Atom, Not, And, Or, Implies, Iff]


def _paren(f: Formula) -> str:
    return str(f) if isinstance(f, (Atom, Const, Not)) else f"({f})"


def eq(name: str, value: Term, offset: int = 0) -> Atom:
    return Atom("==", Var(name), value, offset)


def conj(*args: Formula) -> Formula:
    return args[0] if len(args) == 1 else And(tuple(args))


def _term(t: Term, env: Mapping[str, Value]):
    if isinstance(t, Var):
        return env.get(t.name)
    return t


def _compare(op: str, a: Value, b: Value) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if not (isinstance(a, int) and isinstance(b, int)):
        raise UnsupportedConstraint(f"ordering comparison on non-integers {a!r} {op} {b!r}")
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


def evaluate(f: Formula, env: Mapping[str, Value]) -> bool | None:
    """Three-valued evaluation; ``None`` when unassigned variables decide."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        a, b = _term(f.lhs, env), _term(f.rhs, env)
        if a is None or b is None:
            return None
        if f.offset:
            if not isinstance(b, int):
                raise UnsupportedConstraint(f"offset on non-integer term in {f}")
            b = b + f.offset
        return _compare(f.op, a, b)
    if isinstance(f, Not):
        v = evaluate(f.arg, env)
        return None if v is None else not v
    if isinstance(f, And):
        unknown = False
        for a in f.args:
            v = evaluate(a, env)
            if v is False:
                return False
            unknown |= v is None
        return None if unknown else True
    if isinstance(f, Or):
        unknown = False
        for a in f.args:
            v = evaluate(a, env)
            if v is True:
                return True
            unknown |= v is None
        return None if unknown else False
    if isinstance(f, Implies):
        a = evaluate(f.a, env)
        if a is False:
            return True
        b = evaluate(f.b, env)
        if b is True:
            return True
        return None if a is None or b is None else False
    if isinstance(f, Iff):
        a, b = evaluate(f.a, env), evaluate(f.b, env)
        return None if a is None or b is None else a == b
    raise UnsupportedConstraint(f"unknown formula node {type(f).__name__}")


def variables(f: Formula) -> list[str]:
    """Variables in order of first occurrence."""
    out: dict[str, None] = {}

    def walk(g):
        if isinstance(g, Atom):
            for t in (g.lhs, g.rhs):
                if isinstance(t, Var):
                    out.setdefault(t.name)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, (Implies, Iff)):
            walk(g.a)
            walk(g.b)
        elif not isinstance(g, Const):
            raise UnsupportedConstraint(f"unknown formula node {type(g).__name__}")

    walk(f)
    return list(out)


# ---------------------------------------------------------------- solver

def _units(f: Formula, env: Mapping[str, Value], domains: Mapping[str, Sequence[Value]],
           positive: bool = True) -> list[tuple[str, Value]]:
    """Assignments forced by requiring ``f`` to evaluate to ``positive``."""
    if isinstance(f, Atom):
        a, b = _term(f.lhs, env), _term(f.rhs, env)
        equal = (f.op == "==") == positive
        if f.op not in ("==", "!="):
            return []
        if a is None and b is not None and isinstance(f.lhs, Var):
            if f.offset and not isinstance(b, int):
                return []
            target = b + f.offset if f.offset else b
            name = f.lhs.name
        elif b is None and a is not None and isinstance(f.rhs, Var):
            if f.offset and not isinstance(a, int):
                return []
            target = a - f.offset if f.offset else a
            name = f.rhs.name
        else:
            return []
        if equal:
            return [(name, target)]
        rest = [v for v in domains[name] if v != target]
        return [(name, rest[0])] if len(rest) == 1 else []
    if isinstance(f, Not):
        return _units(f.arg, env, domains, not positive)
    if isinstance(f, (And, Or)):
        all_of = isinstance(f, And) == positive
        if all_of:
            return [u for a in f.args for u in _units(a, env, domains, positive)]
        open_ = [a for a in f.args if evaluate(a, env) is None]
        decided = [evaluate(a, env) for a in f.args]
        if len(open_) == 1 and all(v is (not positive) for v in decided if v is not None):
            return _units(open_[0], env, domains, positive)
        return []
    if isinstance(f, Implies):
        if not positive:
            return _units(f.a, env, domains, True) + _units(f.b, env, domains, False)
        if evaluate(f.a, env) is True:
            return _units(f.b, env, domains, True)
        if evaluate(f.b, env) is False:
            return _units(f.a, env, domains, False)
        return []
    if isinstance(f, Iff):
        a, b = evaluate(f.a, env), evaluate(f.b, env)
        if a is not None:
            return _units(f.b, env, domains, a == positive)
        if b is not None:
            return _units(f.a, env, domains, b == positive)
    return []


class _Solver:
    """Propagation plus chronological backtracking over finite domains."""

    def __init__(self, formulas: Sequence[Formula], domains: Mapping[str, Sequence[Value]]):
        self.formulas = list(formulas)
        order: dict[str, None] = {}
        self.watch: dict[str, list[int]] = {}
        for i, f in enumerate(self.formulas):
            for v in variables(f):
                order.setdefault(v)
                self.watch.setdefault(v, []).append(i)
        missing = [v for v in order if v not in domains]
        if missing:
            raise UnsupportedConstraint(f"no finite domain for {', '.join(missing)}")
        self.order = list(order)
        self.domains = domains

    def _propagate(self, env: dict[str, Value], pending: Iterable[int]) -> bool:
        queue = list(dict.fromkeys(pending))
        queued = set(queue)
        while queue:
            i = queue.pop()
            queued.discard(i)
            f = self.formulas[i]
            v = evaluate(f, env)
            if v is True:
                continue
            if v is False:
                return False
            for name, value in _units(f, env, self.domains):
                if name in env:
                    if env[name] != value:
                        return False
                    continue
                if value not in self.domains[name]:
                    return False
                env[name] = value
                for j in self.watch[name]:
                    if j not in queued:
                        queued.add(j)
                        queue.append(j)
        return True

    def _search(self, env: dict[str, Value]) -> dict[str, Value] | None:
        free = [v for v in self.order if v not in env]
        if not free:
            return env if all(evaluate(f, env) is True for f in self.formulas) else None
        var = min(free, key=lambda v: len(self.domains[v]))
        for value in self.domains[var]:
            trial = dict(env)
            trial[var] = value
            if self._propagate(trial, self.watch[var]):
                got = self._search(trial)
                if got is not None:
                    return got
        return None

    def solve(self) -> dict[str, Value] | None:
        env: dict[str, Value] = {}
        if not self._propagate(env, range(len(self.formulas))):
            return None
        return self._search(env)


def solve(formulas: Sequence[Formula], domains: Mapping[str, Sequence[Value]]) -> dict[str, Value] | None:
    """A model of the conjunction of ``formulas`` or ``None``."""
    return _Solver(formulas, domains).solve()


# ---------------------------------------------------------------- traces

@dataclass(frozen=True)
class Statement:
    index: int
    kind: str  # origination | transformation | selection | propagation
    label: str
    clauses: tuple[Formula, ...]
    router: str | None = None

    def __str__(self) -> str:
        return f"π{self.index + 1} [{self.kind}] {self.label}"

    def to_json(self) -> dict:
        return {"index": self.index + 1, "kind": self.kind, "label": self.label, "router": self.router,
                "clauses": [str(c) for c in self.clauses]}


@dataclass(frozen=True)
class TrackedClause:
    """Clause ``c`` guarded by selector ``p_i`` of statement ``i``."""
    selector: str
    statement: int
    clause: Formula

    def guarded(self) -> Formula:
        return Implies(eq(self.selector, 1), self.clause)


@dataclass
class Trace:
    statements: list[Statement]
    phi: Formula
    domains: dict[str, tuple[Value, ...]]
    config_vars: frozenset[str] = frozenset()
    requirement: Requirement | None = None

    def __len__(self) -> int:
        return len(self.statements)

    def tracked(self) -> list[TrackedClause]:
        return [TrackedClause(f"p{s.index + 1}", s.index, c) for s in self.statements for c in s.clauses]

    def formulas(self, subset: Iterable[int], with_phi: bool = True) -> list[Formula]:
        out = [c for i in sorted(set(subset)) for c in self.statements[i].clauses]
        if with_phi:
            out.append(self.phi)
        return out

    def to_json(self) -> dict:
        return {"requirement": self.requirement.to_json() if self.requirement else None,
                "statements": [s.to_json() for s in self.statements], "assertion": str(self.phi),
                "config_vars": sorted(self.config_vars)}


def check_sat(trace: Trace, subset: Iterable[int], with_phi: bool = True,
              extra: Sequence[Formula] = ()) -> bool:
    return solve(trace.formulas(subset, with_phi) + list(extra), trace.domains) is not None


def check_sat_tracked(trace: Trace, enabled: Iterable[int]) -> bool:
    """Same query through selector literals: clauses of disabled statements drop out."""
    on = set(enabled)
    sels = {f"p{s.index + 1}": s.index for s in trace.statements}
    domains = dict(trace.domains)
    domains.update({p: (0, 1) for p in sels})
    fs: list[Formula] = [eq(p, int(i in on)) for p, i in sels.items()]
    fs += [t.guarded() for t in trace.tracked()]
    fs.append(trace.phi)
    return solve(fs, domains) is not None


# ---------------------------------------------------------------- MUC enumeration

def _map_seed(n: int, down: list[frozenset[int]], up: list[frozenset[int]]) -> frozenset[int] | None:
    """Lexicographically largest subset avoiding explored regions of the power set."""
    chosen: list[bool] = []

    def ok(k: int) -> bool:
        inc = {i for i in range(k) if chosen[i]}
        for m in down:
            if max(m) < k and m <= inc:
                return False
        for s in up:
            outside = [i for i in range(n) if i not in s]
            if outside and max(outside) < k and not any(chosen[i] for i in outside):
                return False
            if not outside:
                return False
        return True

    def rec(k: int) -> bool:
        if k == n:
            return True
        for val in (True, False):
            chosen.append(val)
            if ok(k + 1) and rec(k + 1):
                return True
            chosen.pop()
        return False

    return frozenset(i for i in range(n) if chosen[i]) if rec(0) else None


def all_mucs(trace: Trace, budget: float | None = None) -> list[tuple[int, ...]]:
    """Every minimal unsatisfiable subset of statements (the assertion is always on)."""
    n = len(trace)
    start = time.monotonic()
    down: list[frozenset[int]] = []
    up: list[frozenset[int]] = []
    found: list[tuple[int, ...]] = []
    if check_sat(trace, range(n)):
        return []
    if not check_sat(trace, ()):
        return [()]  # the assertion contradicts itself
    while True:
        if budget is not None and time.monotonic() - start > budget:
            raise Timeout(budget, found)
        seed = _map_seed(n, down, up)
        if seed is None:
            break
        if check_sat(trace, seed):
            grown = set(seed)
            for i in range(n):
                if i not in grown and check_sat(trace, grown | {i}):
                    grown.add(i)
            up.append(frozenset(grown))
        else:
            core = set(seed)
            for i in sorted(seed):
                if not check_sat(trace, core - {i}):
                    core.discard(i)
            down.append(frozenset(core))
            found.append(tuple(sorted(core)))
    return sorted(found, key=lambda m: (len(m), m))


# ---------------------------------------------------------------- explanations

@dataclass
class Explanation:
    cut: int  # statement index the cut follows
    prefix: tuple[int, ...]
    suffix: tuple[int, ...]
    formula: Formula
    variables: tuple[str, ...]
    implied: bool
    inconsistent: bool

    def __str__(self) -> str:
        return str(self.formula)

    def to_json(self) -> dict:
        return {"after": self.cut + 1, "prefix": [i + 1 for i in self.prefix], "suffix": [i + 1 for i in self.suffix],
                "explanation": str(self.formula), "variables": list(self.variables),
                "implied_by_prefix": self.implied, "inconsistent_with_suffix": self.inconsistent}


def _projection(trace: Trace, prefix: Sequence[int], names: Sequence[str], cap: int = 512) -> set[tuple]:
    """Values of ``names`` over all models of the prefix statements."""
    base = trace.formulas(prefix, with_phi=False)
    seen: set[tuple] = set()
    block: list[Formula] = []
    while len(seen) < cap:
        model = solve(base + block, trace.domains)
        if model is None:
            break
        vals = []
        for n in names:
            if n not in model:  # unconstrained: fix the first domain value and block it too
                model[n] = trace.domains[n][0]
            vals.append(model[n])
        row = tuple(vals)
        seen.add(row)
        block.append(Not(conj(*(eq(n, v) for n, v in zip(names, row)))) if names else Const(False))
    return seen


def _formula(names: Sequence[str], rows: set[tuple]) -> Formula:
    if not rows:
        return Const(False)
    if not names:
        return Const(True)
    terms = [conj(*(eq(n, v) for n, v in zip(names, row))) for row in sorted(rows, key=repr)]
    return terms[0] if len(terms) == 1 else Or(tuple(terms))


def _project(rows: set[tuple], names: Sequence[str], keep: Sequence[str]) -> set[tuple]:
    idx = [names.index(k) for k in keep]
    return {tuple(r[i] for i in idx) for r in rows}


def explain(muc: Sequence[int], trace: Trace) -> list[Explanation]:
    """Per-cut state projection over the variables shared across each cut."""
    muc = sorted(muc)
    out = []
    for j, cut in enumerate(muc):
        prefix, suffix = tuple(muc[: j + 1]), tuple(muc[j + 1:])
        pre_vars = {v for f in trace.formulas(prefix, False) for v in variables(f)}
        post_vars = {v for f in trace.formulas(suffix, True) for v in variables(f)}
        order = [v for f in trace.formulas(prefix, False) for v in variables(f)]
        shared = list(dict.fromkeys(v for v in order if v in post_vars and v in pre_vars))
        # config-related variables are preferred: they are the last to be projected away
        shared.sort(key=lambda v: v not in trace.config_vars)
        rows = _projection(trace, prefix, shared)
        keep = list(shared)
        suffix_fs = trace.formulas(suffix, True)
        for v in reversed(shared):
            trial = [k for k in keep if k != v]
            f = _formula(trial, _project(rows, shared, trial))
            if solve(suffix_fs + [f], trace.domains) is None:
                keep = trial
        formula = _formula(keep, _project(rows, shared, keep))
        implied = solve(trace.formulas(prefix, False) + [Not(formula)], trace.domains) is None
        inconsistent = solve(suffix_fs + [formula], trace.domains) is None
        out.append(Explanation(cut, prefix, suffix, formula, tuple(keep), implied, inconsistent))
    return out


# ---------------------------------------------------------------- trace generation

_ROUTE_FIELDS = ("valid", "lp", "len", "nh", "ibgp")


def _route(name: str, fld: str) -> str:
    return f"{name}.{fld}"


def generate_trace(net: SimResult, req: Requirement) -> Trace:
    """Encode the BGP computation relevant to a violated requirement.

    The slice covers routers on the actual forwarding path and on the
    intended route-propagation path.  Imports from routers outside the slice
    are recorded as the concrete routes that arrived.
    """
    from .rpg import build_rpg, requirement_layer

    verdict = check_path(net, req)
    if verdict.satisfied:
        raise NotAnError(f"{req.ident or req.path_regex} holds")
    asn = net.topology.asn
    if requirement_layer(req, asn) is not Protocol.BGP:
        raise UnsupportedConstraint("trace encoding covers BGP requirements only")
    rpg = build_rpg([req], net, [verdict], layer=Protocol.BGP)
    eng = net.bgp.get(req.prefix)
    if eng is None:
        eng = BgpEngine(net, req.prefix).run()
    origin = rpg.origin.router
    intended = rpg.ordered_routers()
    actual = [r for r in (verdict.path or ()) if r in eng.best]
    members = set(intended) | set(actual) | {origin}

    def level(r: str) -> tuple:
        if eng.best.get(r):
            return (len(eng.best[r][0].path), r)
        return (len(intended) if r not in intended else intended.index(r), r)

    routers = sorted(members, key=lambda r: (r != origin, level(r)))

    lps = {100}
    for dev in net.corpus.values():
        for clauses in dev.route_policies.values():
            lps.update(c.local_preference for c in clauses if c.local_preference is not None)
    for rs in eng.best.values():
        lps.update(x.local_pref for x in rs)
    lps.add(max(lps) + 1)
    names = sorted(set(net.corpus) | {"-"})
    max_len = max(len(eng.routers), 2) + 1
    domains: dict[str, tuple[Value, ...]] = {}
    config: set[str] = set()
    stmts: list[Statement] = []

    def route_domains(rv: str) -> None:
        domains[_route(rv, "valid")] = (0, 1)
        domains[_route(rv, "lp")] = tuple(sorted(lps))
        domains[_route(rv, "len")] = tuple(range(max_len + 1))
        domains[_route(rv, "nh")] = tuple(names)
        domains[_route(rv, "ibgp")] = (0, 1)

    def add(kind: str, label: str, clauses: list[Formula], router: str) -> None:
        stmts.append(Statement(len(stmts), kind, label, tuple(clauses), router))

    # origination
    o = f"o{origin}"
    domains[o] = (0, 1)
    config.add(o)
    best_o = f"best{origin}"
    route_domains(best_o)
    originated = int(bool(eng.local.get(origin)))
    add("origination", f"{origin} originates {req.prefix}" if originated else f"{origin} does not originate {req.prefix}",
        [eq(o, originated), Iff(eq(_route(best_o, "valid"), 1), eq(o, 1)),
         Implies(eq(o, 1), conj(eq(_route(best_o, "len"), 0), eq(_route(best_o, "nh"), "-"),
                                eq(_route(best_o, "ibgp"), 0), eq(_route(best_o, "lp"), 100)))], origin)

    rpg_edges = rpg.router_edges()
    for v in routers:
        if v == origin:
            continue
        best_v = f"best{v}"
        route_domains(best_v)
        peers = sorted(u for (x, u), s in eng.sessions.items() if x == v and s.established)
        cands = []
        for u in peers:
            arrived = u in eng.adj_in.get(v, {})
            if u in members:
                refused = bool(eng.best.get(u)) and not arrived and _policy_refusal(eng, u, v)
                if arrived or (u, v) in rpg_edges or refused:
                    cands.append(u)
            elif arrived:
                cands.append(u)
        for k, u in enumerate(cands, 1):
            ri = f"ri{v}{k}"
            route_domains(ri)
            ibgp = int(eng.sessions[(v, u)].ibgp)
            if u not in members:
                got = eng.adj_in[v][u][0]
                add("propagation", f"{v} receives {u}'s route", [
                    eq(_route(ri, "valid"), 1), eq(_route(ri, "lp"), got.local_pref),
                    eq(_route(ri, "len"), len(got.as_path)), eq(_route(ri, "nh"), u),
                    eq(_route(ri, "ibgp"), ibgp)], v)
                continue
            best_u = f"best{u}"
            f = f"f{v}<-{u}"
            domains[f] = ("deny", "permit")
            config.add(f)
            verdict_f, lp_set = _policy_effect(eng, u, v)
            gate = [eq(_route(best_u, "valid"), 1), Atom("!=", Var(_route(best_u, "nh")), v), eq(f, "permit")]
            if ibgp and not _reflects(net, u):
                gate.append(eq(_route(best_u, "ibgp"), 0))
            clauses: list[Formula] = [eq(f, verdict_f), Iff(eq(_route(ri, "valid"), 1), conj(*gate))]
            if lp_set is not None:
                clauses.append(eq(_route(ri, "lp"), lp_set))
                config.add(_route(ri, "lp"))
            elif ibgp:
                clauses.append(eq(_route(ri, "lp"), Var(_route(best_u, "lp"))))
            else:
                clauses.append(eq(_route(ri, "lp"), 100))
            clauses += [eq(_route(ri, "len"), Var(_route(best_u, "len")), 0 if ibgp else 1),
                        eq(_route(ri, "nh"), u), eq(_route(ri, "ibgp"), ibgp)]
            add("transformation", f"{v} imports the route from {u}", clauses, v)
        sel = f"sel{v}"
        domains[sel] = tuple(range(len(cands) + 1))
        clauses = [Implies(eq(sel, 0), conj(eq(_route(best_v, "valid"), 0),
                                            *(eq(_route(f"ri{v}{k}", "valid"), 0) for k in range(1, len(cands) + 1))))]
        for k, u in enumerate(cands, 1):
            rk = f"ri{v}{k}"
            body: list[Formula] = [eq(_route(rk, "valid"), 1)]
            body += [eq(_route(best_v, fld), Var(_route(rk, fld))) for fld in _ROUTE_FIELDS]
            for j, w in enumerate(cands, 1):
                if j != k:
                    body.append(_beats(rk, f"ri{v}{j}", net.router_ids[u], u, net.router_ids[w], w))
            clauses.append(Implies(eq(sel, k), conj(*body)))
        add("selection", f"{v} selects its best route", clauses, v)

    goals: list[Formula] = [eq(_route(best_o, "valid"), 1)]
    for r in intended:
        if r == origin:
            continue
        for d in sorted(rpg.expected.get(r, ())):
            goals += [eq(_route(f"best{r}", "valid"), 1), eq(_route(f"best{r}", "nh"), d.next_hop)]
    trace = Trace(stmts, conj(*goals), domains, frozenset(config), req)
    if check_sat(trace, range(len(stmts))):
        raise NotAnError("the encoded trace is consistent with the requirement")
    return trace


def _beats(a: str, b: str, rid_a: int, name_a: str, rid_b: int, name_b: str) -> Formula:
    """Route ``a`` is preferred over ``b`` (or ``b`` is absent)."""
    lp = lambda r: Var(_route(r, "lp"))
    ln = lambda r: Var(_route(r, "len"))
    ib = lambda r: Var(_route(r, "ibgp"))
    same_lp = Atom("==", lp(b), lp(a))
    same_len = Atom("==", ln(b), ln(a))
    tie = (rid_a, name_a) < (rid_b, name_b)
    return Or((eq(_route(b, "valid"), 0),
               Atom("<", lp(b), lp(a)),
               And((same_lp, Atom(">", ln(b), ln(a)))),
               And((same_lp, same_len, Atom(">", ib(b), ib(a)))),
               And((same_lp, same_len, Atom("==", ib(b), ib(a)), Const(tie)))))


def _reflects(net: SimResult, u: str) -> bool:
    bgp = net.corpus[u].bgp
    return bgp is not None and any(nb.route_reflector_client for nb in bgp.neighbors)


def _policy_effect(eng: BgpEngine, u: str, v: str) -> tuple[str, int | None]:
    """(permit|deny, local-preference set by policy) for u's route offered to v."""
    net = eng.net
    best = eng.best.get(u)
    route = best[0] if best else None
    comms = route.communities if route else frozenset()
    path = route.as_path if route else ()
    out = net.corpus[u].evaluate_policy(eng.export_policy(u, v), eng.prefix, comms, path)
    if not out.permit:
        return "deny", None
    s = eng.sessions[(v, u)]
    sent_path = path if s.ibgp else (net.corpus[u].bgp.asn,) + tuple(path)
    inn = net.corpus[v].evaluate_policy(eng.import_policy(v, u), eng.prefix, out.communities, sent_path)
    if not inn.permit:
        return "deny", None
    if inn.local_pref is not None:
        return "permit", inn.local_pref
    if s.ibgp and out.local_pref is not None:
        return "permit", out.local_pref
    return "permit", None


def _policy_refusal(eng: BgpEngine, u: str, v: str) -> bool:
    route = eng.best[u][0]
    x, why = eng.export_verdict(u, v, route)
    if x is None:
        return why == "export-policy"
    return eng.import_verdict(v, u, x)[1] == "import-policy"


@dataclass
class Diagnosis:
    trace: Trace
    mucs: list[tuple[int, ...]]
    explanations: dict[tuple[int, ...], list[Explanation]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"trace": self.trace.to_json(),
                "mucs": [{"statements": [i + 1 for i in m],
                          "explanations": [e.to_json() for e in self.explanations.get(m, [])]}
                         for m in self.mucs]}


def diagnose_trace(net: SimResult, req: Requirement, budget: float | None = 30.0) -> Diagnosis:
    trace = generate_trace(net, req)
    mucs = all_mucs(trace, budget)
    return Diagnosis(trace, mucs, {m: explain(m, trace) for m in mucs})


def brute_force_mucs(trace: Trace) -> list[tuple[int, ...]]:
    """Power-set reference: every unsatisfiable subset whose proper subsets are satisfiable."""
    n = len(trace)
    unsat = {}
    for size in range(n + 1):
        for combo in itertools.combinations(range(n), size):
            unsat[combo] = not check_sat(trace, combo)
    out = []
    for combo, bad in unsat.items():
        if bad and not any(unsat[tuple(x for x in combo if x != i)] for i in combo):
            out.append(combo)
    return sorted(out, key=lambda m: (len(m), m))
