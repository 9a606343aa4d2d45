"""Map violated conditions to configuration lines and generate patches.

Policy edits are planned on an in-memory model of each route-map and
turned into line patches by diffing the rendered clauses against the
original lines, so untouched clauses keep their exact text.
"""
from __future__ import annotations

import difflib
import heapq
import ipaddress
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .config import Corpus, DeviceConfig, Match, Patch, SourceLoc
from .requirements import Requirement
from .rpg import RouteProgGraph
from .sim import OspfEngine, Protocol, Route, SimResult
from .symsim import (IS_EXPORT, IS_IMPORT, PEER, PREFER, Condition, DeviationSet, Evidence, forced_session,
                     session_addresses)

log = logging.getLogger(__name__)

REDISTRIBUTION = "redistribution"
MISSING_PEER = "missing_peer"
SEND_RECEIVE = "send_receive"
PREFERENCE = "preference"
OSPF_PEER = "ospf_peer"
OSPF_COST = "ospf_cost"


class PatchConflict(Exception):
    pass


class CostSolverDiverged(RuntimeError):
    def __init__(self, bound: int):
        super().__init__(f"cost solver exceeded {bound} rounds")
        self.bound = bound


class CostUnsolvable(RuntimeError):
    """A violated constraint has no concrete cost left to raise."""


@dataclass
class Diagnosis:
    condition: Condition
    category: str
    explanation: str
    locations: tuple[SourceLoc, ...]
    anchor: SourceLoc
    evidence: Evidence | None = None
    warning: bool = False
    underlay: bool = False
    patches: list[Patch] = field(default_factory=list)
    note: str = ""

    def to_json(self) -> dict:
        d = {"condition": self.condition.to_json(), "type": self.category, "explanation": self.explanation,
             "locations": [str(l) for l in self.locations], "anchor": str(self.anchor),
             "patches": [p.to_json() for p in self.patches]}
        if self.warning:
            d["warning"] = True
        if self.underlay:
            d["underlay"] = True
        if self.note:
            d["note"] = self.note
        return d


# ---------------------------------------------------------------- diagnosis

def _bgp_anchor(dev: DeviceConfig) -> SourceLoc:
    if dev.bgp is not None:
        return SourceLoc(dev.file, dev.bgp.end)
    return SourceLoc(dev.file, dev.last_line)


def _neighbor_for(net: SimResult, u: str, v: str):
    s = net.sessions.get((u, v))
    ip = s.v_ip if s is not None else forced_session(net, u, v).v_ip
    dev = net.corpus[u]
    return ip, (dev.bgp.neighbor(ip) if dev.bgp is not None else None)


def _clause_locs(dev: DeviceConfig, policy: str | None, clause) -> list[SourceLoc]:
    if policy is None:
        return []
    if clause is not None:
        return [SourceLoc(dev.file, n) for n in range(clause.loc.line, clause.end + 1)]
    return [SourceLoc(dev.file, c.loc.line) for c in dev.route_policies.get(policy, ())]


def diagnose(deviations: DeviationSet, corpus: Corpus, net: SimResult | None = None) -> list[Diagnosis]:
    """Classify every condition and point it at configuration lines."""
    from .sim import simulate
    net = net or simulate(corpus)
    out = []
    for cond in deviations:
        ev = deviations.evidence.get(cond)
        out.append(_diagnose_one(cond, ev, corpus, net))
    return out


def _diagnose_one(cond: Condition, ev: Evidence | None, corpus: Corpus, net: SimResult) -> Diagnosis:
    if cond.kind == IS_EXPORT and cond.same_router:
        return _diag_origin(cond, ev, corpus, net)
    if cond.kind in (IS_EXPORT, IS_IMPORT):
        return _diag_filter(cond, ev, corpus, net)
    if cond.kind == PEER:
        if cond.protocol is Protocol.BGP:
            return _diag_bgp_peer(cond, ev, corpus, net)
        return _diag_ospf_peer(cond, ev, corpus, net)
    if cond.protocol is Protocol.BGP:
        return _diag_prefer(cond, ev, corpus, net)
    return _diag_cost(cond, ev, corpus, net)


def _diag_origin(cond, ev, corpus, net) -> Diagnosis:
    r = cond.router
    dev = corpus[r]
    prefix = ipaddress.IPv4Network(cond.route.prefix)
    if cond.protocol is Protocol.OSPF:
        itf = next((i for i in dev.interfaces if i.prefix == prefix), None)
        locs = (itf.loc,) if itf else ()
        return Diagnosis(cond, REDISTRIBUTION, f"{r}: interface carrying {prefix} is not in OSPF",
                         locs, SourceLoc(dev.file, itf.end if itf else dev.last_line), ev)
    src = cond.src.protocol
    if src is Protocol.STATIC:
        statics = [s for s in dev.static_routes if s.prefix == prefix]
        bad = [s for s in statics if prefix not in net.static.get(r, {})]
        if bad:
            return Diagnosis(cond, REDISTRIBUTION, f"{r}: static route for {prefix} is invalid ({bad[0].target})",
                             tuple(s.loc for s in bad), bad[0].loc, ev)
        locs = tuple(s.loc for s in statics) + ((dev.bgp.loc,) if dev.bgp else ())
        return Diagnosis(cond, REDISTRIBUTION, f"{r}: static route {prefix} is not redistributed into BGP",
                         locs, _bgp_anchor(dev), ev)
    locs = (dev.bgp.loc,) if dev.bgp else ()
    return Diagnosis(cond, REDISTRIBUTION, f"{r}: no network statement for {prefix}", locs, _bgp_anchor(dev), ev)


def _diag_filter(cond, ev, corpus, net) -> Diagnosis:
    u, v = cond.src.router, cond.dst.router
    route = ev.route if ev else None
    if cond.kind == IS_EXPORT:
        at, other, direction = u, v, "out"
    else:
        at, other, direction = v, u, "in"
    dev = corpus[at]
    ip, nb = _neighbor_for(net, at, other)
    if ev is not None and ev.reason == "ibgp-no-reflect":
        locs = tuple(x.loc for x in (nb,) if x is not None)
        return Diagnosis(cond, SEND_RECEIVE, f"{u}: iBGP route from an iBGP peer is not reflected to {v}",
                         locs, nb.loc if nb else _bgp_anchor(dev), ev)
    if ev is not None and ev.reason not in ("export-policy", "import-policy"):
        return Diagnosis(cond, SEND_RECEIVE, f"{u}->{v}: route dropped ({ev.reason})", (), _bgp_anchor(dev), ev,
                         warning=True)
    policy = None
    attach = None
    if nb is not None:
        policy = nb.export_policy if direction == "out" else nb.import_policy
        attach = nb.export_loc if direction == "out" else nb.import_loc
    clause = None
    if policy is not None and route is not None:
        res = dev.evaluate_policy(policy, route.prefix, route.communities, route.as_path)
        clause = res.clause
    locs = ([attach] if attach else []) + _clause_locs(dev, policy, clause)
    what = f"deny clause {policy} {clause.order}" if clause is not None else f"no permitting clause in {policy}"
    verb = "export to" if direction == "out" else "import from"
    return Diagnosis(cond, SEND_RECEIVE, f"{at}: {what} blocks the {verb} {other}",
                     tuple(locs), attach or _bgp_anchor(dev), ev)


def _diag_bgp_peer(cond, ev, corpus, net) -> Diagnosis:
    v, u = cond.router, cond.peer
    locs = []
    for a, b in ((v, u), (u, v)):
        dev = corpus[a]
        if dev.bgp is None:
            continue
        for nb in dev.bgp.neighbors:
            if corpus[b].owns_ip(nb.peer_ip):
                locs.append(nb.loc)
    reason = ev.reason if ev else ""
    underlay = "cannot reach" in reason
    text = f"no BGP session between {v} and {u}" + (f": {reason}" if reason else "")
    return Diagnosis(cond, MISSING_PEER, text, tuple(locs), _bgp_anchor(corpus[v]), ev, underlay=underlay)


def _diag_ospf_peer(cond, ev, corpus, net) -> Diagnosis:
    v, u = cond.router, cond.peer
    locs = []
    for a, b in ((v, u), (u, v)):
        for itf in _facing(net, a, b):
            if not itf.ospf_enabled:
                locs.append(itf.loc)
            elif itf.ospf_area_loc:
                locs.append(itf.ospf_area_loc)
        if corpus[a].ospf is None:
            locs.append(SourceLoc(corpus[a].file, corpus[a].last_line))
    return Diagnosis(cond, OSPF_PEER, f"no OSPF adjacency between {v} and {u}", tuple(locs),
                     locs[0] if locs else SourceLoc(corpus[v].file, corpus[v].last_line), ev)


def _diag_prefer(cond, ev, corpus, net) -> Diagnosis:
    v = cond.router
    dev = corpus[v]
    locs = []
    for r in (ev.competitors if ev else ()):
        if r.learned_from is None:
            continue
        _, nb = _neighbor_for(net, v, r.learned_from)
        if nb is not None and nb.import_policy:
            res = dev.evaluate_policy(nb.import_policy, r.prefix, r.communities, r.as_path)
            if res.clause is not None and res.clause.lp_loc is not None:
                locs.append(res.clause.lp_loc)
    top = ev.competitors[0] if ev and ev.competitors else None
    mine = ev.route if ev else None
    text = f"{v} prefers {cond.other} over {cond.route}"
    if top is not None and mine is not None:
        text += f" (local-preference {top.local_pref} vs {mine.local_pref})"
    warn = top is not None and top.local
    return Diagnosis(cond, PREFERENCE, text, tuple(dict.fromkeys(locs)), _bgp_anchor(dev), ev, warning=warn)


def _diag_cost(cond, ev, corpus, net) -> Diagnosis:
    v = cond.router
    locs = []
    for r in ((ev.route,) + tuple(ev.competitors)) if ev else ():
        if r.learned_from is not None:
            for itf in _facing(net, v, r.learned_from):
                locs.append(itf.cost_loc or itf.loc)
    return Diagnosis(cond, OSPF_COST, f"{v}: OSPF cost prefers {cond.other} over {cond.route}",
                     tuple(dict.fromkeys(locs)), SourceLoc(corpus[v].file, corpus[v].last_line), ev)


def _facing(net: SimResult, a: str, b: str):
    dev = net.corpus[a]
    out = []
    for l in net.links:
        if set(l.routers) == {a, b}:
            out.append(dev.interface(l.iface(a)))
    return out


# ---------------------------------------------------------------- route-map model

@dataclass
class _Clause:
    order: int
    action: str
    matches: list[tuple[str, str]]
    lp: int | None = None
    comms: tuple[str, ...] = ()
    additive: bool = True
    lines: list[tuple[int, str]] | None = None  # original text while unchanged

    def render(self, name: str) -> list[str]:
        out = [f"route-map {name} {self.action} {self.order}"]
        out += [f" match {k} {v}" for k, v in self.matches]
        if self.lp is not None:
            out.append(f" set local-preference {self.lp}")
        if self.comms:
            out.append(f" set community {' '.join(self.comms)}" + (" additive" if self.additive else ""))
        return out

    def applies(self, route: Route) -> bool:
        return all(Match(k, v, None).holds(route.prefix, route.communities, route.as_path)
                   for k, v in self.matches)


def _load_policy(dev: DeviceConfig, text: str, name: str) -> list[_Clause]:
    lines = text.split("\n")
    out = []
    for c in dev.route_policies.get(name, ()):
        orig = [(n, lines[n - 1]) for n in range(c.loc.line, c.end + 1)
                if lines[n - 1].strip() and not lines[n - 1].strip().startswith("!")]
        out.append(_Clause(c.order, c.action, [(m.kind, m.value) for m in c.matches], c.local_preference,
                           tuple(c.communities), c.additive, orig))
    return out


def _first_match(model: list[_Clause], route: Route) -> int | None:
    for i, c in enumerate(model):
        if c.applies(route):
            return i
    return None


def _insert_before(model: list[_Clause], i: int, clause: _Clause) -> None:
    prev = model[i - 1].order if i > 0 else 0
    if model[i].order - prev < 2:
        for n, c in enumerate(model, start=1):
            c.order = 10 * n
            c.lines = None
        prev = model[i - 1].order if i > 0 else 0
    clause.order = prev + (model[i].order - prev) // 2
    model.insert(i, clause)


def _apply_intent(model: list[_Clause], route: Route, lp: int | None) -> None:
    pm = ("prefix", str(route.prefix))
    for _ in range(len(model) + 4):
        i = _first_match(model, route)
        if i is None:
            order = (max((c.order for c in model), default=0) // 10 + 1) * 10
            model.append(_Clause(order, "permit", [pm], lp))
            continue
        c = model[i]
        if c.action == "deny":
            if c.matches == [pm]:
                del model[i]
            else:
                _insert_before(model, i, _Clause(0, "permit", [pm] + [m for m in c.matches if m != pm], lp))
            continue
        if lp is None or (c.lp is not None and c.lp >= lp):
            return
        if pm in c.matches:
            c.lp = lp
            c.lines = None
            return
        _insert_before(model, i, _Clause(0, "permit", [pm] + [m for m in c.matches if m != pm], lp,
                                         c.comms, c.additive))
    raise PatchConflict(f"could not plan a permit for {route.prefix}")


def _diff_patches(file: str, original: list[tuple[int, str]], new: list[str], first_anchor: int) -> list[Patch]:
    a = [t.strip() for _, t in original]
    b = [t.strip() for t in new]
    out: list[Patch] = []
    sm = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
    for tag, i1, i2, j1, j2 in sm.get_opcodes():
        if tag == "equal":
            continue
        if tag in ("delete", "replace"):
            for n, text in original[i1:i2]:
                out.append(Patch(SourceLoc(file, n), "delete", text.strip()))
        if tag in ("insert", "replace"):
            anchor = original[i1 - 1][0] if i1 > 0 else first_anchor
            for text in new[j1:j2]:
                out.append(Patch(SourceLoc(file, anchor), "add", text))
    return out


@dataclass
class _Intent:
    router: str
    peer: str
    direction: str  # "in" | "out"
    route: Route
    lp: int | None
    diag: Diagnosis


def _plan_policies(intents: list[_Intent], corpus: Corpus, net: SimResult) -> None:
    groups: dict[tuple[str, str, str], list[_Intent]] = {}
    for it in intents:
        groups.setdefault((it.router, it.peer, it.direction), []).append(it)
    for (r, peer, direction), its in groups.items():
        dev = corpus[r]
        text = corpus.texts[dev.file]
        ip, nb = _neighbor_for(net, r, peer)
        policy = None
        if nb is not None:
            policy = nb.import_policy if direction == "in" else nb.export_policy
        merged: dict[str, tuple[Route, int | None]] = {}
        for it in its:
            key = str(it.route.prefix)
            old = merged.get(key)
            lp = it.lp if old is None or old[1] is None else (old[1] if it.lp is None else max(old[1], it.lp))
            merged[key] = ((old[0] if old else it.route), lp)
        patches: list[Patch] = []
        tag = "FROM" if direction == "in" else "TO"
        fresh = _fresh_name(dev, f"RF_{r}_{tag}_{peer}")
        if policy is None:
            model: list[_Clause] = []
            for n, (key, (route, lp)) in enumerate(sorted(merged.items()), start=1):
                model.append(_Clause(10 * n, "permit", [("prefix", key)], lp))
            model.append(_Clause(10 * (len(model) + 1), "permit", []))
            anchor = nb.loc.line if nb is not None else dev.bgp.end
            patches.append(Patch(SourceLoc(dev.file, anchor), "add", f" neighbor {ip} route-map {fresh} {direction}"))
            for c in model:
                patches += [Patch(SourceLoc(dev.file, dev.last_line), "add", ln) for ln in c.render(fresh)]
        else:
            model = _load_policy(dev, text, policy)
            original = [ln for c in model for ln in (c.lines or [])]
            for key, (route, lp) in sorted(merged.items()):
                _apply_intent(model, route, lp)
            shared = len({(x.peer_ip, d) for x, d in dev.policy_users(policy)}) > 1
            if shared:
                attach = nb.import_loc if direction == "in" else nb.export_loc
                line = text.split("\n")[attach.line - 1].strip()
                patches.append(Patch(attach, "delete", line))
                patches.append(Patch(attach, "add", f" neighbor {ip} route-map {fresh} {direction}"))
                for c in model:
                    patches += [Patch(SourceLoc(dev.file, dev.last_line), "add", ln) for ln in c.render(fresh)]
            else:
                new = [ln for c in model for ln in ([t for _, t in c.lines] if c.lines else c.render(policy))]
                first = dev.route_policies[policy][0].loc.line - 1 if dev.route_policies.get(policy) else dev.last_line
                patches += _diff_patches(dev.file, original, new, first)
        owner = its[0].diag
        owner.patches.extend(patches)
        for it in its[1:]:
            if it.diag is not owner and not it.diag.note:
                it.diag.note = f"covered by {owner.condition.ident}"


def _fresh_name(dev: DeviceConfig, base: str) -> str:
    name, n = base, 1
    while name in dev.route_policies:
        n += 1
        name = f"{base}_{n}"
    return name


# ---------------------------------------------------------------- patch generation

def generate_patches(diagnoses: Sequence[Diagnosis], corpus: Corpus, net: SimResult | None = None) -> list[Patch]:
    """Patches for every diagnosis; OSPF preference is left to the cost solver."""
    from .sim import simulate
    net = net or simulate(corpus)
    intents: list[_Intent] = []
    extra_ospf: set[str] = set()
    for d in diagnoses:
        c = d.condition
        if c.kind == IS_EXPORT and c.same_router:
            d.patches.extend(_origin_patches(d, corpus, net, extra_ospf))
        elif c.kind in (IS_EXPORT, IS_IMPORT):
            ev = d.evidence
            if ev is None or ev.route is None:
                d.warning = True
                continue
            if ev.reason == "ibgp-no-reflect":
                u, v = c.src.router, c.dst.router
                ip, nb = _neighbor_for(net, u, v)
                if nb is not None and not nb.route_reflector_client:
                    d.patches.append(Patch(nb.loc, "add", f" neighbor {ip} route-reflector-client"))
                continue
            if c.kind == IS_EXPORT:
                intents.append(_Intent(c.src.router, c.dst.router, "out", ev.route, None, d))
            else:
                intents.append(_Intent(c.dst.router, c.src.router, "in", ev.route, None, d))
        elif c.kind == PEER and c.protocol is Protocol.BGP:
            d.patches.extend(_bgp_peer_patches(c, corpus, net))
        elif c.kind == PEER:
            d.patches.extend(_ospf_peer_patches(c.router, c.peer, corpus, net, extra_ospf))
        elif c.kind == PREFER and c.protocol is Protocol.BGP:
            ev = d.evidence
            if ev is None or not ev.competitors or d.warning:
                d.warning = True
                continue
            lp = max(r.local_pref for r in ev.competitors if not r.local) + 1
            offered = ev.offered or ev.route
            intents.append(_Intent(c.router, ev.route.learned_from, "in", offered, lp, d))
    _plan_policies(intents, corpus, net)
    out: list[Patch] = []
    for d in diagnoses:
        out.extend(d.patches)
    return out


def _origin_patches(d: Diagnosis, corpus: Corpus, net: SimResult, extra_ospf: set[str]) -> list[Patch]:
    c = d.condition
    r = c.router
    dev = corpus[r]
    prefix = ipaddress.IPv4Network(c.route.prefix)
    if c.protocol is Protocol.OSPF:
        itf = next((i for i in dev.interfaces if i.prefix == prefix), None)
        if itf is None:
            d.warning = True
            return []
        out = [Patch(SourceLoc(dev.file, itf.end), "add", f" ip ospf area {_area(dev)}")] if not itf.ospf_enabled else []
        return out + _ensure_ospf(dev, extra_ospf)
    if dev.bgp is None:
        d.warning = True
        return []
    out = []
    if c.src.protocol is Protocol.STATIC:
        statics = [s for s in dev.static_routes if s.prefix == prefix]
        valid = [s for s in statics if prefix in net.static.get(r, {})]
        if not valid:
            target = next((i.name for i in dev.interfaces if i.prefix == prefix), "Null0")
            for s in statics:
                out.append(Patch(s.loc, "delete", f"ip route {s.prefix} {s.target}"))
            anchor = statics[0].loc if statics else SourceLoc(dev.file, dev.last_line)
            out.append(Patch(anchor, "add", f"ip route {prefix} {target}"))
        if not dev.bgp.redistributes("static"):
            out.append(Patch(_bgp_anchor(dev), "add", " redistribute static"))
    else:
        out.append(Patch(_bgp_anchor(dev), "add", f" network {prefix}"))
    return out


def _area(dev: DeviceConfig) -> int:
    return next((i.ospf_area for i in dev.interfaces if i.ospf_enabled), 0)


def _ensure_ospf(dev: DeviceConfig, done: set[str]) -> list[Patch]:
    if dev.ospf is not None or dev.name in done:
        return []
    done.add(dev.name)
    return [Patch(SourceLoc(dev.file, dev.last_line), "add", "router ospf 1")]


def _bgp_peer_patches(c: Condition, corpus: Corpus, net: SimResult) -> list[Patch]:
    v, u = c.router, c.peer
    ip_v, ip_u = session_addresses(corpus, v, u)
    out = []
    for a, b, peer_ip in ((v, u, ip_u), (u, v, ip_v)):
        da, db = corpus[a], corpus[b]
        if da.bgp is None or db.bgp is None:
            continue
        nb = da.bgp.neighbor(peer_ip)
        want = f" neighbor {peer_ip} remote-as {db.bgp.asn}"
        if nb is None:
            out.append(Patch(_bgp_anchor(da), "add", want))
        elif nb.remote_as != db.bgp.asn:
            out.append(Patch(nb.loc, "delete", f"neighbor {peer_ip} remote-as {nb.remote_as}"))
            out.append(Patch(nb.loc, "add", want))
    return out


def _ospf_peer_patches(v: str, u: str, corpus: Corpus, net: SimResult, extra_ospf: set[str]) -> list[Patch]:
    out = []
    pairs = [(v, i) for i in _facing(net, v, u)] + [(u, i) for i in _facing(net, u, v)]
    areas = {i.ospf_area for _, i in pairs if i.ospf_enabled}
    area = min(areas) if areas else 0
    for r, itf in pairs:
        dev = corpus[r]
        if itf.ospf_enabled and itf.ospf_area == area:
            continue
        if itf.ospf_enabled:
            out.append(Patch(itf.ospf_area_loc, "delete", f"ip ospf area {itf.ospf_area}"))
            out.append(Patch(itf.ospf_area_loc, "add", f" ip ospf area {area}"))
        else:
            out.append(Patch(SourceLoc(dev.file, itf.end), "add", f" ip ospf area {area}"))
    for r in (v, u):
        out += _ensure_ospf(corpus[r], extra_ospf)
    return out


# ---------------------------------------------------------------- OSPF costs

@dataclass(frozen=True, order=True)
class CostEdge:
    router: str
    neighbor: str
    interface: str

    def __str__(self) -> str:
        return f"{self.router}->{self.neighbor}"


@dataclass(frozen=True)
class CostConstraint:
    """sum(lhs) + lhs_const < sum(rhs) + rhs_const."""
    lhs: tuple[CostEdge, ...]
    rhs: tuple[CostEdge, ...]
    lhs_const: int = 0
    rhs_const: int = 0

    def holds(self, costs: Mapping[CostEdge, int]) -> bool:
        return sum(costs[e] for e in self.lhs) + self.lhs_const < sum(costs[e] for e in self.rhs) + self.rhs_const

    def __str__(self) -> str:
        left = " + ".join(map(str, self.lhs)) or "0"
        right = " + ".join(map(str, self.rhs)) or "0"
        return f"{left} < {right}"


def solve_ospf_costs(constraints: Sequence[CostConstraint], concrete: Mapping[CostEdge, int],
                     bound: int | None = None) -> dict[CostEdge, int]:
    """Positive integer costs satisfying every constraint.

    Symbolic edges (any left-hand side) start at 1; a violated constraint
    raises its smallest concrete right-hand edge by one until all hold.
    """
    costs = dict(concrete)
    if all(c.holds(costs) for c in constraints):
        return costs
    symbolic = {e for c in constraints for e in c.lhs}
    for e in symbolic:
        costs[e] = 1
    max_cost = max([*concrete.values(), 1])
    bound = bound or 10 * max(1, len(constraints)) * max_cost
    for _ in range(bound):
        bad = next((c for c in constraints if not c.holds(costs)), None)
        if bad is None:
            return costs
        raisable = [e for e in bad.rhs if e not in symbolic]
        if not raisable:
            raise CostUnsolvable(str(bad))
        e = min(raisable, key=lambda x: (costs[x], x))
        costs[e] += 1
    if all(c.holds(costs) for c in constraints):
        return costs
    raise CostSolverDiverged(bound)


def _cost_graph(net: SimResult) -> tuple[dict[str, list[str]], dict[tuple[str, str], CostEdge], dict[CostEdge, int]]:
    adj: dict[str, list[str]] = {}
    edges: dict[tuple[str, str], CostEdge] = {}
    costs: dict[CostEdge, int] = {}
    for pair in net.ospf_adjacencies:
        a, b = sorted(pair)
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
        for x, y in ((a, b), (b, a)):
            itfs = sorted((i for i in _facing(net, x, y) if i.ospf_enabled), key=lambda i: (i.ospf_cost, i.name))
            if itfs:
                e = CostEdge(x, y, itfs[0].name)
                edges[(x, y)] = e
                costs[e] = itfs[0].ospf_cost
    return {k: sorted(v) for k, v in adj.items()}, edges, costs


def _shortest(adj, edges, costs, src: str, dst: str, avoid: str) -> list[str] | None:
    dist = {src: 0}
    prev: dict[str, str] = {}
    heap = [(0, src)]
    while heap:
        d, x = heapq.heappop(heap)
        if x == dst:
            path = [x]
            while path[-1] != src:
                path.append(prev[path[-1]])
            return path[::-1]
        if d > dist.get(x, 1 << 60):
            continue
        for y in adj.get(x, []):
            if y == avoid or (x, y) not in edges:
                continue
            nd = d + costs[edges[(x, y)]]
            if nd < dist.get(y, 1 << 60) or (nd == dist.get(y) and x < prev.get(y, x)):
                dist[y] = nd
                prev[y] = x
                heapq.heappush(heap, (nd, y))
    return None


def build_cost_constraints(paths: Iterable[Sequence[str]], net: SimResult,
                           costs: Mapping[CostEdge, int] | None = None) -> list[CostConstraint]:
    """For each hop of each required path, the remaining required cost must beat every detour."""
    adj, edges, base = _cost_graph(net)
    costs = dict(costs or base)
    out: dict[CostConstraint, None] = {}
    for path in paths:
        dst = path[-1]
        for i in range(len(path) - 1):
            v = path[i]
            lhs = tuple(edges[(path[j], path[j + 1])] for j in range(i, len(path) - 1)
                        if (path[j], path[j + 1]) in edges)
            if len(lhs) != len(path) - 1 - i:
                continue
            for w in adj.get(v, []):
                if w == path[i + 1] or (v, w) not in edges:
                    continue
                rest = [w] if w == dst else _shortest(adj, edges, costs, w, dst, avoid=v)
                if rest is None:
                    continue
                rhs = (edges[(v, w)],) + tuple(edges[(rest[j], rest[j + 1])] for j in range(len(rest) - 1))
                out[CostConstraint(lhs, rhs)] = None
    return list(out)


def repair_ospf_costs(targets: Sequence[tuple[Requirement, Sequence[str]]], net: SimResult,
                      rounds: int = 5) -> tuple[list[Patch], dict[CostEdge, int], list[CostConstraint]]:
    """Solve costs for required OSPF paths and render interface cost patches.

    Raises CostUnsolvable or CostSolverDiverged when no assignment is found.
    """
    adj, edges, base = _cost_graph(net)
    costs = dict(base)
    paths = [tuple(p) for _, p in targets]
    constraints: list[CostConstraint] = []
    for _ in range(rounds):
        constraints = build_cost_constraints(paths, net, costs)
        costs = solve_ospf_costs(constraints, costs)
        if _paths_followed(net, costs, targets):
            return _cost_patches(net, base, costs), costs, constraints
    raise CostSolverDiverged(rounds)


def _paths_followed(net: SimResult, costs: Mapping[CostEdge, int], targets) -> bool:
    full = dict(net.ospf_costs)
    full.update({(e.router, e.neighbor): c for e, c in costs.items()})
    for req, path in targets:
        eng = OspfEngine(net, req.prefix, costs=full).run()
        for a, b in zip(path, path[1:]):
            best = eng.best.get(a, [])
            if not best or best[0].next_hop != b:
                return False
    return True


def _cost_patches(net: SimResult, before: Mapping[CostEdge, int], after: Mapping[CostEdge, int]) -> list[Patch]:
    out = []
    for e in sorted(after):
        if after[e] == before.get(e):
            continue
        dev = net.corpus[e.router]
        itf = dev.interface(e.interface)
        line = f" ip ospf cost {after[e]}"
        if itf.cost_loc is not None:
            out.append(Patch(itf.cost_loc, "delete", f"ip ospf cost {itf.ospf_cost}"))
            out.append(Patch(itf.cost_loc, "add", line))
        else:
            out.append(Patch(SourceLoc(dev.file, itf.end), "add", line))
    return out


def fallback_static_routes(conflicted: Sequence[tuple[Requirement, Sequence[str]]], net: SimResult) -> list[Patch]:
    """Per-hop static routes pinning each packet path."""
    out: list[Patch] = []
    pinned: dict[tuple[str, str], str] = {}
    for req, path in conflicted:
        for a, b in zip(path, path[1:]):
            key = (a, str(req.prefix))
            dev = net.corpus[a]
            link = net.link_up(a, b)
            if link is None:
                raise PatchConflict(f"static fallback: no link {a}-{b}")
            hop = net.corpus[b].interface(link.iface(b)).ip
            if pinned.get(key, str(hop)) != str(hop):
                raise PatchConflict(f"static fallback: {a} needs two next hops for {req.prefix}")
            if key in pinned:
                continue
            pinned[key] = str(hop)
            if any(s.prefix == req.prefix and s.target == str(hop) for s in dev.static_routes):
                continue
            out.append(Patch(SourceLoc(dev.file, dev.last_line), "add", f"ip route {req.prefix} {hop}"))
    return out


# ---------------------------------------------------------------- merging and reporting

def merge_patches(groups: Iterable[Sequence[Patch]]) -> list[Patch]:
    """Concatenate patch lists, dropping exact duplicates and rejecting clashes."""
    out: list[Patch] = []
    seen: set[Patch] = set()
    setting: dict[tuple[str, int, str], str] = {}
    for g in groups:
        for p in g:
            if p in seen:
                continue
            if p.op == "add":
                key_words = p.command.split()
                if len(key_words) > 1 and key_words[0] in ("ip", "set") and key_words[:-1] != ["ip", "route"]:
                    key = (p.loc.file, p.loc.line, " ".join(key_words[:-1]))
                    if setting.get(key, p.command) != p.command:
                        raise PatchConflict(f"{p.loc}: {setting[key]!r} vs {p.command!r}")
                    setting[key] = p.command
            seen.add(p)
            out.append(p)
    return out


def modified_line_ratio(patches: Sequence[Patch], corpus: Corpus) -> float:
    total = corpus.total_lines()
    return len(patches) / total if total else 0.0


def patch_table(patches: Sequence[Patch]) -> str:
    rows = [("LineNumber", "+/-", "Command")]
    rows += [(str(p.loc), p.sign, p.command.strip()) for p in patches]
    w0 = max(len(r[0]) for r in rows)
    return "\n".join(f"{a.ljust(w0)}  {b}  {c}" for a, b, c in rows)
