"""Selective symbolic simulation guided by a Route Propagation Graph.

The concrete engines are re-run with hooks at the four decision kinds
(adjacency, export, import, preference).  Wherever the configuration would
take a decision that contradicts the RPG, the compliant decision is forced
and the run continues on that single execution path.  Conditions are read
off the converged state, so transient deviations that later disappear are
not reported.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace

from .config import Corpus
from .requirements import Requirement
from .rpg import FAULT_TOLERANT, ProcessNode, RouteDescriptor, RouteProgGraph
from .sim import BgpEngine, OspfEngine, Protocol, Route, Session, SimResult

PEER, PREFER, IS_EXPORT, IS_IMPORT = "Peer", "Prefer", "IsExport", "IsImport"
_RANK = {PEER: 0, IS_EXPORT: 1, IS_IMPORT: 1, PREFER: 2}


class RpgInfeasible(RuntimeError):
    pass


class UnresolvablePeerIp(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    kind: str
    protocol: Protocol
    router: str
    peer: str | None = None
    src: ProcessNode | None = None
    dst: ProcessNode | None = None
    route: RouteDescriptor | None = None
    other: RouteDescriptor | None = None
    ident: str = field(default="", compare=False)

    def __str__(self) -> str:
        if self.kind == PEER:
            body = f"Peer({self.router},{self.peer},{self.protocol})"
        elif self.kind == PREFER:
            body = f"Prefer({self.route}, {self.other}, {self.protocol})"
        elif self.kind == IS_EXPORT:
            body = f"IsExport({self.src}->{self.dst}, {self.route})"
        else:
            body = f"IsImport({self.dst}<-{self.src}, {self.route})"
        return f"{self.ident}: {body}" if self.ident else body

    @property
    def same_router(self) -> bool:
        return self.src is not None and self.dst is not None and self.src.router == self.dst.router

    def to_json(self) -> dict:
        d = {"id": self.ident, "kind": self.kind, "protocol": str(self.protocol), "router": self.router,
             "text": str(replace(self, ident=""))}
        if self.peer is not None:
            d["peer"] = self.peer
        if self.src is not None:
            d["src"] = str(self.src)
            d["dst"] = str(self.dst)
        if self.route is not None:
            d["route"] = self.route.to_json()
        if self.other is not None:
            d["other"] = self.other.to_json()
        return d


@dataclass
class Evidence:
    """Concrete routes behind a condition, used by diagnosis and repair."""
    route: Route | None = None          # the route as offered to the decision
    competitors: tuple[Route, ...] = ()  # Prefer: candidates the config ranks above ``route``
    reason: str = ""
    offered: Route | None = None  # Prefer: ``route`` as received, before the import policy


@dataclass
class DeviationSet:
    conditions: tuple[Condition, ...] = ()
    evidence: dict[Condition, Evidence] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.conditions)

    def __len__(self) -> int:
        return len(self.conditions)

    def ids(self) -> list[str]:
        return [c.ident for c in self.conditions]


@dataclass
class SymbolicResult:
    rpg: RouteProgGraph
    best: dict[str, list[Route]]
    route_conditions: dict[tuple[str, RouteDescriptor], tuple[str, ...]]
    deviations: DeviationSet
    expectations: list[Condition]
    engine: object = None

    def routes_json(self) -> dict:
        out = {}
        for r in sorted(self.best):
            rows = []
            for route in self.best[r]:
                d = describe(route)
                rows.append({"route": d.to_json(), "conditions": list(self.route_conditions.get((r, d), ()))})
            if rows:
                out[r] = rows
        return out


def describe(route: Route) -> RouteDescriptor:
    return RouteDescriptor(str(route.prefix), route.learned_from, route.as_path)


def forced_session(net: SimResult, u: str, v: str) -> Session:
    """Session u->v as the repair would configure it."""
    ip_u, ip_v = session_addresses(net.corpus, u, v)
    du, dv = net.corpus[u], net.corpus[v]
    ibgp = du.as_number == dv.as_number
    direct = any(i.prefix is not None and ip_v in i.prefix and not i.loopback for i in du.interfaces)
    return Session(u, v, ip_u, ip_v, ibgp, True, direct, "forced")


def session_addresses(corpus: Corpus, u: str, v: str) -> tuple[ipaddress.IPv4Address, ipaddress.IPv4Address]:
    """(address of u, address of v) used for a u-v BGP session.

    Existing neighbor statements win; otherwise iBGP uses loopbacks and
    eBGP the addresses on a shared link.
    """
    du, dv = corpus[u], corpus[v]

    def configured(a, b):
        if a.bgp is None:
            return None
        for nb in a.bgp.neighbors:
            if b.owns_ip(nb.peer_ip):
                return nb.peer_ip
        return None

    ip_v, ip_u = configured(du, dv), configured(dv, du)
    same_as = du.as_number is not None and du.as_number == dv.as_number
    shared = None
    for iu in du.interfaces:
        for iv in dv.interfaces:
            if iu.prefix is not None and iu.prefix == iv.prefix and not iu.loopback:
                shared = (iu.ip, iv.ip)
                break
        if shared:
            break
    if ip_v is None:
        ip_v = (dv.loopback_ip() if same_as else None) or (shared[1] if shared else dv.loopback_ip())
    if ip_u is None:
        ip_u = (du.loopback_ip() if same_as else None) or (shared[0] if shared else du.loopback_ip())
    if ip_u is None or ip_v is None:
        raise UnresolvablePeerIp(f"no usable address for a {u}-{v} session")
    return ip_u, ip_v


# ---------------------------------------------------------------- BGP

class GuidedBgp(BgpEngine):
    def __init__(self, net: SimResult, rpg: RouteProgGraph):
        self.rpg = rpg
        self.edges = rpg.router_edges()
        self.expected = {r: set(ds) for r, ds in rpg.expected.items()}
        self.multi = rpg.mode == FAULT_TOLERANT
        sessions = dict(net.sessions)
        self.forced_peers: list[tuple[str, str]] = []
        for u, v in sorted(self.edges):
            s = sessions.get((v, u))
            if s is None or not s.established:
                sessions[(u, v)] = forced_session(net, u, v)
                sessions[(v, u)] = forced_session(net, v, u)
                self.forced_peers.append((v, u))
        super().__init__(net, rpg.prefix, sessions)
        self.forced_origin = False
        self.origin_router = rpg.origin.router

    def originate(self, r):
        got = super().originate(r)
        if not got and r == self.origin_router:
            self.forced_origin = True
            got = [Route(self.prefix, Protocol.BGP, origin=self.rpg.origin.protocol)]
        return got

    def arriving(self, u: str, v: str, route: Route) -> RouteDescriptor:
        s = self.sessions[(u, v)]
        path = route.as_path if s.ibgp else (self.net.corpus[u].bgp.asn,) + route.as_path
        return RouteDescriptor(str(self.prefix), u, path)

    def wanted(self, u: str, v: str, route: Route) -> bool:
        return (u, v) in self.edges and self.arriving(u, v, route) in self.expected.get(v, ())

    def export(self, u, v, route):
        x, _ = self.export_verdict(u, v, route)
        if x is None and self.wanted(u, v, route):
            x = self.forced_export(u, v, route)
        return x

    def forced_export(self, u, v, route):
        s = self.sessions[(u, v)]
        as_path = route.as_path if s.ibgp else (self.net.corpus[u].bgp.asn,) + route.as_path
        return replace(route, as_path=as_path)

    def import_(self, v, u, route):
        y, why = self.import_verdict(v, u, route)
        if y is None and why not in ("as-path-loop", "path-loop") and (u, v) in self.edges and \
                RouteDescriptor(str(self.prefix), u, route.as_path) in self.expected.get(v, ()):
            y = self.forced_import(v, u, route)
        return y

    def forced_import(self, v, u, route):
        s = self.sessions[(v, u)]
        return Route(self.prefix, Protocol.BGP, next_hop=u, as_path=route.as_path,
                     local_pref=route.local_pref if s.ibgp else 100, communities=route.communities,
                     learned_from=u, ibgp=s.ibgp, path=(u,) + route.path)

    def select(self, v, candidates):
        exp = self.expected.get(v)
        if exp:
            matching = sorted((c for c in candidates if describe(c) in exp), key=self.rank)
            if matching:
                return matching if self.multi else matching[:1]
        return super().select(v, candidates)


class GuidedOspf(OspfEngine):
    def __init__(self, net: SimResult, rpg: RouteProgGraph, enforce_prefer: bool):
        self.rpg = rpg
        self.edges = rpg.router_edges()
        self.expected = {r: set(ds) for r, ds in rpg.expected.items()}
        self.enforce = enforce_prefer
        self.multi = rpg.mode == FAULT_TOLERANT
        adj = set(net.ospf_adjacencies)
        costs = dict(net.ospf_costs)
        self.forced_peers: list[tuple[str, str]] = []
        for u, v in sorted(self.edges):
            pair = frozenset((u, v))
            if pair not in adj:
                adj.add(pair)
                self.forced_peers.append((v, u))
                for x, y in ((u, v), (v, u)):
                    itfs = [i for i in _link_ifaces(net, x, y)]
                    costs[(x, y)] = min(i.ospf_cost for i in itfs) if itfs else 10
        super().__init__(net, rpg.prefix, adj, costs)
        self.forced_origin = False
        self.origin_router = rpg.origin.router

    def originate(self, r):
        got = super().originate(r)
        if not got and r == self.origin_router:
            self.forced_origin = True
            itf = next((i for i in self.net.corpus[r].interfaces if i.prefix == self.prefix), None)
            got = [Route(self.prefix, Protocol.OSPF, cost=0, interface=itf.name if itf else None,
                         origin=Protocol.CONNECTED)]
        return got

    def select(self, v, candidates):
        exp = self.expected.get(v)
        if self.enforce and exp:
            matching = sorted((c for c in candidates if ospf_describe(c) in exp), key=self.rank)
            if matching:
                return matching if self.multi else matching[:1]
        return super().select(v, candidates)


def ospf_describe(route: Route) -> RouteDescriptor:
    return RouteDescriptor(str(route.prefix), route.learned_from, ())


def _link_ifaces(net: SimResult, x: str, y: str):
    dev = net.corpus[x]
    return [dev.interface(l.iface(x)) for l in net.all_links
            if set(l.routers) == {x, y} and l not in net.failed]


# ---------------------------------------------------------------- runs

def run_symbolic(net: SimResult, rpg: RouteProgGraph) -> SymbolicResult:
    """Guided run for one RPG; works for standard and fault-tolerant graphs."""
    if rpg.layer is Protocol.BGP:
        return _run_bgp(net, rpg)
    return _run_ospf(net, rpg)


def run_symbolic_ft(net: SimResult, rpg: RouteProgGraph) -> SymbolicResult:
    if rpg.mode != FAULT_TOLERANT:
        raise ValueError("run_symbolic_ft needs a fault-tolerant RPG")
    return run_symbolic(net, rpg)


def _order_key(rpg: RouteProgGraph, depth, router: str, kind: str, seq: int):
    node = rpg.layer_node(router)
    return (depth.get(node, 1 << 20), router, _RANK[kind], seq)


def _number(found: list[tuple[tuple, Condition, Evidence]]) -> DeviationSet:
    found.sort(key=lambda t: t[0])
    conds, ev = [], {}
    for i, (_, c, e) in enumerate(found, start=1):
        c = replace(c, ident=f"Cond{i}")
        conds.append(c)
        ev[c] = e
    return DeviationSet(tuple(conds), ev)


def _run_bgp(net: SimResult, rpg: RouteProgGraph) -> SymbolicResult:
    eng = GuidedBgp(net, rpg).run()
    depth = rpg.depth()
    proto = Protocol.BGP
    found: list = []
    seq = 0
    edge_conds: dict[tuple[str, str], list[Condition]] = {}
    node_conds: dict[tuple[str, RouteDescriptor], list[Condition]] = {}

    def add(router, cond, evidence, edge=None, node_route=None):
        nonlocal seq
        seq += 1
        found.append((_order_key(rpg, depth, router, cond.kind, seq), cond, evidence))
        if edge is not None:
            edge_conds.setdefault(edge, []).append(cond)
        if node_route is not None:
            node_conds.setdefault(node_route, []).append(cond)

    origin = rpg.origin
    layer_origin = rpg.layer_node(origin.router)
    if eng.forced_origin:
        local = RouteDescriptor(str(rpg.prefix), None, ())
        add(origin.router, Condition(IS_EXPORT, proto, origin.router, src=origin, dst=layer_origin, route=local),
            Evidence(reason="not originated"), node_route=(origin.router, local))
    forced = set(eng.forced_peers)
    for u, v in sorted(eng.edges, key=lambda e: (depth.get(rpg.layer_node(e[1]), 0), e[1], e[0])):
        if (v, u) in forced:
            s = net.sessions.get((v, u))
            add(v, Condition(PEER, proto, v, peer=u), Evidence(reason=s.reason if s else "not configured"),
                edge=(u, v))
        for route in eng.best.get(u, []):
            if not eng.wanted(u, v, route):
                continue
            x, why = BgpEngine.export_verdict(eng, u, v, route)
            if x is None:
                add(v, Condition(IS_EXPORT, proto, u, peer=v, src=ProcessNode(u, proto), dst=ProcessNode(v, proto),
                                 route=describe(route)), Evidence(route=route, reason=why), edge=(u, v))
                x = eng.forced_export(u, v, route)
            y, why = BgpEngine.import_verdict(eng, v, u, x)
            if y is None:
                add(v, Condition(IS_IMPORT, proto, v, peer=u, src=ProcessNode(u, proto), dst=ProcessNode(v, proto),
                                 route=eng.arriving(u, v, route)), Evidence(route=x, reason=why), edge=(u, v))
    for v in rpg.ordered_routers():
        exp = eng.expected.get(v, set())
        cands = eng.candidates(v)
        if not cands:
            continue
        chosen = [c for c in eng.best.get(v, []) if describe(c) in exp]
        for e in chosen:
            rivals = [c for c in cands if describe(c) not in exp] if eng.multi else \
                [c for c in cands if c is not e and describe(c) != describe(e)]
            beaten_by = sorted((c for c in rivals if eng.rank(c) < eng.rank(e)), key=eng.rank)
            if beaten_by:
                add(v, Condition(PREFER, proto, v, route=describe(e), other=describe(beaten_by[0])),
                    Evidence(route=e, competitors=tuple(beaten_by), offered=_offered(eng, v, e)),
                    node_route=(v, describe(e)))
    _check_expected(rpg, eng.best, describe)
    devs = _number(found)
    route_conds = _flow(eng, rpg, devs, edge_conds, node_conds, describe)
    expectations = [Condition(PEER, proto, v, peer=u) for u, v in sorted(eng.edges)]
    return SymbolicResult(rpg, {r: list(b) for r, b in eng.best.items()}, route_conds, devs, expectations, eng)


def _run_ospf(net: SimResult, rpg: RouteProgGraph) -> SymbolicResult:
    enforce = rpg.kind in ("waypoint", "bypass")
    eng = GuidedOspf(net, rpg, enforce).run()
    depth = rpg.depth()
    proto = Protocol.OSPF
    found: list = []
    seq = 0
    edge_conds: dict = {}
    node_conds: dict = {}

    def add(router, cond, evidence, edge=None, node_route=None):
        nonlocal seq
        seq += 1
        found.append((_order_key(rpg, depth, router, cond.kind, seq), cond, evidence))
        if edge is not None:
            edge_conds.setdefault(edge, []).append(cond)
        if node_route is not None:
            node_conds.setdefault(node_route, []).append(cond)

    origin = rpg.origin
    if eng.forced_origin:
        local = RouteDescriptor(str(rpg.prefix), None, ())
        add(origin.router, Condition(IS_EXPORT, proto, origin.router, src=origin,
                                     dst=rpg.layer_node(origin.router), route=local),
            Evidence(reason="interface not in OSPF"), node_route=(origin.router, local))
    forced = set(eng.forced_peers)
    for u, v in sorted(eng.edges, key=lambda e: (depth.get(rpg.layer_node(e[1]), 0), e[1], e[0])):
        if (v, u) in forced:
            add(v, Condition(PEER, proto, v, peer=u), Evidence(reason="no adjacency"), edge=(u, v))
    if enforce:
        for v in rpg.ordered_routers():
            exp = eng.expected.get(v, set())
            cands = eng.candidates(v)
            for e in [c for c in eng.best.get(v, []) if ospf_describe(c) in exp]:
                rivals = [c for c in cands if ospf_describe(c) not in exp]
                beaten_by = sorted((c for c in rivals if eng.rank(c) < eng.rank(e)), key=eng.rank)
                if beaten_by:
                    add(v, Condition(PREFER, proto, v, route=ospf_describe(e), other=ospf_describe(beaten_by[0])),
                        Evidence(route=e, competitors=tuple(beaten_by)), node_route=(v, ospf_describe(e)))
        _check_expected(rpg, eng.best, ospf_describe)
    else:
        missing = [r for r in rpg.ordered_routers() if not eng.best.get(r)]
        if missing:
            raise RpgInfeasible(f"{rpg.prefix}: no route at {missing} after forcing")
    devs = _number(found)
    route_conds = _flow(eng, rpg, devs, edge_conds, node_conds, ospf_describe)
    expectations = [Condition(PEER, proto, v, peer=u) for u, v in sorted(eng.edges)]
    return SymbolicResult(rpg, {r: list(b) for r, b in eng.best.items()}, route_conds, devs, expectations, eng)


def _offered(eng: GuidedBgp, v: str, route: Route) -> Route | None:
    u = route.learned_from
    if u is None:
        return None
    parent = next((c for c in eng.best.get(u, []) if c.path == route.path[1:]), None)
    return eng.export(u, v, parent) if parent is not None else None


def _check_expected(rpg: RouteProgGraph, best, desc) -> None:
    for r in rpg.ordered_routers():
        want = rpg.expected.get(r, set())
        have = {desc(x) for x in best.get(r, [])}
        if want and not (want <= have if rpg.mode == FAULT_TOLERANT else want & have):
            raise RpgInfeasible(f"{rpg.prefix}: {r} ends with {sorted(map(str, have))}, "
                                f"expected {sorted(map(str, want))}")


def _flow(eng, rpg, devs, edge_conds, node_conds, desc) -> dict:
    """Condition ids carried by each best route (monotone along derivations)."""
    by_value = {replace(c, ident=""): c.ident for c in devs.conditions}

    def ids(conds):
        return {by_value[c] for c in conds}

    memo: dict[tuple[str, RouteDescriptor], frozenset] = {}

    def of(router: str, route: Route) -> frozenset:
        key = (router, desc(route))
        if key in memo:
            return memo[key]
        got = ids(node_conds.get(key, []))
        u = route.learned_from
        if u is not None:
            parent = next((c for c in eng.best.get(u, []) if c.path == route.path[1:]), None)
            if parent is not None:
                got |= of(u, parent)
            got |= ids(edge_conds.get((u, router), []))
        memo[key] = frozenset(got)
        return memo[key]

    out = {}
    for r, routes in eng.best.items():
        for route in routes:
            out[(r, desc(route))] = tuple(sorted(of(r, route), key=lambda s: int(s[4:])))
    return out


def condition_holds(cond: Condition, evidence: Evidence, net: SimResult) -> bool:
    """Evaluate ``cond`` against the unmodified configuration."""
    if cond.kind == PEER:
        if cond.protocol is Protocol.BGP:
            s = net.sessions.get((cond.router, cond.peer))
            return bool(s and s.established)
        return frozenset((cond.router, cond.peer)) in net.ospf_adjacencies
    if cond.kind == IS_EXPORT and cond.same_router:
        prefix = ipaddress.IPv4Network(cond.route.prefix)
        if cond.protocol is Protocol.BGP:
            return net.bgp_origin(cond.router, prefix) is not None
        return net.ospf_origin(cond.router, prefix) is not None
    eng = BgpEngine(net, ipaddress.IPv4Network(cond.route.prefix))
    if cond.kind == IS_EXPORT:
        if (cond.src.router, cond.dst.router) not in eng.sessions:
            return True
        return eng.export_verdict(cond.src.router, cond.dst.router, evidence.route)[0] is not None
    if cond.kind == IS_IMPORT:
        if (cond.dst.router, cond.src.router) not in eng.sessions:
            return True
        return eng.import_verdict(cond.dst.router, cond.src.router, evidence.route)[0] is not None
    rank = eng.rank if cond.protocol is Protocol.BGP else OspfEngine.rank
    return all(rank(evidence.route) < rank(c) for c in evidence.competitors)


# ---------------------------------------------------------------- underlay

def derive_underlay_reqs(conditions, corpus: Corpus, k: int = 0) -> list[Requirement]:
    """IGP reachability requirements for BGP sessions that ride non-connected addresses."""
    out: dict[tuple, Requirement] = {}
    for cond in conditions:
        if cond.kind != PEER or cond.protocol is not Protocol.BGP:
            continue
        u, v = cond.router, cond.peer
        ip_u, ip_v = session_addresses(corpus, u, v)
        du = corpus[u]
        connected = any(i.prefix is not None and not i.loopback and ip_v in i.prefix for i in du.interfaces)
        if connected:
            continue
        for a, b, ip in ((u, v, ip_v), (v, u, ip_u)):
            key = (a, b, ip)
            if key not in out:
                out[key] = Requirement(a, b, ipaddress.IPv4Network(f"{ip}/32"), f"{a}*{b}", k,
                                       ident=f"underlay:{a}->{b}")
            elif out[key].k < k:
                out[key] = replace(out[key], k=k)
    return [out[key] for key in sorted(out, key=lambda t: (t[0], t[1], int(t[2])))]
