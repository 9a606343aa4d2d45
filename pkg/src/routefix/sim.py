"""Deterministic concrete control-plane simulation and requirement verification.

BGP and OSPF are both run as path-vector protocols over an ordered message
queue.  A message ``(sender, receiver)`` means "receiver re-reads sender's
current best routes"; the queue is drained in lexicographic order, so the
fixed point and every intermediate state are reproducible.
"""
from __future__ import annotations

import heapq
import ipaddress
import itertools
import logging
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

from .config import Corpus, DeviceConfig, Interface
from .requirements import DOWN, ESTABLISHED, Link, Requirement, RoutingTopology, compile_regex

log = logging.getLogger(__name__)

IPv4Network = ipaddress.IPv4Network
IPv4Address = ipaddress.IPv4Address


class Protocol(str, Enum):
    BGP = "BGP"
    OSPF = "OSPF"
    STATIC = "STATIC"
    CONNECTED = "CONNECTED"

    def __str__(self) -> str:
        return self.value


AD_CONNECTED, AD_STATIC, AD_EBGP, AD_OSPF, AD_IBGP = 0, 1, 20, 110, 200


class NonConvergence(RuntimeError):
    def __init__(self, prefix, limit: int):
        super().__init__(f"no fixed point for {prefix} within {limit} best-route changes")
        self.prefix = prefix
        self.limit = limit


@dataclass(frozen=True)
class Route:
    prefix: IPv4Network
    protocol: Protocol
    next_hop: str | None = None
    as_path: tuple[int, ...] = ()
    local_pref: int = 100
    communities: frozenset[str] = frozenset()
    cost: int = 0
    learned_from: str | None = None
    ibgp: bool = False
    path: tuple[str, ...] = ()
    origin: Protocol | None = None
    interface: str | None = None

    @property
    def local(self) -> bool:
        return self.learned_from is None

    @property
    def admin_distance(self) -> int:
        if self.protocol is Protocol.CONNECTED:
            return AD_CONNECTED
        if self.protocol is Protocol.STATIC:
            return AD_STATIC
        if self.protocol is Protocol.OSPF:
            return AD_OSPF
        return AD_IBGP if (self.ibgp or self.local) else AD_EBGP

    def to_json(self) -> dict:
        d = {"prefix": str(self.prefix), "protocol": str(self.protocol),
             "next_hop": self.next_hop}
        if self.protocol is Protocol.BGP:
            d.update(as_path=list(self.as_path), local_pref=self.local_pref,
                     communities=sorted(self.communities), ibgp=self.ibgp)
            if self.origin is not None:
                d["origin"] = str(self.origin)
        elif self.protocol is Protocol.OSPF:
            d["cost"] = self.cost
        if self.interface:
            d["interface"] = self.interface
        return d


@dataclass(frozen=True)
class Session:
    u: str
    v: str
    u_ip: IPv4Address  # address of u that v's neighbor statement uses
    v_ip: IPv4Address  # address of v that u's neighbor statement uses
    ibgp: bool
    established: bool
    direct: bool
    reason: str = ""


def router_id(dev: DeviceConfig) -> int:
    if dev.bgp is not None and dev.bgp.router_id is not None:
        return int(dev.bgp.router_id)
    loops = [int(i.ip) for i in dev.interfaces if i.loopback and i.ip is not None]
    if loops:
        return max(loops)
    ips = [int(i.ip) for i in dev.interfaces if i.ip is not None]
    return max(ips) if ips else 0


# ---------------------------------------------------------------- path-vector core

class PathVector:
    """Generic ordered-queue path-vector fixed point for one prefix."""

    def __init__(self, prefix: IPv4Network, routers: Sequence[str], peers: Mapping[str, Sequence[str]],
                 shuffle_seed: int | None = None, max_changes: int | None = None):
        self.prefix = prefix
        self.routers = list(routers)
        self.peers = {r: sorted(peers.get(r, ())) for r in self.routers}
        self.rng = random.Random(shuffle_seed) if shuffle_seed is not None else None
        self.max_changes = max_changes if max_changes is not None else 100 * max(1, len(self.routers))
        self.local: dict[str, list[Route]] = {}
        self.best: dict[str, list[Route]] = {}
        self.adj_in: dict[str, dict[str, list[Route]]] = {}
        self.changes = 0

    # hooks
    def originate(self, r: str) -> list[Route]:
        raise NotImplementedError

    def export(self, u: str, v: str, route: Route) -> Route | None:
        raise NotImplementedError

    def import_(self, v: str, u: str, route: Route) -> Route | None:
        raise NotImplementedError

    def select(self, v: str, candidates: list[Route]) -> list[Route]:
        raise NotImplementedError

    def candidates(self, v: str) -> list[Route]:
        got = list(self.local[v])
        for s in sorted(self.adj_in[v]):
            got.extend(self.adj_in[v][s])
        return got

    def run(self) -> PathVector:
        heap: list[tuple[str, str]] = []
        queued: set[tuple[str, str]] = set()

        def push(u: str) -> None:
            for v in self.peers.get(u, ()):
                if (u, v) not in queued:
                    queued.add((u, v))
                    heapq.heappush(heap, (u, v))

        for r in self.routers:
            self.local[r] = self.originate(r)
            self.adj_in[r] = {}
        for r in self.routers:
            self.best[r] = self.select(r, list(self.local[r])) if self.local[r] else []
            if self.best[r]:
                push(r)
        while queued:
            if self.rng is None:
                msg = heapq.heappop(heap)
            else:
                msg = self.rng.choice(sorted(queued))
            queued.discard(msg)
            u, v = msg
            received = []
            for route in self.best[u]:
                x = self.export(u, v, route)
                if x is None:
                    continue
                y = self.import_(v, u, x)
                if y is not None:
                    received.append(y)
            if received == self.adj_in[v].get(u, []):
                continue
            if received:
                self.adj_in[v][u] = received
            else:
                self.adj_in[v].pop(u, None)
            new = self.select(v, self.candidates(v))
            if new != self.best[v]:
                self.changes += 1
                if self.changes > self.max_changes:
                    raise NonConvergence(self.prefix, self.max_changes)
                self.best[v] = new
                push(v)
            if self.rng is not None:
                heap = sorted(queued)
        return self


class BgpEngine(PathVector):
    def __init__(self, net: SimResult, prefix: IPv4Network, sessions: Mapping[tuple[str, str], Session] | None = None,
                 **kw):
        self.net = net
        self.sessions = dict(net.sessions if sessions is None else sessions)
        routers = [r for r, d in net.corpus.items() if d.bgp is not None]
        peers: dict[str, list[str]] = {r: [] for r in routers}
        for (u, v), s in self.sessions.items():
            if s.established:
                peers[u].append(v)
        super().__init__(prefix, routers, peers, **kw)

    def originate(self, r: str) -> list[Route]:
        proto = self.net.bgp_origin(r, self.prefix)
        if proto is None:
            return []
        return [Route(self.prefix, Protocol.BGP, origin=proto)]

    def rank(self, route: Route) -> tuple:
        if route.local:
            return (0,)
        nbr = route.learned_from
        return (1, -route.local_pref, len(route.as_path), int(route.ibgp),
                self.net.router_ids[nbr], nbr, route.as_path)

    def export_policy(self, u: str, v: str) -> str | None:
        s = self.sessions[(u, v)]
        nb = self.net.corpus[u].bgp.neighbor(s.v_ip)
        return nb.export_policy if nb is not None else None

    def import_policy(self, v: str, u: str) -> str | None:
        s = self.sessions[(v, u)]
        nb = self.net.corpus[v].bgp.neighbor(s.v_ip)
        return nb.import_policy if nb is not None else None

    def export_verdict(self, u: str, v: str, route: Route) -> tuple[Route | None, str]:
        """Concrete export decision and a short reason when it is refused."""
        if route.learned_from == v:
            return None, "split-horizon"
        s = self.sessions[(u, v)]
        dev = self.net.corpus[u]
        if s.ibgp and route.ibgp:
            from_nb = dev.bgp.neighbor(self.sessions[(u, route.learned_from)].v_ip)
            to_nb = dev.bgp.neighbor(s.v_ip)
            rr = (from_nb is not None and from_nb.route_reflector_client) or \
                 (to_nb is not None and to_nb.route_reflector_client)
            if not rr:
                return None, "ibgp-no-reflect"
        res = dev.evaluate_policy(self.export_policy(u, v), route.prefix, route.communities, route.as_path)
        if not res.permit:
            return None, "export-policy"
        lp = route.local_pref if res.local_pref is None else res.local_pref
        as_path = route.as_path if s.ibgp else (dev.bgp.asn,) + route.as_path
        return replace(route, as_path=as_path, local_pref=lp, communities=res.communities), ""

    def import_verdict(self, v: str, u: str, route: Route) -> tuple[Route | None, str]:
        s = self.sessions[(v, u)]
        dev = self.net.corpus[v]
        if not s.ibgp and dev.bgp.asn in route.as_path:
            return None, "as-path-loop"
        if v in route.path:
            return None, "path-loop"
        lp = route.local_pref if s.ibgp else 100
        res = dev.evaluate_policy(self.import_policy(v, u), route.prefix, route.communities, route.as_path)
        if not res.permit:
            return None, "import-policy"
        if res.local_pref is not None:
            lp = res.local_pref
        return Route(self.prefix, Protocol.BGP, next_hop=u, as_path=route.as_path, local_pref=lp,
                     communities=res.communities, learned_from=u, ibgp=s.ibgp,
                     path=(u,) + route.path), ""

    def export(self, u, v, route):
        return self.export_verdict(u, v, route)[0]

    def import_(self, v, u, route):
        return self.import_verdict(v, u, route)[0]

    def select(self, v, candidates):
        if not candidates:
            return []
        return [min(candidates, key=self.rank)]


class OspfEngine(PathVector):
    def __init__(self, net: SimResult, prefix: IPv4Network, adjacencies: Iterable[frozenset] | None = None,
                 costs: Mapping[tuple[str, str], int] | None = None, **kw):
        self.net = net
        self.adjacencies = set(net.ospf_adjacencies if adjacencies is None else adjacencies)
        self.costs = dict(net.ospf_costs if costs is None else costs)
        routers = [r for r, d in net.corpus.items() if d.ospf is not None]
        peers: dict[str, list[str]] = {r: [] for r in net.corpus}
        for pair in self.adjacencies:
            a, b = sorted(pair)
            peers[a].append(b)
            peers[b].append(a)
        super().__init__(prefix, sorted(set(routers) | {r for p in self.adjacencies for r in p}), peers, **kw)

    def originate(self, r: str) -> list[Route]:
        itf = self.net.ospf_origin(r, self.prefix)
        if itf is None:
            return []
        return [Route(self.prefix, Protocol.OSPF, cost=0, interface=itf.name, origin=Protocol.CONNECTED)]

    def export(self, u, v, route):
        return route

    def import_(self, v, u, route):
        if v in route.path:
            return None
        cost = self.costs.get((v, u))
        if cost is None:
            return None
        return Route(self.prefix, Protocol.OSPF, next_hop=u, cost=route.cost + cost, learned_from=u,
                     path=(u,) + route.path)

    @staticmethod
    def rank(route: Route) -> tuple:
        return (0,) if route.local else (1, route.cost, route.next_hop)

    def select(self, v, candidates):
        if not candidates:
            return []
        return [min(candidates, key=self.rank)]


# ---------------------------------------------------------------- whole network

@dataclass
class Forwarding:
    path: tuple[str, ...]
    status: str  # delivered | NoRoute | Loop
    at: str | None = None


class SimResult:
    """Outcome of one concrete simulation, plus data-plane queries over it."""

    def __init__(self, corpus: Corpus, failed: Iterable[Link] = ()):
        self.corpus = corpus
        self.failed = frozenset(failed)
        self.routers = list(corpus)
        self.router_ids = {r: router_id(d) for r, d in corpus.items()}
        self.ip_owner: dict[IPv4Address, tuple[str, Interface]] = {}
        for r, dev in corpus.items():
            for itf in dev.interfaces:
                if itf.ip is not None:
                    self.ip_owner[itf.ip] = (r, itf)
        self.all_links = _links(corpus)
        self.links = tuple(l for l in self.all_links if l not in self.failed)
        self.connected: dict[str, dict[IPv4Network, Route]] = {}
        self.static: dict[str, dict[IPv4Network, Route]] = {}
        self.ospf_adjacencies: set[frozenset] = set()
        self.ospf_costs: dict[tuple[str, str], int] = {}
        self.ospf: dict[IPv4Network, dict[str, list[Route]]] = {}
        self.sessions: dict[tuple[str, str], Session] = {}
        self.bgp: dict[IPv4Network, BgpEngine] = {}
        self.topology: RoutingTopology | None = None
        self._tables: dict[str, list[tuple[IPv4Network, Route]]] = {}
        self._igp_tables: dict[str, list[tuple[IPv4Network, Route]]] = {}
        self._owners: dict[IPv4Network, frozenset[str]] = {}
        self._lpm: dict[tuple[str, bool], list[tuple[int, int, int, Route]]] = {}

    # -- link helpers
    def link_up(self, a: str, b: str, network: IPv4Network | None = None) -> Link | None:
        for l in self.links:
            if set(l.routers) == {a, b} and (network is None or l.network == str(network)):
                return l
        return None

    def iface_toward(self, r: str, nbr: str) -> list[Interface]:
        dev = self.corpus[r]
        return [dev.interface(l.iface(r)) for l in self.links if set(l.routers) == {r, nbr}]

    def stub(self, r: str, itf: Interface) -> bool:
        return not any(r in l.routers and l.iface(r) == itf.name for l in self.all_links)

    # -- origination facts
    def owners(self, prefix: IPv4Network) -> set[str]:
        if prefix in self._owners:
            return set(self._owners[prefix])
        out = set()
        for r, dev in self.corpus.items():
            for itf in dev.interfaces:
                if itf.prefix == prefix and (itf.loopback or self.stub(r, itf) or prefix.prefixlen == 32):
                    out.add(r)
            for s in dev.static_routes:
                if s.prefix == prefix and prefix in self.static.get(r, {}):
                    route = self.static[r][prefix]
                    if route.next_hop is None:
                        out.add(r)
        self._owners[prefix] = frozenset(out)
        return out

    def bgp_origin(self, r: str, prefix: IPv4Network) -> Protocol | None:
        dev = self.corpus[r]
        bgp = dev.bgp
        if bgp is None:
            return None
        if bgp.has_network(prefix):
            igp = self.igp_exact(r, prefix)
            if igp is not None:
                return igp.protocol
        if bgp.redistributes("static") and prefix in self.static.get(r, {}):
            return Protocol.STATIC
        if bgp.redistributes("connected") and prefix in self.connected.get(r, {}):
            return Protocol.CONNECTED
        return None

    def ospf_origin(self, r: str, prefix: IPv4Network) -> Interface | None:
        dev = self.corpus[r]
        if dev.ospf is None:
            return None
        for itf in dev.interfaces:
            if itf.ospf_enabled and itf.prefix == prefix:
                return itf
        return None

    def igp_exact(self, r: str, prefix: IPv4Network) -> Route | None:
        cands = [t[prefix] for t in (self.connected.get(r, {}), self.static.get(r, {})) if prefix in t]
        cands += self.ospf.get(prefix, {}).get(r, [])
        return min(cands, key=lambda x: x.admin_distance) if cands else None

    # -- build phases
    def _build_connected_static(self) -> None:
        for r, dev in self.corpus.items():
            conn = {}
            for itf in dev.interfaces:
                if itf.prefix is not None:
                    conn[itf.prefix] = Route(itf.prefix, Protocol.CONNECTED, interface=itf.name)
            self.connected[r] = conn
        for r, dev in self.corpus.items():
            table = {}
            for s in dev.static_routes:
                route = self._static_route(r, dev, s)
                if route is not None and s.prefix not in table:
                    table[s.prefix] = route
            self.static[r] = table

    def _static_route(self, r, dev, s) -> Route | None:
        if s.target == "Null0":
            return Route(s.prefix, Protocol.STATIC, interface="Null0")
        ip = s.next_hop_ip
        if ip is not None:
            owner = self.ip_owner.get(ip)
            if owner is None or owner[0] == r:
                return None
            itf = owner[1]
            for mine in dev.interfaces:
                if mine.prefix is not None and ip in mine.prefix and not mine.loopback \
                        and self.link_up(r, owner[0], itf.prefix):
                    return Route(s.prefix, Protocol.STATIC, next_hop=owner[0], interface=mine.name)
            return None
        itf = dev.interface(s.target)
        if itf is None:
            return None
        peer = [l.other(r) for l in self.links if r in l.routers and l.iface(r) == itf.name]
        return Route(s.prefix, Protocol.STATIC, next_hop=peer[0] if peer else None, interface=itf.name)

    def _build_ospf(self, prefixes: Iterable[IPv4Network] | None, shuffle_seed) -> None:
        for l in self.links:
            da, db = self.corpus[l.a], self.corpus[l.b]
            ia, ib = da.interface(l.a_if), db.interface(l.b_if)
            if da.ospf and db.ospf and ia.ospf_enabled and ib.ospf_enabled and ia.ospf_area == ib.ospf_area:
                self.ospf_adjacencies.add(frozenset((l.a, l.b)))
                for x, y, itf in ((l.a, l.b, ia), (l.b, l.a, ib)):
                    c = self.ospf_costs.get((x, y))
                    self.ospf_costs[(x, y)] = itf.ospf_cost if c is None else min(c, itf.ospf_cost)
        nets = set()
        for r, dev in self.corpus.items():
            if dev.ospf is not None:
                nets.update(i.prefix for i in dev.interfaces if i.ospf_enabled and i.prefix is not None)
        if prefixes is not None:
            nets |= set(prefixes) & {i.prefix for d in self.corpus.values() for i in d.interfaces}
        for p in sorted(nets, key=_net_key):
            eng = OspfEngine(self, p, shuffle_seed=shuffle_seed).run()
            self.ospf[p] = {r: b for r, b in eng.best.items() if b}

    def _build_sessions(self) -> None:
        self._igp_tables = {r: self._table(r, igp_only=True) for r in self.routers}
        for u, dev in self.corpus.items():
            if dev.bgp is None:
                continue
            for nb in dev.bgp.neighbors:
                owner = self.ip_owner.get(nb.peer_ip)
                if owner is None or owner[0] == u:
                    continue
                v = owner[0]
                if (u, v) in self.sessions and self.sessions[(u, v)].established:
                    continue
                self.sessions[(u, v)] = self._session(u, v, nb)
        for (u, v), s in list(self.sessions.items()):
            if (v, u) not in self.sessions:
                self.sessions[(v, u)] = Session(v, u, s.v_ip, s.u_ip, s.ibgp, False, s.direct, s.reason)

    def _session(self, u: str, v: str, nb) -> Session:
        du, dv = self.corpus[u], self.corpus[v]
        ibgp = dv.bgp is not None and dv.bgp.asn == du.bgp.asn
        back = None
        if dv.bgp is not None:
            for cand in dv.bgp.neighbors:
                if du.owns_ip(cand.peer_ip):
                    back = cand
                    break
        u_ip = back.peer_ip if back is not None else (du.loopback_ip() or du.addresses()[0])
        direct = any(i.prefix is not None and nb.peer_ip in i.prefix and not i.loopback
                     for i in du.interfaces)
        reason = ""
        if dv.bgp is None:
            reason = f"{v} runs no BGP"
        elif dv.bgp.asn != nb.remote_as:
            reason = f"remote-as {nb.remote_as} but {v} is AS {dv.bgp.asn}"
        elif back is None:
            reason = f"{v} has no neighbor statement for {u}"
        elif back.remote_as != du.bgp.asn:
            reason = f"{v} expects AS {back.remote_as} for {u}"
        elif self.igp_walk(u, nb.peer_ip) is None:
            reason = f"{u} cannot reach {nb.peer_ip}"
        elif self.igp_walk(v, back.peer_ip) is None:
            reason = f"{v} cannot reach {back.peer_ip}"
        return Session(u, v, u_ip, nb.peer_ip, ibgp, not reason, direct, reason)

    def _build_bgp(self, prefixes: Iterable[IPv4Network] | None, shuffle_seed, max_iters) -> None:
        wanted = set(prefixes or ())
        for r, dev in self.corpus.items():
            if dev.bgp is None:
                continue
            for n in dev.bgp.networks:
                wanted.add(n.prefix)
            if dev.bgp.redistributes("static"):
                wanted.update(self.static[r])
            if dev.bgp.redistributes("connected"):
                wanted.update(self.connected[r])
        for p in sorted(wanted, key=_net_key):
            self.bgp[p] = BgpEngine(self, p, shuffle_seed=shuffle_seed, max_changes=max_iters).run()

    def _build_topology(self) -> None:
        bgp_status: dict[frozenset, str] = {}
        for (u, v), s in self.sessions.items():
            pair = frozenset((u, v))
            if s.established:
                bgp_status[pair] = ESTABLISHED
            else:
                bgp_status.setdefault(pair, DOWN)
        ospf_status: dict[frozenset, str] = {}
        for l in self.links:
            pair = frozenset(l.routers)
            if pair in self.ospf_adjacencies:
                ospf_status[pair] = ESTABLISHED
            elif any(self.corpus[x].ospf is not None for x in l.routers):
                ospf_status.setdefault(pair, DOWN)
        self.topology = RoutingTopology(
            routers=tuple(self.routers), links=self.links,
            asn={r: d.as_number for r, d in self.corpus.items()},
            adjacency={"BGP": bgp_status, "OSPF": ospf_status})

    # -- lookups
    def _table(self, r: str, igp_only: bool = False) -> list[tuple[IPv4Network, Route]]:
        best: dict[IPv4Network, Route] = {}
        sources = [self.connected.get(r, {}).items(), self.static.get(r, {}).items(),
                   ((p, b[0]) for p, m in self.ospf.items() for rr, b in m.items() if rr == r)]
        if not igp_only:
            sources.append((p, e.best[r][0]) for p, e in self.bgp.items() if e.best.get(r))
        for it in sources:
            for p, route in it:
                if p not in best or route.admin_distance < best[p].admin_distance:
                    best[p] = route
        return sorted(best.items(), key=lambda kv: (-kv[0].prefixlen, _net_key(kv[0])))

    def table(self, r: str) -> list[tuple[IPv4Network, Route]]:
        if r not in self._tables:
            self._tables[r] = self._table(r)
        return self._tables[r]

    def lookup(self, r: str, target: IPv4Network | IPv4Address, igp_only: bool = False) -> Route | None:
        key = (r, igp_only)
        rows = self._lpm.get(key)
        if rows is None:
            table = self._igp_tables[r] if igp_only else self.table(r)
            rows = self._lpm[key] = [(int(n.network_address), int(n.netmask), n.prefixlen, route)
                                     for n, route in table]
        if isinstance(target, IPv4Address):
            addr, plen = int(target), 32
        else:
            addr, plen = int(target.network_address), target.prefixlen
        for net, mask, length, route in rows:
            if length <= plen and addr & mask == net:
                return route
        return None

    def igp_walk(self, src: str, ip: IPv4Address) -> list[str] | None:
        """Routers traversed from src to the owner of ``ip`` using IGP routes only."""
        path, cur = [src], src
        for _ in range(len(self.routers) + 1):
            if self.corpus[cur].owns_ip(ip):
                return path
            route = self.lookup(cur, ip, igp_only=True)
            if route is None:
                return None
            nxt = self._first_hop(cur, route, ip)
            if nxt is None or nxt in path:
                return None
            path.append(nxt)
            cur = nxt
        return None

    def _first_hop(self, r: str, route: Route, target) -> str | None:
        if route.protocol is Protocol.CONNECTED:
            if isinstance(target, IPv4Address):
                owner = self.ip_owner.get(target)
                if owner and owner[0] != r and self.link_up(r, owner[0], route.prefix):
                    return owner[0]
            return None
        if route.protocol in (Protocol.STATIC, Protocol.OSPF):
            return route.next_hop
        return None

    def resolve(self, r: str, route: Route, target) -> list[str] | None:
        """Routers a packet visits after ``r`` to reach ``route``'s next hop."""
        if route.protocol is not Protocol.BGP:
            hop = self._first_hop(r, route, target)
            return [hop] if hop else None
        nh = route.next_hop
        if nh is None:
            return None
        s = self.sessions.get((r, nh))
        if s is None:
            return None
        if s.direct and self.link_up(r, nh):
            return [nh]
        walk = self.igp_walk(r, s.v_ip)
        return walk[1:] if walk else None

    def forward(self, src: str, prefix: IPv4Network, owners: set[str] | None = None) -> Forwarding:
        owners = self.owners(prefix) if owners is None else owners
        path, cur = [src], src
        for _ in range(2 * len(self.routers) + 2):
            if cur in owners:
                return Forwarding(tuple(path), "delivered", cur)
            route = self.lookup(cur, prefix)
            if route is None:
                return Forwarding(tuple(path), "NoRoute")
            hops = self.resolve(cur, route, prefix)
            if not hops:
                return Forwarding(tuple(path), "NoRoute")
            for h in hops:
                if h in path:
                    return Forwarding(tuple(path) + (h,), "Loop")
                path.append(h)
            cur = hops[-1]
        return Forwarding(tuple(path), "Loop")

    # -- dumps
    def rib(self) -> dict:
        out: dict = {}
        for r in self.routers:
            entry: dict = {}
            conn = {str(p): {"candidates": [x.to_json()], "best": [x.to_json()]}
                    for p, x in sorted(self.connected.get(r, {}).items(), key=lambda kv: _net_key(kv[0]))}
            if conn:
                entry["CONNECTED"] = conn
            st = {str(p): {"candidates": [x.to_json()], "best": [x.to_json()]}
                  for p, x in sorted(self.static.get(r, {}).items(), key=lambda kv: _net_key(kv[0]))}
            if st:
                entry["STATIC"] = st
            osp = {str(p): {"candidates": [x.to_json() for x in self.ospf[p][r]],
                            "best": [x.to_json() for x in self.ospf[p][r]]}
                   for p in sorted(self.ospf, key=_net_key) if r in self.ospf[p]}
            if osp:
                entry["OSPF"] = osp
            bgp = {}
            for p in sorted(self.bgp, key=_net_key):
                eng = self.bgp[p]
                if r not in eng.local:
                    continue
                cands = eng.candidates(r)
                if cands:
                    bgp[str(p)] = {"candidates": [x.to_json() for x in cands],
                                   "best": [x.to_json() for x in eng.best[r]]}
            if bgp:
                entry["BGP"] = bgp
            out[r] = entry
        return out

    def fib(self) -> dict[str, dict[str, str]]:
        out = {}
        for r in self.routers:
            entries = {}
            for net, route in sorted(self.table(r), key=lambda kv: _net_key(kv[0])):
                if route.protocol is Protocol.CONNECTED or route.interface == "Null0" or \
                        (route.local and route.protocol is not Protocol.BGP and route.next_hop is None):
                    entries[str(net)] = "local"
                    continue
                hops = self.resolve(r, route, net)
                entries[str(net)] = hops[0] if hops else "drop"
            out[r] = entries
        return out

    def sessions_json(self) -> list[dict]:
        out = []
        for (u, v), s in sorted(self.sessions.items()):
            if u < v:
                out.append({"a": u, "b": v, "ibgp": s.ibgp, "established": s.established,
                            "reason": s.reason})
        return out


def _net_key(p: IPv4Network) -> tuple[int, int]:
    return (int(p.network_address), p.prefixlen)


def _links(corpus: Corpus) -> tuple[Link, ...]:
    by_net: dict[IPv4Network, list[tuple[str, str]]] = {}
    for r, dev in corpus.items():
        for itf in dev.interfaces:
            if itf.prefix is not None and not itf.loopback and itf.prefix.prefixlen < 32:
                by_net.setdefault(itf.prefix, []).append((r, itf.name))
    links = []
    for net, ends in by_net.items():
        for (a, ai), (b, bi) in itertools.combinations(sorted(ends), 2):
            if a != b:
                links.append(Link(a, ai, b, bi, str(net)))
    return tuple(sorted(links))


def simulate(corpus: Corpus, failed_links: Iterable[Link] = (), prefixes: Iterable[IPv4Network] | None = None,
             shuffle_seed: int | None = None, max_iters: int | None = None) -> SimResult:
    """Run connected/static, OSPF, BGP sessions and BGP to a fixed point."""
    net = SimResult(corpus, failed_links)
    prefixes = list(prefixes) if prefixes is not None else None
    net._build_connected_static()
    net._build_ospf(prefixes, shuffle_seed)
    net._build_sessions()
    net._build_bgp(prefixes, shuffle_seed, max_iters)
    net._build_topology()
    log.debug("simulated %d routers, %d BGP prefixes", len(net.routers), len(net.bgp))
    return net


# ---------------------------------------------------------------- verification

@dataclass
class Verdict:
    requirement: Requirement
    satisfied: bool
    path: tuple[str, ...] | None = None
    reason: str = "ok"
    failed_links: tuple[str, ...] = ()

    def to_json(self) -> dict:
        d = {"requirement": self.requirement.to_json(), "satisfied": self.satisfied,
             "reason": self.reason, "path": list(self.path) if self.path else None}
        if self.failed_links:
            d["failed_links"] = list(self.failed_links)
        return d


def check_path(net: SimResult, req: Requirement, dfa=None) -> Verdict:
    dfa = dfa or req.dfa(net.routers)
    fw = net.forward(req.src, req.prefix)
    if fw.status != "delivered":
        return Verdict(req, False, fw.path, fw.status)
    if fw.at != req.dst:
        return Verdict(req, False, fw.path, "WrongDestination")
    if not dfa.accepts(fw.path):
        return Verdict(req, False, fw.path, "RegexViolation")
    return Verdict(req, True, fw.path)


class ScenarioCache:
    """Memoizes simulations per failed-link set for one corpus."""

    def __init__(self, base: SimResult, max_iters: int | None = None):
        self.base = base
        self.max_iters = max_iters
        self.runs: dict[frozenset, SimResult] = {frozenset(): base}

    def get(self, failed: frozenset) -> SimResult:
        if failed not in self.runs:
            self.runs[failed] = simulate(self.base.corpus, failed, max_iters=self.max_iters)
        return self.runs[failed]


def verify(requirements: Sequence[Requirement], net: SimResult, cache: ScenarioCache | None = None) -> list[Verdict]:
    cache = cache or ScenarioCache(net)
    out = []
    for req in requirements:
        dfa = req.dfa(net.routers)
        verdict = check_path(net, req, dfa)
        if verdict.satisfied and req.k > 0:
            for combo in itertools.combinations(net.all_links, req.k):
                sub = check_path(cache.get(frozenset(combo)), req, dfa)
                if not sub.satisfied:
                    verdict = Verdict(req, False, sub.path, "FailsUnderFailureScenario",
                                      tuple(str(l) for l in combo))
                    break
        out.append(verdict)
    return out
