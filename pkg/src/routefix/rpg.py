"""Route Propagation Graph construction.

An RPG is built per destination prefix and routing layer.  Packet paths
(source to destination) are chosen per requirement, turned into route
propagation paths (origin to source, one process node per hop after
same-AS shrinking), and aggregated so that every process keeps a single
parent.  The fault-tolerant variant takes k+1 edge-disjoint paths per
requirement and allows several parents.
"""
from __future__ import annotations

import ipaddress
import json
from collections import deque
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

from .requirements import PathDfa, Requirement, RoutingTopology, compile_regex, paths_by_length
from .sim import Protocol, SimResult, Verdict

STANDARD = "standard"
FAULT_TOLERANT = "fault_tolerant"
SEARCH_BUDGET = 200_000


class UnsatisfiableConflict(Exception):
    def __init__(self, requirements: Sequence[Requirement], detail: str = ""):
        labels = ", ".join(r.label() for r in requirements)
        super().__init__(f"no conflict-free RPG for {labels}" + (f" ({detail})" if detail else ""))
        self.requirements = list(requirements)
        self.detail = detail


class InsufficientDisjointPaths(Exception):
    def __init__(self, requirement: Requirement, found: int, needed: int):
        super().__init__(f"{requirement.label()}: {found} edge-disjoint compliant paths, {needed} needed")
        self.requirement = requirement
        self.found = found
        self.needed = needed


@dataclass(frozen=True, order=True)
class ProcessNode:
    router: str
    protocol: Protocol

    def __str__(self) -> str:
        return f"{self.router}.{self.protocol}"


@dataclass(frozen=True, order=True)
class RouteDescriptor:
    prefix: str
    next_hop: str | None
    as_path: tuple[int, ...] = ()

    def __str__(self) -> str:
        nh = self.next_hop or "local"
        return f"({self.prefix}, nh={nh}, path=[{' '.join(map(str, self.as_path))}])"

    def to_json(self) -> dict:
        return {"prefix": self.prefix, "next_hop": self.next_hop, "as_path": list(self.as_path)}


@dataclass(frozen=True)
class RoutePath:
    requirement: Requirement
    packet_path: tuple[str, ...]
    nodes: tuple[ProcessNode, ...]  # origin first

    @property
    def edges(self) -> list[tuple[ProcessNode, ProcessNode]]:
        return list(zip(self.nodes, self.nodes[1:]))


@dataclass
class RouteProgGraph:
    prefix: ipaddress.IPv4Network
    layer: Protocol
    mode: str
    origin: ProcessNode
    kind: str = "reachability"
    paths: list[RoutePath] = field(default_factory=list)
    expected: dict[str, set[RouteDescriptor]] = field(default_factory=dict)

    @property
    def edges(self) -> list[tuple[ProcessNode, ProcessNode]]:
        seen = {}
        for p in self.paths:
            for e in p.edges:
                seen[e] = None
        return sorted(seen)

    @property
    def nodes(self) -> list[ProcessNode]:
        ns = {self.origin}
        for u, v in self.edges:
            ns.update((u, v))
        return sorted(ns)

    def parents(self, node: ProcessNode) -> list[ProcessNode]:
        return sorted({u for u, v in self.edges if v == node})

    def children(self, node: ProcessNode) -> list[ProcessNode]:
        return sorted({v for u, v in self.edges if u == node})

    def in_degree(self, node: ProcessNode) -> int:
        return len(self.parents(node))

    def router_edges(self) -> set[tuple[str, str]]:
        """Layer edges as (sender router, receiver router)."""
        return {(u.router, v.router) for u, v in self.edges
                if u.protocol == self.layer and v.protocol == self.layer}

    def layer_node(self, router: str) -> ProcessNode:
        return ProcessNode(router, self.layer)

    def depth(self) -> dict[ProcessNode, int]:
        dist = {self.origin: 0}
        q = deque([self.origin])
        while q:
            u = q.popleft()
            for v in self.children(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist

    def ordered_routers(self) -> list[str]:
        """Layer routers ordered by distance from the origin, then name."""
        d = self.depth()
        nodes = [n for n in d if n.protocol == self.layer]
        return [n.router for n in sorted(nodes, key=lambda n: (d[n], n.router))]

    def is_acyclic(self) -> bool:
        indeg = {n: 0 for n in self.nodes}
        for _, v in self.edges:
            indeg[v] += 1
        q = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while q:
            u = q.popleft()
            seen += 1
            for v in self.children(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    q.append(v)
        return seen == len(indeg)

    def forwarding_tree(self) -> dict[ProcessNode, ProcessNode]:
        """Per node, the node packets are handed to (reverse of the RPG edges)."""
        return {v: u for u, v in self.edges}

    def to_json(self) -> dict:
        return {
            "prefix": str(self.prefix), "layer": str(self.layer), "mode": self.mode,
            "kind": self.kind, "origin": str(self.origin),
            "edges": [[str(u), str(v)] for u, v in self.edges],
            "paths": [{"requirement": p.requirement.to_json(), "packet_path": list(p.packet_path),
                       "route_path": [str(n) for n in p.nodes]} for p in self.paths],
            "expected": {r: [d.to_json() for d in sorted(ds)] for r, ds in sorted(self.expected.items())},
        }

    def to_dot(self) -> str:
        lines = [f'digraph "rpg {self.prefix} {self.layer}" {{', "  rankdir=LR;"]
        for n in self.nodes:
            lines.append(f'  "{n}";')
        for u, v in self.edges:
            lines.append(f'  "{u}" -> "{v}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- path transforms

def requirement_layer(req: Requirement, asn: Mapping[str, int | None]) -> Protocol:
    a, b = asn.get(req.src), asn.get(req.dst)
    if a is not None and b is not None and a != b:
        return Protocol.BGP
    return Protocol.OSPF


def as_runs(packet_path: Sequence[str], asn: Mapping[str, int | None]) -> list[list[str]]:
    runs: list[list[str]] = []
    for r in packet_path:
        if runs and asn.get(r) is not None and asn.get(r) == asn.get(runs[-1][-1]):
            runs[-1].append(r)
        else:
            runs.append([r])
    return runs


def shrink_multiprotocol(packet_path: Sequence[str], asn: Mapping[str, int | None],
                         origin: Protocol = Protocol.CONNECTED,
                         protocol: Protocol = Protocol.BGP) -> tuple[ProcessNode, ...]:
    """Route propagation path for a BGP packet path.

    Each AS run is entered at its router nearest the destination and the
    route jumps straight to the run's router nearest the source (its
    farthest same-AS routing neighbor).
    """
    routers: list[str] = []
    for run in reversed(as_runs(packet_path, asn)):
        for r in (run[-1], run[0]):
            if not routers or routers[-1] != r:
                routers.append(r)
    nodes = [ProcessNode(packet_path[-1], origin)]
    nodes += [ProcessNode(r, protocol) for r in routers]
    return tuple(nodes)


def route_path(packet_path: Sequence[str], layer: Protocol, asn: Mapping[str, int | None],
               origin: Protocol) -> tuple[ProcessNode, ...]:
    if layer is Protocol.BGP:
        return shrink_multiprotocol(packet_path, asn, origin, layer)
    return (ProcessNode(packet_path[-1], origin),) + tuple(ProcessNode(r, layer) for r in reversed(packet_path))


def descriptors(nodes: Sequence[ProcessNode], prefix, asn: Mapping[str, int | None],
                layer: Protocol) -> dict[str, RouteDescriptor]:
    out: dict[str, RouteDescriptor] = {}
    prev: ProcessNode | None = None
    path: tuple[int, ...] = ()
    for n in nodes:
        if n.protocol != layer:
            continue
        if prev is None:
            out[n.router] = RouteDescriptor(str(prefix), None, ())
        else:
            if layer is Protocol.BGP and asn.get(prev.router) != asn.get(n.router):
                path = (asn[prev.router],) + path
            out[n.router] = RouteDescriptor(str(prefix), prev.router, path if layer is Protocol.BGP else ())
        prev = n
    return out


def origin_protocol(net: SimResult, router: str, prefix, layer: Protocol) -> Protocol:
    if layer is Protocol.OSPF:
        return Protocol.CONNECTED
    eng = net.bgp.get(prefix)
    if eng is not None:
        for r in eng.local.get(router, []):
            if r.origin is not None:
                return r.origin
    dev = net.corpus[router]
    if any(s.prefix == prefix for s in dev.static_routes):
        return Protocol.STATIC
    if any(i.prefix == prefix for i in dev.interfaces):
        return Protocol.CONNECTED
    return Protocol.STATIC


def _parents_of(nodes: Sequence[ProcessNode]) -> list[tuple[ProcessNode, ProcessNode]]:
    return [(v, u) for u, v in zip(nodes, nodes[1:])]


def _consistent(nodes: Sequence[ProcessNode], parent_of: Mapping[ProcessNode, ProcessNode]):
    new = []
    for child, parent in _parents_of(nodes):
        have = parent_of.get(child)
        if have is None:
            new.append((child, parent))
        elif have != parent:
            return None
    return new


def _pruner(layer: Protocol, asn, parent_of) -> Callable[[list[str]], bool]:
    """Reject partial packet paths whose already-determined parents conflict."""
    def ok(path: list[str]) -> bool:
        if len(path) < 2:
            return True
        a, b = path[-2], path[-1]
        if layer is not Protocol.BGP:
            have = parent_of.get(ProcessNode(a, layer))
            return have is None or have == ProcessNode(b, layer)
        if asn.get(a) == asn.get(b):
            return True
        checks = [(a, b)]
        i = len(path) - 2
        while i > 0 and asn.get(path[i - 1]) == asn.get(a):
            i -= 1
        if path[i] != a:
            checks.append((path[i], a))
        for child, parent in checks:
            have = parent_of.get(ProcessNode(child, layer))
            if have is not None and have != ProcessNode(parent, layer):
                return False
        return True
    return ok


def igp_consistent(path: Sequence[str], net: SimResult, asn: Mapping[str, int | None]) -> bool:
    """Intra-AS stretches of a BGP packet path must be what the IGP forwards today.

    The route jumps over an AS run in one iBGP hop, so the packets in between
    follow the IGP toward the session address.  Runs whose IGP walk does not
    exist yet (broken underlay) are left to the underlay repair.
    """
    for run in as_runs(path, asn):
        if len(run) < 2 or asn.get(run[0]) is None:
            continue
        s = net.sessions.get((run[0], run[-1]))
        if s is None or s.direct:
            continue
        walk = net.igp_walk(run[0], s.v_ip)
        if walk is not None and tuple(walk) != tuple(run):
            return False
    return True


# ---------------------------------------------------------------- standard RPG

def _layer_graph(topo: RoutingTopology, layer: Protocol, tier: int) -> dict[str, list[str]]:
    return topo.graph(str(layer), tier)


def _candidates(req: Requirement, dfa: PathDfa, topo: RoutingTopology, layer: Protocol,
                extend_ok) -> Iterator[tuple[str, ...]]:
    seen = set()
    for tier in (1, 2, 3):
        graph = _layer_graph(topo, layer, tier)
        for p in paths_by_length(dfa, graph, req.src, req.dst, extend_ok):
            if p not in seen:
                seen.add(p)
                yield p


def _check_group(reqs: Sequence[Requirement]) -> tuple:
    prefixes = {r.prefix for r in reqs}
    if len(prefixes) != 1:
        raise ValueError("requirements of one RPG must share a prefix")
    dsts = {r.dst for r in reqs}
    if len(dsts) != 1:
        raise ValueError("requirements of one RPG must share a destination router")
    return prefixes.pop(), dsts.pop()


def build_rpg(reqs: Sequence[Requirement], net: SimResult, verdicts: Sequence[Verdict],
              layer: Protocol | None = None, kind: str = "mixed") -> RouteProgGraph:
    """Conflict-free single-parent RPG for one prefix.

    Satisfied requirements first try to keep their current forwarding path;
    only if that admits no solution are they allowed to move.
    """
    prefix, dst = _check_group(reqs)
    asn = net.topology.asn
    layer = layer or requirement_layer(reqs[0], asn)
    origin = ProcessNode(dst, origin_protocol(net, dst, prefix, layer))
    by_req = {}
    for v in verdicts:
        by_req.setdefault(v.requirement, v)
    ordered = sorted(reqs, key=lambda r: r.sort_key())
    sat = [r for r in ordered if by_req.get(r) is not None and by_req[r].satisfied]
    bad = [r for r in ordered if r not in sat]
    attempts = [("strict", sat + bad), ("relaxed", bad + [r for r in sat if r.kind != "reachability"]
                                        + [r for r in sat if r.kind == "reachability"])]
    for mode, items in attempts:
        result = _search(items, set(sat), by_req, net, layer, asn, origin, prefix, relaxed=(mode == "relaxed"))
        if result is not None:
            rpg = RouteProgGraph(prefix, layer, STANDARD, origin, kind=kind)
            for req, path in result:
                nodes = route_path(path, layer, asn, origin.protocol)
                rpg.paths.append(RoutePath(req, path, nodes))
                for r, d in descriptors(nodes, prefix, asn, layer).items():
                    rpg.expected.setdefault(r, set()).add(d)
            return rpg
    raise UnsatisfiableConflict(bad or ordered)


def _search(items, satisfied, by_req, net, layer, asn, origin, prefix, relaxed):
    parent_of: dict[ProcessNode, ProcessNode] = {}
    chosen: list = [None] * len(items)
    budget = [SEARCH_BUDGET]
    dfas = {r: r.dfa(net.routers) for r in items}

    def cands(i: int) -> Iterator[tuple[str, ...]]:
        req = items[i]
        ok = _pruner(layer, asn, parent_of)
        if req in satisfied:
            keep = by_req[req].path
            yield keep
            if not relaxed:
                return
            for p in _candidates(req, dfas[req], net.topology, layer, ok):
                if p != keep and (layer is not Protocol.BGP or igp_consistent(p, net, asn)):
                    yield p
        else:
            for p in _candidates(req, dfas[req], net.topology, layer, ok):
                if layer is not Protocol.BGP or igp_consistent(p, net, asn):
                    yield p

    def solve(i: int) -> bool:
        if i == len(items):
            return True
        for path in cands(i):
            budget[0] -= 1
            if budget[0] < 0:
                raise UnsatisfiableConflict(items, "search budget exhausted")
            nodes = route_path(path, layer, asn, origin.protocol)
            new = _consistent(nodes, parent_of)
            if new is None:
                continue
            for c, p in new:
                parent_of[c] = p
            chosen[i] = path
            if solve(i + 1):
                return True
            for c, _ in new:
                del parent_of[c]
        return False

    if solve(0):
        return list(zip(items, chosen))
    return None


# ---------------------------------------------------------------- fault tolerant RPG

def edge_disjoint_paths(graph: Mapping[str, Sequence[str]], src: str, dst: str,
                        limit: int | None = None) -> list[tuple[str, ...]]:
    """Maximum set of edge-disjoint src->dst paths (unit-capacity augmenting paths).

    BFS explores neighbors in name order, so the result is deterministic.
    """
    flow: dict[tuple[str, str], int] = {}
    count = 0
    while limit is None or count < limit:
        prev = {src: None}
        q = deque([src])
        while q and dst not in prev:
            u = q.popleft()
            for v in graph.get(u, ()):
                if v not in prev and _can_push(flow, u, v):
                    prev[v] = u
                    q.append(v)
        if dst not in prev:
            break
        v = dst
        while prev[v] is not None:
            u = prev[v]
            if flow.get((v, u), 0):
                flow[(v, u)] = 0
            else:
                flow[(u, v)] = 1
            v = u
        count += 1
    out = []
    used = {e for e, f in flow.items() if f}
    for _ in range(count):
        path, cur, seen = [src], src, {src}
        while cur != dst:
            nxt = min(v for (u, v) in used if u == cur)
            used.discard((cur, nxt))
            if nxt in seen:  # cut the cycle out
                idx = path.index(nxt)
                for x in path[idx + 1:]:
                    seen.discard(x)
                path = path[:idx + 1]
            else:
                path.append(nxt)
                seen.add(nxt)
            cur = nxt
        out.append(tuple(path))
    return sorted(out, key=lambda p: (len(p), p))


def _can_push(flow, u, v) -> bool:
    # undirected unit edge: usable forward if unused, or by cancelling reverse flow
    return flow.get((u, v), 0) == 0


def path_edges(path: Sequence[str]) -> set[frozenset]:
    return {frozenset(e) for e in zip(path, path[1:])}


def _disjoint_compliant(req: Requirement, dfa: PathDfa, graph, need: int) -> list[tuple[str, ...]]:
    flow_paths = edge_disjoint_paths(graph, req.src, req.dst, need)
    if len(flow_paths) < need:
        return [p for p in flow_paths if dfa.accepts(p)]  # max-flow bounds any compliant subset
    if all(dfa.accepts(p) for p in flow_paths[:need]):
        return flow_paths[:need]
    pool = []
    for p in paths_by_length(dfa, graph, req.src, req.dst):
        pool.append(p)
        if len(pool) >= 400:
            break
    best: list = []

    def rec(start: int, picked: list, used: set) -> bool:
        nonlocal best
        if len(picked) > len(best):
            best = list(picked)
        if len(picked) == need:
            return True
        for i in range(start, len(pool)):
            e = path_edges(pool[i])
            if e & used:
                continue
            picked.append(pool[i])
            if rec(i + 1, picked, used | e):
                return True
            picked.pop()
        return False

    rec(0, [], set())
    return best


def build_ft_rpg(reqs: Sequence[Requirement], net: SimResult, layer: Protocol | None = None,
                 kind: str = "mixed") -> RouteProgGraph:
    """RPG with k+1 edge-disjoint route paths per requirement; no conflict resolution."""
    prefix, dst = _check_group(reqs)
    asn = net.topology.asn
    layer = layer or requirement_layer(reqs[0], asn)
    origin = ProcessNode(dst, origin_protocol(net, dst, prefix, layer))
    rpg = RouteProgGraph(prefix, layer, FAULT_TOLERANT, origin, kind=kind)
    for req in sorted(reqs, key=lambda r: r.sort_key()):
        need = req.k + 1
        dfa = req.dfa(net.routers)
        found: list = []
        for tier in (1, 2, 3):
            found = _disjoint_compliant(req, dfa, _layer_graph(net.topology, layer, tier), need)
            if len(found) >= need:
                break
        if len(found) < need:
            raise InsufficientDisjointPaths(req, len(found), need)
        for path in found:
            nodes = route_path(path, layer, asn, origin.protocol)
            rpg.paths.append(RoutePath(req, path, nodes))
            for r, d in descriptors(nodes, prefix, asn, layer).items():
                rpg.expected.setdefault(r, set()).add(d)
    return rpg


def dump_rpg(rpg: RouteProgGraph, directory, stem: str | None = None) -> None:
    from pathlib import Path
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{str(rpg.prefix).replace('/', '_')}_{rpg.layer}_{rpg.kind}"
    (out / f"{stem}.dot").write_text(rpg.to_dot())
    (out / f"{stem}.json").write_text(json.dumps(rpg.to_json(), indent=2, sort_keys=True) + "\n")
