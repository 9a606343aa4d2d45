"""Scenario generators, error injection and the inject/repair/re-verify loop."""
from __future__ import annotations

import ipaddress
import random
import time
from collections.abc import Sequence
from dataclasses import dataclass, field

from .config import Corpus, Patch, SourceLoc, apply_patches, parse_texts
from .requirements import Requirement

CATEGORIES = ("redistribution", "missing_peer", "send_receive", "preference", "ospf_peer", "ospf_cost")


class InvalidK(ValueError):
    pass


class TargetNotApplicable(ValueError):
    pass


# ---------------------------------------------------------------- builder

@dataclass
class _Iface:
    name: str
    address: str
    ospf: bool = False
    cost: int | None = None


@dataclass
class _Router:
    name: str
    asn: int | None
    router_id: str
    ospf: bool = False
    ifaces: list[_Iface] = field(default_factory=list)
    neighbors: list[list[str]] = field(default_factory=list)
    networks: list[str] = field(default_factory=list)
    redistribute: list[str] = field(default_factory=list)
    statics: list[str] = field(default_factory=list)
    policies: list[str] = field(default_factory=list)

    def next_eth(self) -> str:
        return f"eth{sum(1 for i in self.ifaces if i.name.startswith('eth'))}"

    def iface_for(self, peer_ip: str) -> _Iface | None:
        ip = ipaddress.IPv4Address(peer_ip)
        for i in self.ifaces:
            if ip in ipaddress.IPv4Interface(i.address).network:
                return i
        return None


class NetBuilder:
    """Declarative helper that renders configs in the routefix dialect.

    Links get consecutive /24 subnets; the alphabetically smaller router
    takes host .1.  Loopbacks are ``lo0`` with the router-id as a /32.
    """

    def __init__(self, link_base: str = "10.0.0.0"):
        self.routers: dict[str, _Router] = {}
        self.links: list[tuple[str, str, str, str]] = []  # a, b, ip_a, ip_b
        self._base = int(ipaddress.IPv4Address(link_base))
        self._nlinks = 0
        self._stubs = 0

    def router(self, name: str, asn: int | None = None, router_id: str | None = None,
               ospf: bool = False, loopback: bool = True) -> NetBuilder:
        rid = router_id or str(ipaddress.IPv4Address(int(ipaddress.IPv4Address("10.255.0.0")) + len(self.routers) + 1))
        r = _Router(name, asn, rid, ospf)
        if loopback:
            r.ifaces.append(_Iface("lo0", f"{rid}/32", ospf))
        self.routers[name] = r
        return self

    def link(self, a: str, b: str, cost: int | None = None, cost_b: int | None = None,
             ospf: bool | None = None) -> tuple[str, str]:
        a, b = sorted((a, b)) if cost_b is None else (a, b)
        self._nlinks += 1
        net = ipaddress.IPv4Address(self._base + (self._nlinks << 8))
        ip_a, ip_b = str(net + 1), str(net + 2)
        ra, rb = self.routers[a], self.routers[b]
        same = ra.asn == rb.asn
        use_ospf = ra.ospf and rb.ospf and same if ospf is None else ospf
        ca = cost
        cb = cost if cost_b is None else cost_b
        ra.ifaces.append(_Iface(ra.next_eth(), f"{ip_a}/24", use_ospf, ca))
        rb.ifaces.append(_Iface(rb.next_eth(), f"{ip_b}/24", use_ospf, cb))
        self.links.append((a, b, ip_a, ip_b))
        return ip_a, ip_b

    def stub(self, r: str, prefix: str, ospf: bool = False) -> str:
        net = ipaddress.IPv4Network(prefix)
        self._stubs += 1
        name = f"stub{self._stubs}"
        self.routers[r].ifaces.append(_Iface(name, f"{net.network_address + 1}/{net.prefixlen}", ospf))
        return name

    def neighbor(self, r: str, peer_ip: str, remote_as: int, route_map_in: str | None = None,
                 route_map_out: str | None = None, rr_client: bool = False) -> None:
        lines = [f" neighbor {peer_ip} remote-as {remote_as}"]
        if route_map_in:
            lines.append(f" neighbor {peer_ip} route-map {route_map_in} in")
        if route_map_out:
            lines.append(f" neighbor {peer_ip} route-map {route_map_out} out")
        if rr_client:
            lines.append(f" neighbor {peer_ip} route-reflector-client")
        self.routers[r].neighbors.append(lines)

    def _link_ips(self, a: str, b: str) -> tuple[str, str]:
        for x, y, ix, iy in self.links:
            if (x, y) == (a, b):
                return ix, iy
            if (x, y) == (b, a):
                return iy, ix
        raise KeyError(f"no link {a}-{b}")

    def ebgp(self, a: str, b: str) -> None:
        ia, ib = self._link_ips(a, b)
        self.neighbor(a, ib, self.routers[b].asn)
        self.neighbor(b, ia, self.routers[a].asn)

    def ebgp_all(self) -> None:
        for a, b, _, _ in self.links:
            if self.routers[a].asn != self.routers[b].asn:
                self.ebgp(a, b)

    def ibgp_reflector(self, rr: str) -> None:
        """iBGP hub-and-spoke over loopbacks with ``rr`` reflecting for every other member."""
        asn = self.routers[rr].asn
        for c in sorted(r for r, x in self.routers.items() if x.asn == asn and r != rr):
            self.neighbor(rr, self.routers[c].router_id, asn, rr_client=True)
            self.neighbor(c, self.routers[rr].router_id, asn)

    def ibgp_mesh(self, asn: int) -> None:
        members = sorted(r for r, x in self.routers.items() if x.asn == asn)
        for a in members:
            for b in members:
                if a != b:
                    self.neighbor(a, self.routers[b].router_id, asn)

    def network(self, r: str, prefix: str) -> None:
        self.routers[r].networks.append(prefix)

    def static(self, r: str, prefix: str, target: str) -> None:
        self.routers[r].statics.append(f"ip route {prefix} {target}")

    def redistribute(self, r: str, source: str) -> None:
        self.routers[r].redistribute.append(source)

    def policy(self, r: str, text: str) -> None:
        self.routers[r].policies.extend(ln for ln in text.strip("\n").split("\n"))

    def render(self) -> dict[str, str]:
        out = {}
        for name in sorted(self.routers):
            r = self.routers[name]
            lines = [f"hostname {name}", "!"]
            for i in r.ifaces:
                lines.append(f"interface {i.name}")
                lines.append(f" ip address {i.address}")
                if i.ospf:
                    lines.append(" ip ospf area 0")
                if i.cost is not None:
                    lines.append(f" ip ospf cost {i.cost}")
                lines.append("!")
            if r.ospf:
                lines += ["router ospf 1", "!"]
            if r.asn is not None:
                lines.append(f"router bgp {r.asn}")
                lines.append(f" bgp router-id {r.router_id}")
                for block in r.neighbors:
                    lines.extend(block)
                lines += [f" network {p}" for p in r.networks]
                lines += [f" redistribute {s}" for s in r.redistribute]
                lines.append("!")
            if r.statics:
                lines += r.statics + ["!"]
            lines += r.policies
            while lines[-1] == "!":
                lines.pop()
            out[f"{name}.cfg"] = "\n".join(lines) + "\n"
        return out

    def corpus(self) -> Corpus:
        return parse_texts(self.render())


# ---------------------------------------------------------------- generators

@dataclass
class Scenario:
    corpus: Corpus
    requirements: list[Requirement]
    name: str = ""


def _pairs_reqs(owner_of: dict[str, str], sources: Sequence[str], k: int = 0) -> list[Requirement]:
    reqs = []
    for prefix, dst in sorted(owner_of.items()):
        for src in sources:
            if src != dst:
                reqs.append(Requirement(src, dst, ipaddress.IPv4Network(prefix), f"{src}*{dst}", k,
                                        ident=f"{src}->{prefix}"))
    return reqs


def gen_fattree(k: int) -> Scenario:
    """k-ary fat-tree, one AS per switch, eBGP on every link."""
    if k < 4 or k % 2:
        raise InvalidK(f"fat-tree arity must be even and >= 4, got {k}")
    half = k // 2
    cores = [f"core{i:02d}" for i in range(half * half)]
    aggs = [[f"p{p:02d}agg{i}" for i in range(half)] for p in range(k)]
    edges = [[f"p{p:02d}edge{i}" for i in range(half)] for p in range(k)]
    names = sorted(cores + [x for pod in aggs + edges for x in pod])
    b = NetBuilder()
    for n, name in enumerate(names):
        b.router(name, asn=64512 + n, router_id=str(ipaddress.IPv4Address(int(ipaddress.IPv4Address("10.255.0.1")) + n)),
                 loopback=False)
    for p in range(k):
        for e in edges[p]:
            for a in aggs[p]:
                b.link(e, a)
        for i, a in enumerate(aggs[p]):
            for j in range(half):
                b.link(a, cores[i * half + j])
    b.ebgp_all()
    owner = {}
    n = 0
    for p in range(k):
        for e in edges[p]:
            for _ in range(half):
                prefix = f"172.{16 + n // 256}.{n % 256}.0/24"
                b.stub(e, prefix)
                b.network(e, prefix)
                owner[prefix] = e
                n += 1
    edge_names = sorted(x for pod in edges for x in pod)
    reqs = _pairs_reqs(owner, edge_names)
    return Scenario(b.corpus(), reqs, f"fattree{k}")


def fattree_size(k: int) -> tuple[int, int]:
    """(switches, edge prefixes) of a k-ary fat-tree."""
    return 5 * k * k // 4, k ** 3 // 4


def wan_builder() -> NetBuilder:
    """Eight-router WAN: three transit ASes, an OSPF core AS with a route reflector, two stubs."""
    b = NetBuilder()
    b.router("R1", 65001)
    b.router("R2", 65002)
    b.router("R3", 65003)
    for r in ("R4", "R5", "R6"):
        b.router(r, 65004, ospf=True)
    b.router("R7", 65007)
    b.router("R8", 65008)
    for x, y in (("R1", "R2"), ("R1", "R3"), ("R2", "R3"), ("R2", "R4"), ("R3", "R5"),
                 ("R4", "R5"), ("R5", "R6"), ("R6", "R7"), ("R1", "R8"), ("R3", "R7")):
        b.link(x, y)
    b.link("R4", "R6", cost=30)
    b.ebgp_all()
    b.ibgp_reflector("R5")
    b.stub("R7", "203.0.113.0/24")
    b.static("R7", "203.0.113.0/24", "stub1")
    b.redistribute("R7", "static")
    b.stub("R8", "198.51.100.0/24")
    b.network("R8", "198.51.100.0/24")
    b.stub("R6", "192.0.2.0/24")
    b.network("R6", "192.0.2.0/24")
    return b


def wan_requirements(corpus: Corpus) -> list[Requirement]:
    n7, n8, n6 = (ipaddress.IPv4Network(p) for p in ("203.0.113.0/24", "198.51.100.0/24", "192.0.2.0/24"))
    lo6 = corpus["R6"].loopback_ip()
    rows = [
        ("R8", "R7", n7, "R8*R7"), ("R1", "R7", n7, "R1*R7"), ("R4", "R7", n7, "R4*R7"),
        ("R7", "R8", n8, "R7*R8"), ("R2", "R8", n8, "R2*R8"), ("R5", "R8", n8, "R5*R8"),
        ("R1", "R6", n6, "R1*R6"), ("R8", "R6", n6, "R8*R6"),
        ("R8", "R7", n7, "R8*R3*R7"), ("R2", "R6", n6, "R2*R4*R6"), ("R7", "R8", n8, "R7*R3*R8"),
        ("R4", "R6", ipaddress.IPv4Network(f"{lo6}/32"), "R4R5R6"),
    ]
    return [Requirement(s, d, p, rx, 0, ident=f"wan{i + 1}") for i, (s, d, p, rx) in enumerate(rows)]


def gen_wan() -> Scenario:
    c = wan_builder().corpus()
    return Scenario(c, wan_requirements(c), "wan")


def gen_fattree_pinned(k: int) -> Scenario:
    """Fat-tree whose requirements pin every pair to its current forwarding path.

    Plain reachability on a fat-tree survives almost any single policy edit
    thanks to path diversity; pinning turns those edits into observable
    violations for the injection benchmark.
    """
    from .sim import simulate
    sc = gen_fattree(k)
    net = simulate(sc.corpus)
    reqs = []
    for r in sc.requirements:
        fw = net.forward(r.src, r.prefix)
        reqs.append(Requirement(r.src, r.dst, r.prefix, " ".join(fw.path), r.k, ident=r.ident))
    return Scenario(sc.corpus, reqs, f"fattree{k}-pinned")


# ---------------------------------------------------------------- injection

@dataclass(frozen=True)
class ErrorSpec:
    category: str
    target: str | None = None  # "router" or "router:peer"
    seed: int = 0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown error category {self.category!r}")


@dataclass
class Injection:
    spec: ErrorSpec
    corpus: Corpus
    edits: list[Patch]
    description: str
    attempts: int = 1

    def to_json(self) -> dict:
        return {"category": self.spec.category, "target": self.spec.target, "seed": self.spec.seed,
                "description": self.description, "attempts": self.attempts,
                "edits": [p.to_json() for p in self.edits]}


@dataclass(frozen=True)
class _Site:
    router: str
    peer: str | None
    description: str
    edits: tuple[Patch, ...]


def _peer_of(corpus: Corpus, ip) -> str | None:
    for name, dev in corpus.items():
        if dev.owns_ip(ip):
            return name
    return None


def _originated(corpus: Corpus) -> list[ipaddress.IPv4Network]:
    out = set()
    for dev in corpus.values():
        if dev.bgp is None:
            continue
        out.update(n.prefix for n in dev.bgp.networks)
        if dev.bgp.redistributes("static"):
            out.update(s.prefix for s in dev.static_routes)
        if dev.bgp.redistributes("connected"):
            out.update(i.prefix for i in dev.interfaces if i.prefix is not None and not i.loopback)
    return sorted(out, key=lambda p: (int(p.network_address), p.prefixlen))


def _neighbors(corpus: Corpus):
    for name in sorted(corpus):
        dev = corpus[name]
        if dev.bgp is None:
            continue
        for nb in dev.bgp.neighbors:
            yield name, dev, nb, _peer_of(corpus, nb.peer_ip)


def _new_map(dev, stem: str) -> str:
    n = 1
    while f"{stem}_{n}" in dev.route_policies:
        n += 1
    return f"{stem}_{n}"


def _import_clause_sites(corpus: Corpus, action: str, sets: list[str], what: str) -> list[_Site]:
    """Put ``route-map X <action>`` for one prefix in front of a neighbor's import policy."""
    sites = []
    prefixes = _originated(corpus)
    for name, dev, nb, peer in _neighbors(corpus):
        for p in prefixes:
            body = [f" match prefix {p}"] + sets
            if nb.import_policy is not None:
                first = dev.route_policies[nb.import_policy][0]
                if first.order <= 1:
                    continue
                edits = [Patch(SourceLoc(dev.file, first.loc.line - 1), "add",
                               f"route-map {nb.import_policy} {action} {first.order // 2}")]
                edits += [Patch(SourceLoc(dev.file, first.loc.line - 1), "add", b) for b in body]
            else:
                m = _new_map(dev, "INJ")
                end = SourceLoc(dev.file, dev.last_line)
                edits = [Patch(nb.loc, "add", f" neighbor {nb.peer_ip} route-map {m} in")]
                edits += [Patch(end, "add", ln) for ln in
                          [f"route-map {m} {action} 10"] + body + [f"route-map {m} permit 20"]]
            sites.append(_Site(name, peer, f"{name}: {what} {p} from {peer}", tuple(edits)))
    return sites


def _sites(corpus: Corpus, category: str) -> list[_Site]:
    sites: list[_Site] = []
    if category == "redistribution":
        for name in sorted(corpus):
            dev = corpus[name]
            if dev.bgp is None:
                continue
            for n in dev.bgp.networks:
                sites.append(_Site(name, None, f"{name}: drop network {n.prefix}",
                                   (Patch(n.loc, "delete", f"network {n.prefix}"),)))
            for r in dev.bgp.redistributions:
                sites.append(_Site(name, None, f"{name}: drop redistribute {r.source}",
                                   (Patch(r.loc, "delete", f"redistribute {r.source}"),)))
            if dev.bgp.redistributes("static"):
                taken = {i.name for i in dev.interfaces}
                bogus = next(f"eth{i}" for i in range(99, 1000) if f"eth{i}" not in taken)
                for s in dev.static_routes:
                    sites.append(_Site(name, None, f"{name}: static {s.prefix} via missing {bogus}", (
                        Patch(s.loc, "delete", f"ip route {s.prefix} {s.target}"),
                        Patch(s.loc, "add", f"ip route {s.prefix} {bogus}"))))
    elif category == "missing_peer":
        for name, dev, nb, peer in _neighbors(corpus):
            lines = [Patch(nb.loc, "delete", f"neighbor {nb.peer_ip} remote-as {nb.remote_as}")]
            if nb.import_loc:
                lines.append(Patch(nb.import_loc, "delete", f"neighbor {nb.peer_ip} route-map {nb.import_policy} in"))
            if nb.export_loc:
                lines.append(Patch(nb.export_loc, "delete", f"neighbor {nb.peer_ip} route-map {nb.export_policy} out"))
            if nb.rr_loc:
                lines.append(Patch(nb.rr_loc, "delete", f"neighbor {nb.peer_ip} route-reflector-client"))
            sites.append(_Site(name, peer, f"{name}: drop neighbor {nb.peer_ip} ({peer})", tuple(lines)))
            sites.append(_Site(name, peer, f"{name}: wrong remote-as for {nb.peer_ip} ({peer})", (
                lines[0], Patch(nb.loc, "add", f" neighbor {nb.peer_ip} remote-as {nb.remote_as + 1}"))))
    elif category == "send_receive":
        sites += _import_clause_sites(corpus, "deny", [], "deny")
        for name, dev, nb, peer in _neighbors(corpus):
            if nb.rr_loc:
                sites.append(_Site(name, peer, f"{name}: drop route-reflector-client {peer}",
                                   (Patch(nb.rr_loc, "delete", f"neighbor {nb.peer_ip} route-reflector-client"),)))
    elif category == "preference":
        for name in sorted(corpus):
            dev = corpus[name]
            for pol, clauses in sorted(dev.route_policies.items()):
                users = dev.policy_users(pol)
                for c in clauses:
                    if c.local_preference is None:
                        continue
                    new = 200 if c.local_preference < 200 else 50
                    peers = [_peer_of(corpus, nb.peer_ip) for nb, d in users if d == "in"]
                    for peer in peers or [None]:
                        sites.append(_Site(name, peer, f"{name}: {pol} {c.order} local-preference {c.local_preference}->{new}", (
                            Patch(c.lp_loc, "delete", f"set local-preference {c.local_preference}"),
                            Patch(c.lp_loc, "add", f" set local-preference {new}"))))
        if not sites:
            sites += _import_clause_sites(corpus, "permit", [" set local-preference 200"], "prefer")
    elif category == "ospf_peer":
        for name in sorted(corpus):
            dev = corpus[name]
            for itf in dev.interfaces:
                if itf.ospf_area_loc is not None:
                    sites.append(_Site(name, None, f"{name}: {itf.name} leaves OSPF",
                                       (Patch(itf.ospf_area_loc, "delete", f"ip ospf area {itf.ospf_area}"),)))
    elif category == "ospf_cost":
        for name in sorted(corpus):
            dev = corpus[name]
            for itf in dev.interfaces:
                if not itf.ospf_enabled or itf.loopback:
                    continue
                for new in (c for c in (1, 2, 5, 20, 50, 100) if c != itf.ospf_cost):
                    if itf.cost_loc is not None:
                        edits = (Patch(itf.cost_loc, "delete", f"ip ospf cost {itf.ospf_cost}"),
                                 Patch(itf.cost_loc, "add", f" ip ospf cost {new}"))
                    else:
                        edits = (Patch(SourceLoc(dev.file, itf.end), "add", f" ip ospf cost {new}"),)
                    sites.append(_Site(name, None, f"{name}: {itf.name} cost {itf.ospf_cost}->{new}", edits))
    return sites


def _matches(site: _Site, target: str | None) -> bool:
    if target is None:
        return True
    router, _, peer = target.partition(":")
    return site.router == router and (not peer or site.peer == peer)


def inject(corpus: Corpus, spec: ErrorSpec, requirements: Sequence[Requirement] | None = None,
           max_attempts: int = 200) -> Injection:
    """Apply one category-faithful edit chosen by ``spec.seed``.

    With ``requirements`` the injector keeps drawing sites until some
    requirement is violated, so benign edits are never returned.
    """
    from .sim import simulate, verify

    rng = random.Random(f"{spec.category}/{spec.target}/{spec.seed}")
    sites = [s for s in _sites(corpus, spec.category) if _matches(s, spec.target)]
    if not sites:
        raise TargetNotApplicable(f"no {spec.category} site{' at ' + spec.target if spec.target else ''}")
    rng.shuffle(sites)
    for n, site in enumerate(sites[:max_attempts], 1):
        broken = parse_texts(apply_patches(corpus, list(site.edits)))
        if requirements is None:
            return Injection(spec, broken, list(site.edits), site.description, n)
        if not all(v.satisfied for v in verify(requirements, simulate(broken))):
            return Injection(spec, broken, list(site.edits), site.description, n)
    raise TargetNotApplicable(f"no {spec.category} edit violates a requirement "
                              f"({min(len(sites), max_attempts)} sites tried)")


# ---------------------------------------------------------------- closed loop

@dataclass
class Scoreboard:
    repaired: bool
    status: str
    modified_line_ratio: float
    timings: dict[str, float]
    injections: list[Injection] = field(default_factory=list)
    violated: int = 0
    regressed: list[str] = field(default_factory=list)
    diagnoses: int = 0
    patches: int = 0
    error: str | None = None

    def to_json(self, timings: bool = False) -> dict:
        d = {"repaired": self.repaired, "status": self.status,
             "modified_line_ratio": round(self.modified_line_ratio, 6),
             "violated_before": self.violated, "regressed": self.regressed,
             "diagnoses": self.diagnoses, "patches": self.patches,
             "injections": [i.to_json() for i in self.injections]}
        if self.error:
            d["error"] = self.error
        if timings:
            d["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return d


_CLEAN: dict[tuple, tuple[Corpus, set[Requirement]]] = {}  # keeps the corpus alive so its id stays unique


def end_to_end(corpus: Corpus, requirements: Sequence[Requirement], specs: Sequence[ErrorSpec],
               options=None) -> Scoreboard:
    """Inject every spec in turn, run the pipeline, and score the re-verification."""
    from . import pipeline
    from .sim import simulate, verify

    reqs = list(requirements)
    key = (id(corpus), tuple(reqs))
    if key not in _CLEAN:
        _CLEAN.clear()
        _CLEAN[key] = (corpus, {v.requirement for v in verify(reqs, simulate(corpus)) if v.satisfied})
    clean = _CLEAN[key][1]
    injections = []
    broken = corpus
    try:
        for spec in specs:
            inj = inject(broken, spec, reqs)
            injections.append(inj)
            broken = inj.corpus
    except TargetNotApplicable as err:
        return Scoreboard(False, "not-applicable", 0.0, {}, injections, error=str(err))
    t0 = time.perf_counter()
    rep = pipeline.run(broken, reqs, options)
    timings = dict(rep.timings, total=time.perf_counter() - t0)
    post = {v.requirement: v.satisfied for v in rep.post}
    regressed = sorted(r.ident or r.label() for r in clean if not post.get(r, False))
    repaired = rep.ok and bool(post) and all(post.values()) and not regressed
    return Scoreboard(repaired, rep.status, rep.modified_line_ratio, timings, injections,
                      sum(1 for v in rep.pre if not v.satisfied), regressed, len(rep.diagnoses),
                      len(rep.patches), rep.error)


def scenario(topo: str) -> Scenario:
    """``fattree:K``, ``fattree-pinned:K``, ``wan`` or a bundled fixture name."""
    kind, _, arg = topo.partition(":")
    if kind == "fattree":
        return gen_fattree(int(arg or 4))
    if kind == "fattree-pinned":
        return gen_fattree_pinned(int(arg or 4))
    if kind == "wan":
        return gen_wan()
    from .scenarios import load
    return load(topo)


def parse_errors(text: str) -> list[tuple[str, int]]:
    """``preference:3,redistribution`` -> [("preference", 3), ("redistribution", 1)]."""
    out = []
    for part in filter(None, (x.strip() for x in text.split(","))):
        cat, _, n = part.partition(":")
        if cat not in CATEGORIES:
            raise ValueError(f"unknown error category {cat!r}")
        out.append((cat, int(n) if n else 1))
    return out


def parse_seeds(text: str) -> list[int]:
    """``0..19`` (inclusive), ``3`` or ``1,4,9``."""
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def bench(sc: Scenario, errors: Sequence[tuple[str, int]], seeds: Sequence[int], options=None,
          timings: bool = False) -> dict:
    runs = []
    for seed in seeds:
        specs = [ErrorSpec(cat, None, seed * 1000 + i) for cat, n in errors for i in range(n)]
        board = end_to_end(sc.corpus, sc.requirements, specs, options)
        runs.append((seed, board))
    done = [b for _, b in runs if b.status != "not-applicable"]
    ratios = [b.modified_line_ratio for b in done]
    return {
        "scenario": sc.name,
        "errors": [{"category": c, "count": n} for c, n in errors],
        "runs": [dict(b.to_json(timings), seed=s) for s, b in runs],
        "summary": {"runs": len(runs), "applicable": len(done),
                    "repaired": sum(b.repaired for b in done),
                    "regressions": sum(len(b.regressed) for b in done),
                    "mean_modified_line_ratio": round(sum(ratios) / len(ratios), 6) if ratios else 0.0,
                    "max_modified_line_ratio": round(max(ratios), 6) if ratios else 0.0},
    }
