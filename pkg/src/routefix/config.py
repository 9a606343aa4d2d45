"""Router configuration IR, parser, serializer and line patcher.

The accepted language is a small IOS-flavored subset, documented in
``docs/config-format.md``.  Every parsed item keeps the file and line it
came from so diagnoses can point at concrete lines and patches can be
expressed as whole-line additions and deletions.
"""
from __future__ import annotations

import difflib
import ipaddress
import re
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

IPv4Address = ipaddress.IPv4Address
IPv4Network = ipaddress.IPv4Network
IPv4Interface = ipaddress.IPv4Interface

DEFAULT_LOCAL_PREF = 100
DEFAULT_OSPF_COST = 10


class ConfigError(Exception):
    pass


class ParseError(ConfigError):
    def __init__(self, file: str, line: int, reason: str):
        super().__init__(f"{file}:{line}: {reason}")
        self.file = file
        self.line = line
        self.reason = reason


class DuplicateRouter(ConfigError):
    pass


class ConflictingPatches(ConfigError):
    pass


class InvalidAnchor(ConfigError):
    pass


@dataclass(frozen=True, order=True)
class SourceLoc:
    file: str
    line: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


@dataclass(frozen=True)
class Interface:
    name: str
    loc: SourceLoc
    end: int
    address: IPv4Interface | None = None
    address_loc: SourceLoc | None = None
    ospf_area: int | None = None
    ospf_area_loc: SourceLoc | None = None
    ospf_cost: int = DEFAULT_OSPF_COST
    cost_loc: SourceLoc | None = None

    @property
    def prefix(self) -> IPv4Network | None:
        return self.address.network if self.address is not None else None

    @property
    def ip(self) -> IPv4Address | None:
        return self.address.ip if self.address is not None else None

    @property
    def loopback(self) -> bool:
        return self.name.lower().startswith(("lo", "loopback"))

    @property
    def ospf_enabled(self) -> bool:
        return self.ospf_area is not None


@dataclass(frozen=True)
class Neighbor:
    peer_ip: IPv4Address
    remote_as: int
    loc: SourceLoc
    import_policy: str | None = None
    import_loc: SourceLoc | None = None
    export_policy: str | None = None
    export_loc: SourceLoc | None = None
    route_reflector_client: bool = False
    rr_loc: SourceLoc | None = None


@dataclass(frozen=True)
class Network:
    prefix: IPv4Network
    loc: SourceLoc


@dataclass(frozen=True)
class Redistribution:
    source: str  # "static" | "connected"
    loc: SourceLoc


@dataclass(frozen=True)
class BgpProcess:
    asn: int
    loc: SourceLoc
    end: int
    router_id: IPv4Address | None = None
    router_id_loc: SourceLoc | None = None
    neighbors: tuple[Neighbor, ...] = ()
    networks: tuple[Network, ...] = ()
    redistributions: tuple[Redistribution, ...] = ()

    def neighbor(self, ip: IPv4Address) -> Neighbor | None:
        for nb in self.neighbors:
            if nb.peer_ip == ip:
                return nb
        return None

    def redistributes(self, source: str) -> bool:
        return any(r.source == source for r in self.redistributions)

    def has_network(self, prefix: IPv4Network) -> bool:
        return any(n.prefix == prefix for n in self.networks)


@dataclass(frozen=True)
class OspfProcess:
    pid: int
    loc: SourceLoc
    end: int


@dataclass(frozen=True)
class StaticRoute:
    prefix: IPv4Network
    target: str
    loc: SourceLoc

    @property
    def next_hop_ip(self) -> IPv4Address | None:
        try:
            return ipaddress.IPv4Address(self.target)
        except ValueError:
            return None


@dataclass(frozen=True)
class Match:
    kind: str  # "prefix" | "community" | "as-path"
    value: str
    loc: SourceLoc

    def holds(self, prefix: IPv4Network, communities: frozenset[str], as_path: Sequence[int]) -> bool:
        if self.kind == "prefix":
            return ipaddress.IPv4Network(self.value) == prefix
        if self.kind == "community":
            return self.value in communities
        return re.search(_as_path_regex(self.value), " ".join(str(a) for a in as_path)) is not None


def _as_path_regex(text: str) -> str:
    # IOS-style underscore: start, end or a separating space
    return text.replace("_", r"(?:^|$|\s)")


@dataclass(frozen=True)
class PolicyClause:
    policy: str
    order: int
    action: str  # "permit" | "deny"
    loc: SourceLoc
    end: int
    matches: tuple[Match, ...] = ()
    local_preference: int | None = None
    lp_loc: SourceLoc | None = None
    communities: tuple[str, ...] = ()
    additive: bool = True
    community_loc: SourceLoc | None = None

    def applies(self, prefix: IPv4Network, communities: frozenset[str], as_path: Sequence[int]) -> bool:
        return all(m.holds(prefix, communities, as_path) for m in self.matches)

    @property
    def has_sets(self) -> bool:
        return self.local_preference is not None or bool(self.communities)


@dataclass(frozen=True)
class PolicyResult:
    permit: bool
    clause: PolicyClause | None
    local_pref: int | None
    communities: frozenset[str]


@dataclass(frozen=True)
class DeviceConfig:
    name: str
    file: str
    hostname_loc: SourceLoc | None
    last_line: int
    interfaces: tuple[Interface, ...] = ()
    bgp: BgpProcess | None = None
    ospf: OspfProcess | None = None
    static_routes: tuple[StaticRoute, ...] = ()
    route_policies: Mapping[str, tuple[PolicyClause, ...]] = field(default_factory=dict)

    @property
    def as_number(self) -> int | None:
        return self.bgp.asn if self.bgp is not None else None

    def interface(self, name: str) -> Interface | None:
        for itf in self.interfaces:
            if itf.name == name:
                return itf
        return None

    def addresses(self) -> list[IPv4Address]:
        return [i.ip for i in self.interfaces if i.ip is not None]

    def owns_ip(self, ip: IPv4Address) -> bool:
        return any(i.ip == ip for i in self.interfaces)

    def loopback_ip(self) -> IPv4Address | None:
        for itf in self.interfaces:
            if itf.loopback and itf.ip is not None:
                return itf.ip
        return None

    def evaluate_policy(self, name: str | None, prefix: IPv4Network,
                        communities: frozenset[str], as_path: Sequence[int]) -> PolicyResult:
        """First-match evaluation; no clause matching means deny."""
        if name is None:
            return PolicyResult(True, None, None, communities)
        for clause in self.route_policies.get(name, ()):
            if not clause.applies(prefix, communities, as_path):
                continue
            if clause.action == "deny":
                return PolicyResult(False, clause, None, communities)
            comms = communities
            if clause.communities:
                added = frozenset(clause.communities)
                comms = comms | added if clause.additive else added
            return PolicyResult(True, clause, clause.local_preference, comms)
        return PolicyResult(False, None, None, communities)

    def policy_users(self, name: str) -> list[tuple[Neighbor, str]]:
        """Neighbor attachments (neighbor, direction) that reference policy ``name``."""
        out = []
        if self.bgp is None:
            return out
        for nb in self.bgp.neighbors:
            if nb.import_policy == name:
                out.append((nb, "in"))
            if nb.export_policy == name:
                out.append((nb, "out"))
        return out


# ---------------------------------------------------------------- parsing

_NAME = re.compile(r"^[A-Za-z0-9_.\-]+$")


class _Builder:
    """Mutable scratch state for one file; frozen into a DeviceConfig at the end."""

    def __init__(self, file: str):
        self.file = file
        self.hostname: str | None = None
        self.hostname_loc: SourceLoc | None = None
        self.interfaces: list[dict] = []
        self.bgp: dict | None = None
        self.ospf: dict | None = None
        self.statics: list[StaticRoute] = []
        self.clauses: list[dict] = []
        self.block: tuple[str, dict] | None = None

    def loc(self, line: int) -> SourceLoc:
        return SourceLoc(self.file, line)


def _err(b: _Builder, line: int, reason: str) -> ParseError:
    return ParseError(b.file, line, reason)


def _ip(b: _Builder, line: int, text: str) -> IPv4Address:
    try:
        return ipaddress.IPv4Address(text)
    except ValueError:
        raise _err(b, line, f"bad IPv4 address {text!r}") from None


def _net(b: _Builder, line: int, text: str) -> IPv4Network:
    try:
        return ipaddress.IPv4Network(text, strict=True)
    except ValueError:
        raise _err(b, line, f"bad prefix {text!r}") from None


def _int(b: _Builder, line: int, text: str, low: int = 0) -> int:
    if not text.isdigit() or int(text) < low:
        raise _err(b, line, f"expected integer >= {low}, got {text!r}")
    return int(text)


def _top(b: _Builder, n: int, tok: list[str]) -> None:
    b.block = None
    head = tok[0]
    if head == "hostname" and len(tok) == 2:
        if b.hostname is not None:
            raise _err(b, n, "duplicate hostname")
        b.hostname, b.hostname_loc = tok[1], b.loc(n)
    elif head == "interface" and len(tok) == 2:
        if any(i["name"] == tok[1] for i in b.interfaces):
            raise _err(b, n, f"duplicate interface {tok[1]}")
        d = {"name": tok[1], "loc": b.loc(n), "end": n}
        b.interfaces.append(d)
        b.block = ("interface", d)
    elif head == "router" and len(tok) == 3 and tok[1] == "bgp":
        if b.bgp is not None:
            raise _err(b, n, "duplicate router bgp")
        b.bgp = {"asn": _int(b, n, tok[2], 1), "loc": b.loc(n), "end": n,
                 "neighbors": {}, "order": [], "networks": [], "redist": []}
        b.block = ("bgp", b.bgp)
    elif head == "router" and len(tok) == 3 and tok[1] == "ospf":
        if b.ospf is not None:
            raise _err(b, n, "duplicate router ospf")
        b.ospf = {"pid": _int(b, n, tok[2], 1), "loc": b.loc(n), "end": n}
        b.block = ("ospf", b.ospf)
    elif head == "ip" and len(tok) == 4 and tok[1] == "route":
        b.statics.append(StaticRoute(_net(b, n, tok[2]), tok[3], b.loc(n)))
    elif head == "route-map" and len(tok) == 4 and tok[2] in ("permit", "deny"):
        if not _NAME.match(tok[1]):
            raise _err(b, n, f"bad route-map name {tok[1]!r}")
        d = {"policy": tok[1], "action": tok[2], "order": _int(b, n, tok[3]),
             "loc": b.loc(n), "end": n, "matches": [], "lp": None, "lp_loc": None,
             "comms": (), "additive": True, "comm_loc": None}
        b.clauses.append(d)
        b.block = ("route-map", d)
    else:
        raise _err(b, n, f"unknown command {' '.join(tok)!r}")


def _sub(b: _Builder, n: int, tok: list[str]) -> None:
    if b.block is None:
        raise _err(b, n, "indented line outside of a block")
    kind, d = b.block
    d["end"] = n
    if kind == "interface":
        if tok[:2] == ["ip", "address"] and len(tok) == 3:
            if "address" in d:
                raise _err(b, n, "duplicate ip address")
            try:
                d["address"] = ipaddress.IPv4Interface(tok[2])
            except ValueError:
                raise _err(b, n, f"bad interface address {tok[2]!r}") from None
            if "/" not in tok[2]:
                raise _err(b, n, "interface address needs a prefix length")
            d["address_loc"] = b.loc(n)
        elif tok[:3] == ["ip", "ospf", "area"] and len(tok) == 4:
            d["ospf_area"], d["ospf_area_loc"] = _int(b, n, tok[3]), b.loc(n)
        elif tok[:3] == ["ip", "ospf", "cost"] and len(tok) == 4:
            d["ospf_cost"], d["cost_loc"] = _int(b, n, tok[3], 1), b.loc(n)
        else:
            raise _err(b, n, f"unknown interface command {' '.join(tok)!r}")
    elif kind == "bgp":
        if tok[:2] == ["bgp", "router-id"] and len(tok) == 3:
            d["router_id"], d["router_id_loc"] = _ip(b, n, tok[2]), b.loc(n)
        elif tok[0] == "neighbor" and len(tok) >= 3:
            ip = _ip(b, n, tok[1])
            nbs = d["neighbors"]
            if tok[2] == "remote-as" and len(tok) == 4:
                if ip in nbs:
                    raise _err(b, n, f"duplicate neighbor {ip}")
                nbs[ip] = {"peer_ip": ip, "remote_as": _int(b, n, tok[3], 1), "loc": b.loc(n)}
                d["order"].append(ip)
                return
            if ip not in nbs:
                raise _err(b, n, f"neighbor {ip} used before remote-as")
            nb = nbs[ip]
            if tok[2] == "route-map" and len(tok) == 5 and tok[4] in ("in", "out"):
                key = "import" if tok[4] == "in" else "export"
                if f"{key}_policy" in nb:
                    raise _err(b, n, f"duplicate {tok[4]} route-map for {ip}")
                nb[f"{key}_policy"], nb[f"{key}_loc"] = tok[3], b.loc(n)
            elif tok[2] == "route-reflector-client" and len(tok) == 3:
                nb["route_reflector_client"], nb["rr_loc"] = True, b.loc(n)
            else:
                raise _err(b, n, f"unknown neighbor command {' '.join(tok)!r}")
        elif tok[0] == "network" and len(tok) == 2:
            d["networks"].append(Network(_net(b, n, tok[1]), b.loc(n)))
        elif tok[0] == "redistribute" and len(tok) == 2 and tok[1] in ("static", "connected"):
            d["redist"].append(Redistribution(tok[1], b.loc(n)))
        else:
            raise _err(b, n, f"unknown bgp command {' '.join(tok)!r}")
    elif kind == "ospf":
        raise _err(b, n, f"unknown ospf command {' '.join(tok)!r}")
    else:  # route-map
        if tok[0] == "match" and len(tok) >= 3:
            if tok[1] == "prefix" and len(tok) == 3:
                d["matches"].append(Match("prefix", str(_net(b, n, tok[2])), b.loc(n)))
            elif tok[1] == "community" and len(tok) == 3:
                d["matches"].append(Match("community", tok[2], b.loc(n)))
            elif tok[1] == "as-path" and len(tok) >= 3:
                regex = " ".join(tok[2:])
                try:
                    re.compile(_as_path_regex(regex))
                except re.error:
                    raise _err(b, n, f"bad as-path regex {regex!r}") from None
                d["matches"].append(Match("as-path", regex, b.loc(n)))
            else:
                raise _err(b, n, f"unknown match {' '.join(tok)!r}")
        elif tok[:2] == ["set", "local-preference"] and len(tok) == 3:
            d["lp"], d["lp_loc"] = _int(b, n, tok[2], 1), b.loc(n)
        elif tok[:2] == ["set", "community"] and len(tok) >= 3:
            additive = tok[-1] == "additive"
            tags = tok[2:-1] if additive else tok[2:]
            if not tags:
                raise _err(b, n, "set community needs a tag")
            d["comms"], d["additive"], d["comm_loc"] = tuple(tags), additive, b.loc(n)
        else:
            raise _err(b, n, f"unknown route-map command {' '.join(tok)!r}")


def _freeze(b: _Builder, fallback_name: str, last_line: int) -> DeviceConfig:
    interfaces = tuple(
        Interface(name=d["name"], loc=d["loc"], end=d["end"], address=d.get("address"),
                  address_loc=d.get("address_loc"), ospf_area=d.get("ospf_area"),
                  ospf_area_loc=d.get("ospf_area_loc"),
                  ospf_cost=d.get("ospf_cost", DEFAULT_OSPF_COST), cost_loc=d.get("cost_loc"))
        for d in b.interfaces)
    bgp = None
    if b.bgp is not None:
        d = b.bgp
        nbs = tuple(Neighbor(**d["neighbors"][ip]) for ip in d["order"])
        bgp = BgpProcess(asn=d["asn"], loc=d["loc"], end=d["end"], router_id=d.get("router_id"),
                         router_id_loc=d.get("router_id_loc"), neighbors=nbs,
                         networks=tuple(d["networks"]), redistributions=tuple(d["redist"]))
    ospf = None
    if b.ospf is not None:
        ospf = OspfProcess(b.ospf["pid"], b.ospf["loc"], b.ospf["end"])
    policies: dict[str, list[PolicyClause]] = {}
    for d in b.clauses:
        clause = PolicyClause(policy=d["policy"], order=d["order"], action=d["action"],
                              loc=d["loc"], end=d["end"], matches=tuple(d["matches"]),
                              local_preference=d["lp"], lp_loc=d["lp_loc"],
                              communities=d["comms"], additive=d["additive"],
                              community_loc=d["comm_loc"])
        if clause.action == "deny" and clause.has_sets:
            raise _err(b, clause.loc.line, "deny clause cannot carry set commands")
        seq = policies.setdefault(clause.policy, [])
        if seq and seq[-1].order >= clause.order:
            raise _err(b, clause.loc.line, f"route-map {clause.policy} orders must increase")
        seq.append(clause)
    name = b.hostname or fallback_name
    dev = DeviceConfig(name=name, file=b.file, hostname_loc=b.hostname_loc, last_line=last_line,
                       interfaces=interfaces, bgp=bgp, ospf=ospf, static_routes=tuple(b.statics),
                       route_policies={k: tuple(v) for k, v in policies.items()})
    if bgp is not None:
        for nb in bgp.neighbors:
            for pol, loc in ((nb.import_policy, nb.import_loc), (nb.export_policy, nb.export_loc)):
                if pol is not None and pol not in dev.route_policies:
                    raise ParseError(b.file, loc.line, f"undefined route-map {pol}")
    return dev


def parse_config(text: str, file: str) -> DeviceConfig:
    b = _Builder(file)
    lines = text.split("\n")
    for n, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("!"):
            if stripped.startswith("!"):
                b.block = None
            continue
        tok = stripped.split()
        if raw[0] in " \t":
            _sub(b, n, tok)
        else:
            _top(b, n, tok)
    return _freeze(b, Path(file).stem, len(lines) - 1 if text.endswith("\n") else len(lines))


class Corpus(Mapping[str, DeviceConfig]):
    """Immutable mapping router name -> DeviceConfig, plus the source texts."""

    def __init__(self, devices: Mapping[str, DeviceConfig], texts: Mapping[str, str]):
        self._devices = dict(sorted(devices.items()))
        self.texts = dict(sorted(texts.items()))

    def __getitem__(self, name: str) -> DeviceConfig:
        return self._devices[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._devices)

    def __len__(self) -> int:
        return len(self._devices)

    def __repr__(self) -> str:
        return f"Corpus({list(self._devices)})"

    def by_file(self, file: str) -> DeviceConfig:
        for dev in self._devices.values():
            if dev.file == file:
                return dev
        raise KeyError(file)

    def total_lines(self) -> int:
        return sum(1 for t in self.texts.values() for ln in t.split("\n")
                   if ln.strip() and not ln.strip().startswith("!"))

    def write(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for file, text in self.texts.items():
            (out / file).write_text(text)


def parse_texts(texts: Mapping[str, str]) -> Corpus:
    devices: dict[str, DeviceConfig] = {}
    for file in sorted(texts):
        dev = parse_config(texts[file], file)
        if dev.name in devices:
            raise DuplicateRouter(f"router {dev.name} defined in {devices[dev.name].file} and {file}")
        devices[dev.name] = dev
    return Corpus(devices, texts)


def parse_corpus(directory: str | Path) -> Corpus:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"{d} is not a directory")
    return parse_texts({p.name: p.read_text() for p in sorted(d.glob("*.cfg"))})


# ---------------------------------------------------------------- serialize

def _lines_of(dev: DeviceConfig) -> list[tuple[int, str]]:
    out: list[tuple[int, str]] = []
    if dev.hostname_loc is not None:
        out.append((dev.hostname_loc.line, f"hostname {dev.name}"))
    for itf in dev.interfaces:
        out.append((itf.loc.line, f"interface {itf.name}"))
        if itf.address_loc:
            out.append((itf.address_loc.line, f" ip address {itf.address.with_prefixlen}"))
        if itf.ospf_area_loc:
            out.append((itf.ospf_area_loc.line, f" ip ospf area {itf.ospf_area}"))
        if itf.cost_loc:
            out.append((itf.cost_loc.line, f" ip ospf cost {itf.ospf_cost}"))
    if dev.bgp is not None:
        bgp = dev.bgp
        out.append((bgp.loc.line, f"router bgp {bgp.asn}"))
        if bgp.router_id_loc:
            out.append((bgp.router_id_loc.line, f" bgp router-id {bgp.router_id}"))
        for nb in bgp.neighbors:
            out.append((nb.loc.line, f" neighbor {nb.peer_ip} remote-as {nb.remote_as}"))
            if nb.import_loc:
                out.append((nb.import_loc.line, f" neighbor {nb.peer_ip} route-map {nb.import_policy} in"))
            if nb.export_loc:
                out.append((nb.export_loc.line, f" neighbor {nb.peer_ip} route-map {nb.export_policy} out"))
            if nb.rr_loc:
                out.append((nb.rr_loc.line, f" neighbor {nb.peer_ip} route-reflector-client"))
        for net in bgp.networks:
            out.append((net.loc.line, f" network {net.prefix}"))
        for r in bgp.redistributions:
            out.append((r.loc.line, f" redistribute {r.source}"))
    if dev.ospf is not None:
        out.append((dev.ospf.loc.line, f"router ospf {dev.ospf.pid}"))
    for s in dev.static_routes:
        out.append((s.loc.line, f"ip route {s.prefix} {s.target}"))
    for clauses in dev.route_policies.values():
        for c in clauses:
            out.append((c.loc.line, f"route-map {c.policy} {c.action} {c.order}"))
            for m in c.matches:
                out.append((m.loc.line, f" match {m.kind} {m.value}"))
            if c.lp_loc:
                out.append((c.lp_loc.line, f" set local-preference {c.local_preference}"))
            if c.community_loc:
                tail = " additive" if c.additive else ""
                out.append((c.community_loc.line, f" set community {' '.join(c.communities)}{tail}"))
    out.sort()
    return out


def serialize(dev: DeviceConfig) -> str:
    """Canonical text of ``dev`` in source-line order (comments dropped)."""
    return "\n".join(text for _, text in _lines_of(dev)) + "\n"


def token_stream(text: str) -> list[list[str]]:
    return [ln.split() for ln in text.split("\n") if ln.strip() and not ln.strip().startswith("!")]


# ---------------------------------------------------------------- patches

@dataclass(frozen=True)
class Patch:
    loc: SourceLoc
    op: str  # "add" | "delete"
    command: str

    def to_json(self) -> dict:
        return {"file": self.loc.file, "line": self.loc.line, "op": self.op, "command": self.command}

    @property
    def sign(self) -> str:
        return "+" if self.op == "add" else "-"


def apply_patches(corpus: Corpus, patches: Sequence[Patch]) -> dict[str, str]:
    """Return the patched texts; adds land after their anchor line in the given order.

    Line numbers always refer to the unpatched file.  An add anchored at line 0
    goes to the top of the file.
    """
    by_file: dict[str, list[Patch]] = {}
    for p in patches:
        if p.op not in ("add", "delete"):
            raise InvalidAnchor(f"unknown patch op {p.op!r}")
        if p.loc.file not in corpus.texts:
            raise InvalidAnchor(f"no such file {p.loc.file}")
        by_file.setdefault(p.loc.file, []).append(p)
    out = dict(corpus.texts)
    for file, plist in by_file.items():
        text = corpus.texts[file]
        trailing = text.endswith("\n")
        lines = text.split("\n")
        if trailing:
            lines.pop()
        deletes: set[int] = set()
        adds: dict[int, list[str]] = {}
        for p in plist:
            if p.op == "delete":
                if not 1 <= p.loc.line <= len(lines):
                    raise InvalidAnchor(f"{p.loc}: delete past end of file")
                current = lines[p.loc.line - 1]
                if not current.strip() or current.strip().startswith("!"):
                    raise InvalidAnchor(f"{p.loc}: delete targets a blank or comment line")
                if current.strip() != p.command.strip():
                    raise InvalidAnchor(f"{p.loc}: delete expects {p.command.strip()!r}, found {current.strip()!r}")
                if p.loc.line in deletes:
                    raise ConflictingPatches(f"{p.loc}: deleted twice")
                deletes.add(p.loc.line)
            else:
                if not 0 <= p.loc.line <= len(lines):
                    raise InvalidAnchor(f"{p.loc}: add anchor past end of file")
                adds.setdefault(p.loc.line, []).append(p.command)
        adds = {k: _order_adds(v) for k, v in adds.items()}
        new: list[str] = list(adds.get(0, []))
        for i, ln in enumerate(lines, start=1):
            if i not in deletes:
                new.append(ln)
            new.extend(adds.get(i, []))
        out[file] = "\n".join(new) + ("\n" if trailing or not new else "")
    return out


_SUBCOMMANDS = {
    "route-map": ("match", "set"),
    "interface": ("ip", "description", "shutdown"),
    "router": ("neighbor", "network", "redistribute", "bgp"),
}


def _order_adds(lines: list[str]) -> list[str]:
    """Keep sub-commands meant for the anchor's own block ahead of new top-level blocks.

    Adds from independent repairs can share an anchor at the end of a file;
    an indented line that does not belong to the block header before it is
    moved up to continue the block the anchor sits in.
    """
    lead: list[str] = []
    blocks: list[list[str]] = []
    for ln in lines:
        if ln and not ln[0].isspace():
            blocks.append([ln])
            continue
        words = ln.split()
        if blocks and words:
            head = blocks[-1][0].split()[0]
            allowed = _SUBCOMMANDS.get(head)
            if allowed is None or head == "router" and blocks[-1][0].split()[1:2] == ["ospf"] \
                    or words[0] in allowed:
                blocks[-1].append(ln)
                continue
        lead.append(ln)
    return lead + [ln for b in blocks for ln in b]


def diff_corpus(old: Corpus, new: Corpus) -> list[Patch]:
    """Line patches against ``old`` that produce ``new`` (files present in both)."""
    out: list[Patch] = []
    for file in sorted(old.texts):
        a = old.texts[file].split("\n")
        b = new.texts.get(file, old.texts[file]).split("\n")
        if a == b:
            continue
        for tag, i1, i2, j1, j2 in difflib.SequenceMatcher(None, a, b, autojunk=False).get_opcodes():
            if tag in ("delete", "replace"):
                out += [Patch(SourceLoc(file, i + 1), "delete", a[i].strip()) for i in range(i1, i2) if a[i].strip()]
            if tag in ("insert", "replace"):
                out += [Patch(SourceLoc(file, i1), "add", ln) for ln in b[j1:j2] if ln.strip()]
    return out


def patched_corpus(corpus: Corpus, patches: Sequence[Patch]) -> Corpus:
    return parse_texts(apply_patches(corpus, patches))
