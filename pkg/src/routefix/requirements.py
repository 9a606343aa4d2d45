"""Path requirements: regex dialect, DFA compilation and compliant-path search.

Dialect (see ``docs/requirements.md``):

* router names are symbols; adjacent names may be written without spaces
  (``C1C4C3``) and are split by longest match against the alphabet;
* a bare ``*`` is a wildcard for zero or more routers;
* ``.`` is exactly one router, ``X*`` after ``)`` or ``.`` is a Kleene star;
* ``|``, ``( )``, postfix ``+`` and ``?`` have their usual meaning;
* ``¬X`` (or ``!X``, ``¬{X,Y}``) forbids X anywhere in the path.
"""
from __future__ import annotations

import ipaddress
import json
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

OTHER = "\x00other"
ESTABLISHED = "established"
DOWN = "configured-but-down"


class RegexSyntaxError(ValueError):
    pass


class UnknownRouterSymbol(ValueError):
    pass


class NoCompliantPath(Exception):
    def __init__(self, src: str, dst: str, only_via_down: bool):
        what = "only via configured-but-down peers" if only_via_down else "none at all"
        super().__init__(f"no compliant path {src} -> {dst} ({what})")
        self.src = src
        self.dst = dst
        self.only_via_down = only_via_down


class RequirementError(ValueError):
    pass


# ---------------------------------------------------------------- lexer / parser

def _split_name(word: str, alphabet: frozenset[str] | None) -> list[str]:
    if alphabet is None or word in alphabet:
        return [word]
    out, i = [], 0
    while i < len(word):
        for j in range(len(word), i, -1):
            if word[i:j] in alphabet:
                out.append(word[i:j])
                i = j
                break
        else:
            raise UnknownRouterSymbol(f"cannot split {word!r} into router names")
    return out


def _lex(text: str, alphabet: frozenset[str] | None) -> list[tuple[str, str]]:
    toks: list[tuple[str, str]] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isalnum() or ch in "_-":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] in "_-"):
                j += 1
            toks.extend(("name", n) for n in _split_name(text[i:j], alphabet))
            i = j
            continue
        if ch == "*":
            postfix = i > 0 and text[i - 1] in ").?+"
            toks.append(("star" if postfix else "wild", ch))
        elif ch in "¬!":
            toks.append(("neg", ch))
        elif ch in ".|()+?{},":
            toks.append((ch, ch))
        else:
            raise RegexSyntaxError(f"unexpected character {ch!r} at {i}")
        i += 1
    return toks


class _Parser:
    def __init__(self, toks: list[tuple[str, str]]):
        self.toks = toks
        self.i = 0
        self.excluded: set[str] = set()
        self.literals: set[str] = set()

    def peek(self) -> str | None:
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def take(self, kind: str) -> str:
        if self.peek() != kind:
            raise RegexSyntaxError(f"expected {kind!r} at token {self.i}")
        val = self.toks[self.i][1]
        self.i += 1
        return val

    def parse(self):
        node = self.alt()
        if self.i != len(self.toks):
            raise RegexSyntaxError(f"trailing input at token {self.i}")
        return node

    def alt(self):
        branches = [self.concat()]
        while self.peek() == "|":
            self.i += 1
            branches.append(self.concat())
        return branches[0] if len(branches) == 1 else ("alt", branches)

    def concat(self):
        items = []
        while self.peek() not in (None, "|", ")"):
            items.append(self.item())
        if not items:
            return ("eps",)
        return items[0] if len(items) == 1 else ("cat", items)

    def item(self):
        node = self.atom()
        while self.peek() in ("star", "+", "?"):
            op = self.take(self.peek())
            node = {"*": ("star", node), "+": ("plus", node), "?": ("opt", node)}[op]
        return node

    def atom(self):
        kind = self.peek()
        if kind == "name":
            name = self.take("name")
            self.literals.add(name)
            return ("sym", name)
        if kind == "wild":
            self.i += 1
            return ("star", ("any",))
        if kind == ".":
            self.i += 1
            return ("any",)
        if kind == "(":
            self.i += 1
            node = self.alt()
            self.take(")")
            return node
        if kind == "neg":
            self.i += 1
            if self.peek() == "{":
                self.i += 1
                names = [self.take("name")]
                while self.peek() == ",":
                    self.i += 1
                    names.append(self.take("name"))
                self.take("}")
            else:
                names = [self.take("name")]
            self.excluded.update(names)
            return ("eps",)
        raise RegexSyntaxError(f"unexpected token {kind!r} at {self.i}")


# ---------------------------------------------------------------- automata

class _Nfa:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[str | None, int]]] = []  # label None = any symbol

    def state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def build(self, node) -> tuple[int, int]:
        kind = node[0]
        s, t = self.state(), self.state()
        if kind == "eps":
            self.eps[s].append(t)
        elif kind == "sym":
            self.edges[s].append((node[1], t))
        elif kind == "any":
            self.edges[s].append((None, t))
        elif kind == "cat":
            cur = s
            for child in node[1]:
                a, b = self.build(child)
                self.eps[cur].append(a)
                cur = b
            self.eps[cur].append(t)
        elif kind == "alt":
            for child in node[1]:
                a, b = self.build(child)
                self.eps[s].append(a)
                self.eps[b].append(t)
        elif kind in ("star", "plus", "opt"):
            a, b = self.build(node[1])
            self.eps[s].append(a)
            self.eps[b].append(t)
            if kind != "plus":
                self.eps[s].append(t)
            if kind != "opt":
                self.eps[b].append(a)
        else:
            raise RegexSyntaxError(f"bad node {kind}")
        return s, t

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        stack = list(states)
        seen = set(stack)
        while stack:
            q = stack.pop()
            for r in self.eps[q]:
                if r not in seen:
                    seen.add(r)
                    stack.append(r)
        return frozenset(seen)


@dataclass(frozen=True)
class PathDfa:
    regex: str
    alphabet: tuple[str, ...]
    transitions: tuple[Mapping[str, int], ...]
    start: int
    accepting: frozenset[int]
    sink: int
    excluded: frozenset[str] = frozenset()
    literals: frozenset[str] = frozenset()

    @property
    def states(self) -> range:
        return range(len(self.transitions))

    def step(self, state: int, symbol: str) -> int:
        row = self.transitions[state]
        if symbol in row:
            return row[symbol]
        return row.get(OTHER, self.sink)

    def run(self, word: Sequence[str]) -> int:
        q = self.start
        for sym in word:
            q = self.step(q, sym)
        return q

    def accepts(self, word: Sequence[str]) -> bool:
        return self.run(word) in self.accepting


def compile_regex(regex: str, alphabet: Iterable[str] | None = None) -> PathDfa:
    """Compile ``regex`` to a total DFA over ``alphabet`` (subset construction)."""
    return _compile(regex, frozenset(alphabet) if alphabet is not None else None)


@lru_cache(maxsize=4096)
def _compile(regex: str, alpha: frozenset[str] | None) -> PathDfa:
    parser = _Parser(_lex(regex, alpha))
    tree = parser.parse()
    names = parser.literals | parser.excluded
    if alpha is None:
        symbols = tuple(sorted(names)) + (OTHER,)
    else:
        unknown = names - alpha
        if unknown:
            raise UnknownRouterSymbol(f"unknown routers {sorted(unknown)} in {regex!r}")
        symbols = tuple(sorted(alpha))
    nfa = _Nfa()
    s, t = nfa.build(tree)
    start = nfa.closure([s])
    index: dict[frozenset[int], int] = {start: 0}
    rows: list[dict[str, int]] = [{}]
    work = [start]
    dead = frozenset()
    while work:
        cur = work.pop()
        row = rows[index[cur]]
        for sym in symbols:
            if sym in parser.excluded:
                nxt = dead
            else:
                nxt = nfa.closure(r for q in cur for lab, r in nfa.edges[q]
                                  if lab is None or lab == sym)
            if nxt not in index:
                index[nxt] = len(rows)
                rows.append({})
                work.append(nxt)
            row[sym] = index[nxt]
    if dead not in index:
        index[dead] = len(rows)
        rows.append({sym: index[dead] for sym in symbols})
    sink = index[dead]
    accepting = frozenset(i for st, i in index.items() if t in st)
    return PathDfa(regex=regex, alphabet=symbols, transitions=tuple(rows), start=0,
                   accepting=accepting, sink=sink, excluded=frozenset(parser.excluded),
                   literals=frozenset(parser.literals))


compile = compile_regex


# ---------------------------------------------------------------- requirements

@dataclass(frozen=True)
class Requirement:
    src: str
    dst: str
    prefix: ipaddress.IPv4Network
    path_regex: str
    k: int = 0
    ident: str = ""

    def __post_init__(self):
        if self.src == self.dst:
            raise RequirementError(f"src equals dst ({self.src})")
        if self.k < 0:
            raise RequirementError("k must be non-negative")
        if not isinstance(self.prefix, ipaddress.IPv4Network):
            object.__setattr__(self, "prefix", ipaddress.IPv4Network(self.prefix))

    @cached_property
    def kind(self) -> str:
        return classify(self)

    def dfa(self, alphabet: Iterable[str]) -> PathDfa:
        return compile_regex(self.path_regex, set(alphabet) | {self.src, self.dst})

    def label(self) -> str:
        return f"({self.src},{self.dst},{self.prefix},{self.path_regex},{self.k})"

    def to_json(self) -> dict:
        d = {"src": self.src, "dst": self.dst, "prefix": str(self.prefix),
             "regex": self.path_regex, "k": self.k}
        if self.ident:
            d["id"] = self.ident
        return d

    def sort_key(self) -> tuple:
        return (self.prefix.network_address, self.prefix.prefixlen, self.src, self.dst,
                self.path_regex, self.k)


def classify(req: Requirement) -> str:
    """bypass if the regex forbids a router; waypoint if some other router is mandatory."""
    dfa = compile_regex(req.path_regex)
    if dfa.excluded:
        return "bypass"
    alpha = set(dfa.literals) | {req.src, req.dst}
    dfa = compile_regex(req.path_regex, alpha | {OTHER})
    for x in sorted(dfa.literals - {req.src, req.dst}):
        if not _has_word_avoiding(dfa, req.src, req.dst, x):
            return "waypoint"
    return "reachability"


def _has_word_avoiding(dfa: PathDfa, src: str, dst: str, avoid: str) -> bool:
    first = dfa.step(dfa.start, src)
    seen, stack = {first}, [first]
    while stack:
        q = stack.pop()
        if dfa.step(q, dst) in dfa.accepting:
            return True
        for sym in dfa.alphabet:
            if sym == avoid:
                continue
            r = dfa.step(q, sym)
            if r != dfa.sink and r not in seen:
                seen.add(r)
                stack.append(r)
    return False


def load_requirements(path: str | Path) -> list[Requirement]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RequirementError(f"{path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("requirements", [])
    return parse_requirements(data)


def parse_requirements(records: Sequence[Mapping]) -> list[Requirement]:
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(Requirement(src=rec["src"], dst=rec["dst"],
                                   prefix=ipaddress.IPv4Network(rec["prefix"]),
                                   path_regex=rec["regex"], k=int(rec.get("k", 0)),
                                   ident=str(rec.get("id", f"r{i}"))))
        except (KeyError, ValueError, TypeError) as exc:
            raise RequirementError(f"requirement #{i}: {exc}") from None
    return out


# ---------------------------------------------------------------- topology

@dataclass(frozen=True, order=True)
class Link:
    a: str
    a_if: str
    b: str
    b_if: str
    network: str

    @property
    def routers(self) -> tuple[str, str]:
        return (self.a, self.b)

    def other(self, router: str) -> str:
        return self.b if router == self.a else self.a

    def iface(self, router: str) -> str:
        return self.a_if if router == self.a else self.b_if

    def __str__(self) -> str:
        return f"{self.a}-{self.b}"


@dataclass
class RoutingTopology:
    """Routers, physical links and per-protocol adjacency status."""

    routers: tuple[str, ...]
    links: tuple[Link, ...]
    asn: dict[str, int | None] = field(default_factory=dict)
    adjacency: dict[str, dict[frozenset, str]] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], protocol: str = "OSPF",
                   down: Iterable[tuple[str, str]] = ()) -> RoutingTopology:
        edges, down = list(edges), list(down)
        routers = sorted({x for e in edges + down for x in e})
        links, adj = [], {}
        for a, b in edges + down:
            a, b = sorted((a, b))
            links.append(Link(a, f"to-{b}", b, f"to-{a}", f"{a}-{b}"))
            adj[frozenset((a, b))] = ESTABLISHED if (a, b) in edges or (b, a) in edges else DOWN
        return cls(tuple(routers), tuple(sorted(links)), {r: None for r in routers}, {protocol: adj})

    def physical_neighbors(self, router: str) -> list[str]:
        return sorted({l.other(router) for l in self.links if router in l.routers})

    def links_between(self, a: str, b: str) -> list[Link]:
        return [l for l in self.links if set(l.routers) == {a, b}]

    def status(self, protocol: str, a: str, b: str) -> str | None:
        return self.adjacency.get(protocol, {}).get(frozenset((a, b)))

    def graph(self, protocol: str = "OSPF", tier: int = 1) -> dict[str, list[str]]:
        """Undirected routing-level graph.

        tier 1: established adjacencies; tier 2: plus configured-but-down;
        tier 3: every physical link between routers running the layer.
        For BGP, links inside one AS always count since iBGP rides the IGP.
        """
        adj: dict[str, set[str]] = {r: set() for r in self.routers}
        status = self.adjacency.get(protocol, {})
        pairs = {frozenset(l.routers) for l in self.links} | set(status)
        for pair in pairs:
            if len(pair) != 2:
                continue
            a, b = sorted(pair)
            physical = bool(self.links_between(a, b))
            if protocol == "BGP":
                if self.asn.get(a) is None or self.asn.get(b) is None or not physical:
                    continue
                st = ESTABLISHED if self.asn[a] == self.asn[b] else status.get(pair)
            else:
                st = status.get(pair)
            ok = (st == ESTABLISHED or (tier >= 2 and st == DOWN)
                  or (tier >= 3 and physical))
            if ok:
                adj[a].add(b)
                adj[b].add(a)
        return {r: sorted(ns) for r, ns in adj.items()}


def enumerate_paths(dfa: PathDfa, topo: RoutingTopology | Mapping[str, Sequence[str]],
                    src: str, dst: str, protocol: str = "OSPF") -> list[tuple[str, ...]]:
    """All simple src->dst paths accepted by ``dfa``, lexicographic by node names."""
    graph = topo.graph(protocol, 1) if isinstance(topo, RoutingTopology) else topo
    found = list(_dfs(dfa, graph, src, dst))
    if not found:
        if isinstance(topo, RoutingTopology):
            wider = list(_dfs(dfa, topo.graph(protocol, 2), src, dst))
            raise NoCompliantPath(src, dst, only_via_down=bool(wider))
        raise NoCompliantPath(src, dst, only_via_down=False)
    return found


def _dfs(dfa: PathDfa, graph: Mapping[str, Sequence[str]], src: str, dst: str) -> Iterator[tuple[str, ...]]:
    if src not in graph or dst not in graph:
        return
    path = [src]
    onpath = {src}
    q0 = dfa.step(dfa.start, src)
    if q0 == dfa.sink:
        return
    stack = [(src, q0, iter(graph[src]))]
    while stack:
        node, q, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            onpath.discard(path.pop())
            continue
        if nxt in onpath:
            continue
        r = dfa.step(q, nxt)
        if r == dfa.sink:
            continue
        if nxt == dst:
            if r in dfa.accepting:
                yield tuple(path) + (dst,)
            continue
        path.append(nxt)
        onpath.add(nxt)
        stack.append((nxt, r, iter(graph[nxt])))


def bfs_dist(graph: Mapping[str, Sequence[str]], target: str) -> dict[str, int]:
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for u in frontier:
            for v in graph.get(u, ()):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def paths_by_length(dfa: PathDfa, graph: Mapping[str, Sequence[str]], src: str, dst: str,
                    extend_ok=None, max_len: int | None = None) -> Iterator[tuple[str, ...]]:
    """Compliant simple paths, shortest first, lexicographic within a length.

    ``extend_ok(path)`` may veto a partial path (used for RPG consistency pruning).
    """
    dist = bfs_dist(graph, dst)
    if src not in dist:
        return
    limit = max_len if max_len is not None else len(graph)
    for length in range(dist[src] + 1, limit + 1):
        yield from _dfs_exact(dfa, graph, src, dst, length, dist, extend_ok)


def _dfs_exact(dfa, graph, src, dst, length, dist, extend_ok):
    path = [src]
    onpath = {src}

    def rec(node: str, q: int):
        if len(path) == length:
            if node == dst and q in dfa.accepting:
                yield tuple(path)
            return
        if node == dst:
            return
        for nxt in graph[node]:
            if nxt in onpath or nxt not in dist:
                continue
            if len(path) + 1 + dist[nxt] > length:
                continue
            r = dfa.step(q, nxt)
            if r == dfa.sink:
                continue
            path.append(nxt)
            if extend_ok is None or extend_ok(path):
                onpath.add(nxt)
                yield from rec(nxt, r)
                onpath.discard(nxt)
            path.pop()

    q0 = dfa.step(dfa.start, src)
    if q0 != dfa.sink and (extend_ok is None or extend_ok(path)):
        yield from rec(src, q0)
