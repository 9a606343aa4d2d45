"""End-to-end verify, diagnose, repair and re-verify."""
from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import (ConfigError, ConflictingPatches, Corpus, InvalidAnchor, Patch, diff_corpus, parse_corpus,
                     patched_corpus)
from .repair import (CostSolverDiverged, CostUnsolvable, Diagnosis, PatchConflict, diagnose, fallback_static_routes,
                     generate_patches, merge_patches, modified_line_ratio, repair_ospf_costs)
from .requirements import Requirement, load_requirements
from .rpg import (InsufficientDisjointPaths, RouteProgGraph, UnsatisfiableConflict, build_ft_rpg, build_rpg,
                  dump_rpg, requirement_layer)
from .sim import Protocol, ScenarioCache, SimResult, Verdict, simulate, verify
from .symsim import PREFER, DeviationSet, RpgInfeasible, derive_underlay_reqs, run_symbolic

log = logging.getLogger(__name__)


@dataclass
class Options:
    emit_rpg: Path | None = None
    jobs: int = 1
    max_iters: int | None = None
    seed: int | None = None
    prune: bool = True
    rounds: int = 3


@dataclass
class Group:
    """One RPG and everything derived from it."""
    stage: str
    rpg: RouteProgGraph
    deviations: DeviationSet
    diagnoses: list[Diagnosis]
    routes: dict = field(default_factory=dict)
    round: int = 1

    @property
    def label(self) -> str:
        base = f"{self.rpg.prefix} {self.rpg.layer} {self.rpg.kind}"
        return base if self.round == 1 else f"{base} round {self.round}"

    def to_json(self) -> dict:
        return {"stage": self.stage, "label": self.label, "round": self.round, "rpg": self.rpg.to_json(),
                "deviations": [c.to_json() for c in self.deviations],
                "routes": self.routes}


@dataclass
class RunReport:
    status: str = "verified"  # verified | repaired | failed | conflict
    pre: list[Verdict] = field(default_factory=list)
    post: list[Verdict] = field(default_factory=list)
    groups: list[Group] = field(default_factory=list)
    underlay_requirements: list[Requirement] = field(default_factory=list)
    patches: list[Patch] = field(default_factory=list)
    fallback: list[Patch] = field(default_factory=list)
    cost_constraints: list[str] = field(default_factory=list)
    conflict: dict | None = None
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)
    corpus: Corpus | None = None
    patched: Corpus | None = None
    pruned: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status in ("verified", "repaired")

    @property
    def diagnoses(self) -> list[Diagnosis]:
        return [d for g in self.groups for d in g.diagnoses]

    @property
    def modified_line_ratio(self) -> float:
        return modified_line_ratio(self.patches, self.corpus) if self.corpus is not None else 0.0

    def patch_groups(self) -> list[dict]:
        out = []
        for g in self.groups:
            for d in g.diagnoses:
                if d.patches:
                    out.append({"rpg": g.label, "condition": d.condition.ident, "type": d.category,
                                "lines": [p.to_json() for p in d.patches]})
        if self.fallback:
            out.append({"rpg": "static-fallback", "condition": None, "type": "ospf_cost",
                        "lines": [p.to_json() for p in self.fallback]})
        return out

    def to_json(self, timings: bool = False) -> dict:
        d = {
            "status": self.status,
            "pre": [v.to_json() for v in self.pre],
            "post": [v.to_json() for v in self.post],
            "groups": [g.to_json() for g in self.groups],
            "diagnoses": [dict(x.to_json(), rpg=g.label) for g in self.groups for x in g.diagnoses],
            "underlay_requirements": [r.to_json() for r in self.underlay_requirements],
            "patches": self.patch_groups(),
            "patch_lines": [p.to_json() for p in self.patches],
            "metrics": {
                "modified_lines": len(self.patches),
                "total_lines": self.corpus.total_lines() if self.corpus is not None else 0,
                "modified_line_ratio": round(self.modified_line_ratio, 6),
            },
        }
        if self.cost_constraints:
            d["cost_constraints"] = self.cost_constraints
        if self.pruned:
            d["pruned"] = self.pruned
        if self.conflict is not None:
            d["conflict"] = self.conflict
        if self.error is not None:
            d["error"] = self.error
        if timings:
            d["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return d


def _groups(reqs: Sequence[Requirement]) -> list[list[Requirement]]:
    by: dict[tuple, list[Requirement]] = {}
    for r in sorted(reqs, key=lambda r: r.sort_key()):
        by.setdefault((r.prefix.network_address.packed, r.prefix.prefixlen, r.dst), []).append(r)
    return [by[k] for k in sorted(by)]


def _violated_groups(reqs, verdicts: dict) -> list[list[Requirement]]:
    return [g for g in _groups(reqs) if any(not verdicts[r].satisfied for r in g)]


def _overlay_one(group: list[Requirement], net: SimResult, verdicts: list[Verdict], layer: Protocol,
                 kind: str) -> tuple[Group, int]:
    k = max(r.k for r in group)
    if k > 0:
        rpg = build_ft_rpg(group, net, layer=layer, kind=kind)
    else:
        rpg = build_rpg(group, net, verdicts, layer=layer, kind=kind)
    sym = run_symbolic(net, rpg)
    return Group("", rpg, sym.deviations, [], sym.routes_json()), sym


def _conflict_report(err: Exception) -> dict:
    if isinstance(err, UnsatisfiableConflict):
        return {"kind": "UnsatisfiableConflict", "requirements": [r.to_json() for r in err.requirements],
                "detail": err.detail, "message": str(err)}
    if isinstance(err, InsufficientDisjointPaths):
        return {"kind": "InsufficientDisjointPaths", "requirements": [err.requirement.to_json()],
                "found": err.found, "needed": err.needed, "message": str(err)}
    return {"kind": type(err).__name__, "message": str(err)}


def run(corpus: Corpus | str | Path, requirements: Sequence[Requirement] | str | Path,
        options: Options | None = None) -> RunReport:
    opts = options or Options()
    t0 = time.perf_counter()
    if not isinstance(corpus, Corpus):
        corpus = parse_corpus(corpus)
    if not isinstance(requirements, (list, tuple)):
        requirements = load_requirements(requirements)
    reqs = list(requirements)
    net = simulate(corpus, shuffle_seed=opts.seed, max_iters=opts.max_iters)
    cache = ScenarioCache(net, opts.max_iters)
    pre = verify(reqs, net, cache)
    first_sim = time.perf_counter() - t0
    if all(v.satisfied for v in pre):
        rep = RunReport(pre=pre, post=list(pre), corpus=corpus, patched=corpus)
        rep.timings["first_simulation"] = first_sim
        return rep
    rounds = [_repair_once(corpus, reqs, net, cache, pre, opts, 1)]
    # patches can shift best-route tie-breaks for untouched prefixes; repair those on top
    while rounds[-1].status == "failed" and rounds[-1].error is None and len(rounds) < opts.rounds:
        cur = rounds[-1].patched
        net2 = simulate(cur, shuffle_seed=opts.seed, max_iters=opts.max_iters)
        cache2 = ScenarioCache(net2, opts.max_iters)
        nxt = _repair_once(cur, reqs, net2, cache2, verify(reqs, net2, cache2), opts, len(rounds) + 1)
        if nxt.status == "conflict" or nxt.patched is None:
            break
        for g in nxt.groups:
            g.round = len(rounds) + 1
        rounds.append(nxt)
    rep = rounds[0] if len(rounds) == 1 else _combine(corpus, reqs, rounds, opts)
    rep.pre = pre
    rep.timings["first_simulation"] = first_sim
    return rep


def _combine(corpus: Corpus, reqs: list[Requirement], rounds: list[RunReport], opts: Options) -> RunReport:
    last = rounds[-1]
    rep = RunReport(corpus=corpus, patched=last.patched, status=last.status, error=last.error)
    seen: dict[tuple, Requirement] = {}
    for r in rounds:
        rep.groups += r.groups
        rep.fallback += r.fallback
        rep.cost_constraints += r.cost_constraints
        rep.pruned += r.pruned
        for u in r.underlay_requirements:
            seen.setdefault((u.src, u.dst, u.prefix, u.k), u)
        for k, v in r.timings.items():
            rep.timings[k] = rep.timings.get(k, 0.0) + v
    rep.underlay_requirements = list(seen.values())
    rep.patches = diff_corpus(corpus, last.patched)
    rep.post = verify(reqs + rep.underlay_requirements, simulate(last.patched, max_iters=opts.max_iters))
    rep.status = "repaired" if all(v.satisfied for v in rep.post) else "failed"
    return rep


def _repair_once(corpus: Corpus, reqs: list[Requirement], net: SimResult, cache: ScenarioCache,
                 pre: list[Verdict], opts: Options, round_no: int) -> RunReport:
    rep = RunReport(pre=pre, corpus=corpus)
    t1 = time.perf_counter()
    verdict_of = {v.requirement: v for v in rep.pre}
    asn = net.topology.asn
    overlay = [r for r in reqs if requirement_layer(r, asn) is Protocol.BGP]
    igp = [r for r in reqs if requirement_layer(r, asn) is not Protocol.BGP]

    # overlay (BGP)
    work = _violated_groups(overlay, verdict_of)

    def one(group):
        return _overlay_one(group, net, [verdict_of[r] for r in group], Protocol.BGP, "mixed")

    try:
        if opts.jobs > 1 and len(work) > 1:
            with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
                results = list(pool.map(one, work))
        else:
            results = [one(g) for g in work]
    except (UnsatisfiableConflict, InsufficientDisjointPaths) as err:
        rep.status = "conflict"
        rep.conflict = _conflict_report(err)
        return _finish(rep, t1)
    except RpgInfeasible as err:
        rep.status = "failed"
        rep.error = f"RpgInfeasible: {err}"
        return _finish(rep, t1)
    underlay: dict[tuple, Requirement] = {}
    patch_sets: list[list[Patch]] = []
    for group_reqs, (g, sym) in zip(work, results):
        g.stage = "overlay"
        g.diagnoses = diagnose(g.deviations, corpus, net)
        patch_sets.append(generate_patches(g.diagnoses, corpus, net))
        rep.groups.append(g)
        k = max(r.k for r in group_reqs)
        for u in derive_underlay_reqs(sym.expectations, corpus, k):
            key = (u.src, u.dst, u.prefix)
            if key not in underlay or underlay[key].k < u.k:
                underlay[key] = u
    rep.underlay_requirements = [underlay[k] for k in sorted(underlay, key=lambda t: (t[0], t[1], str(t[2])))]

    # underlay (OSPF): way-point first, then reachability
    derived = [r for r in rep.underlay_requirements if r not in verdict_of]
    derived_verdicts = verify(derived, net, cache)
    for v in derived_verdicts:
        verdict_of[v.requirement] = v
    igp_all = igp + derived
    wp = [r for r in igp_all if r.kind != "reachability"]
    reach = [r for r in igp_all if r.kind == "reachability"]
    try:
        if any(not verdict_of[r].satisfied for r in wp):
            patch_sets.append(_underlay_waypoint(rep, wp, net, verdict_of))
        for group in _violated_groups(reach, verdict_of):
            g, _ = _overlay_one(group, net, [verdict_of[r] for r in group], Protocol.OSPF, "reachability")
            g.stage = "underlay-reachability"
            g.diagnoses = diagnose(g.deviations, corpus, net)
            patch_sets.append(generate_patches(g.diagnoses, corpus, net))
            rep.groups.append(g)
    except (UnsatisfiableConflict, InsufficientDisjointPaths) as err:
        rep.status = "conflict"
        rep.conflict = _conflict_report(err)
        return _finish(rep, t1)
    except RpgInfeasible as err:
        rep.status = "failed"
        rep.error = f"RpgInfeasible: {err}"
        return _finish(rep, t1)
    if opts.emit_rpg is not None:
        for i, g in enumerate(rep.groups, start=1):
            dump_rpg(g.rpg, opts.emit_rpg, f"rpg{i:02d}_{g.stage}_{str(g.rpg.prefix).replace('/', '_')}")
    rep.timings["solver"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    try:
        rep.patches = merge_patches(patch_sets)
        rep.patched = patched_corpus(corpus, rep.patches)
    except (PatchConflict, ConflictingPatches, InvalidAnchor) as err:
        rep.status = "failed"
        rep.error = f"{type(err).__name__}: {err}"
        return _finish(rep, t1)
    all_reqs = reqs + derived
    rep.post = verify(all_reqs, simulate(rep.patched, max_iters=opts.max_iters))
    if all(v.satisfied for v in rep.post) and opts.prune:
        _prune(rep, all_reqs, opts)
    rep.status = "repaired" if all(v.satisfied for v in rep.post) else "failed"
    rep.timings["second_simulation"] = time.perf_counter() - t2
    return _finish(rep, t1)


def _finish(rep: RunReport, t1: float) -> RunReport:
    rep.timings.setdefault("solver", time.perf_counter() - t1)
    return rep


def _underlay_waypoint(rep: RunReport, wp: list[Requirement], net: SimResult, verdict_of) -> list[Patch]:
    corpus = net.corpus
    patches: list[Patch] = []
    targets = []
    prefer_diags: list[Diagnosis] = []
    try:
        for group in _groups(wp):
            rpg = build_rpg(group, net, [verdict_of[r] for r in group], layer=Protocol.OSPF, kind="waypoint")
            sym = run_symbolic(net, rpg)
            g = Group("underlay-waypoint", rpg, sym.deviations, diagnose(sym.deviations, corpus, net),
                      sym.routes_json())
            structural = [d for d in g.diagnoses if d.condition.kind != PREFER]
            patches += generate_patches(structural, corpus, net)
            prefer_diags += [d for d in g.diagnoses if d.condition.kind == PREFER]
            rep.groups.append(g)
            targets += [(p.requirement, p.packet_path) for p in rpg.paths]
        if prefer_diags:
            cost_patches, _, constraints = repair_ospf_costs(targets, net)
            rep.cost_constraints = [str(c) for c in constraints]
            prefer_diags[0].patches.extend(cost_patches)
            for d in prefer_diags[1:]:
                d.note = f"covered by {prefer_diags[0].condition.ident}"
            patches += cost_patches
        return patches
    except (UnsatisfiableConflict, CostUnsolvable, CostSolverDiverged) as err:
        log.info("way-point underlay falls back to static routes: %s", err)
        pinned = []
        for r in sorted(wp, key=lambda r: r.sort_key()):
            rpg = build_rpg([r], net, [verdict_of[r]], layer=Protocol.OSPF, kind="waypoint")
            pinned.append((r, rpg.paths[0].packet_path))
        rep.fallback = fallback_static_routes(pinned, net)
        return patches + rep.fallback


def _prune(rep: RunReport, all_reqs: list[Requirement], opts: Options) -> None:
    """Drop diagnoses whose patches turn out unnecessary once the others are applied."""
    diags = [d for d in rep.diagnoses if d.patches]
    if len(diags) < 2:
        return
    for d in reversed(diags):
        shared = {p for o in rep.diagnoses if o is not d for p in o.patches}
        mine = set(d.patches) - shared
        if not mine:
            continue
        trial = [p for p in rep.patches if p not in mine]
        try:
            corpus = patched_corpus(rep.corpus, trial)
        except ConfigError:
            continue
        post = verify(all_reqs, simulate(corpus, max_iters=opts.max_iters))
        if all(v.satisfied for v in post):
            rep.pruned.append(str(d.condition))
            d.note = "redundant once the other patches are applied"
            d.patches = [p for p in d.patches if p in shared]
            rep.patches = trial
            rep.patched = corpus
            rep.post = post
