"""``routefix`` command line.

Exit status: 0 success (verified or repaired), 1 requirements violated or
repair failed/conflicted, 2 usage or input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, Corpus, parse_corpus
from .harness import (CATEGORIES, ErrorSpec, InvalidK, TargetNotApplicable, bench, inject, parse_errors,
                      parse_seeds, scenario)
from .pipeline import Options, run
from .repair import patch_table
from .requirements import Requirement, RequirementError, UnknownRouterSymbol, load_requirements
from .sim import NonConvergence, simulate, verify
from .trace_diagnoser import NotAnError, Timeout, UnsupportedConstraint, diagnose_trace

log = logging.getLogger("routefix")


class UsageError(Exception):
    pass


def _dump(obj, target: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if target in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(target).write_text(text)


def _corpus_dir(arg: str) -> Path:
    p = Path(arg)
    if p.is_dir():
        return p
    from .scenarios import names, path
    if arg in names():
        return path(arg)
    raise UsageError(f"{arg}: not a directory or bundled scenario")


def _load(args) -> tuple[Corpus, list[Requirement] | None]:
    if args.configs and args.configs_opt:
        raise UsageError("give the config directory either positionally or with --configs, not both")
    if not (args.configs or args.configs_opt):
        raise UsageError("missing config directory")
    d = _corpus_dir(args.configs or args.configs_opt)
    corpus = parse_corpus(d)
    reqs = None
    rpath = getattr(args, "requirements", None) or getattr(args, "reqs_opt", None)
    if rpath is None and (d / "requirements.json").exists():
        rpath = d / "requirements.json"
    if rpath is not None:
        reqs = load_requirements(rpath)
        known = set(corpus)
        for r in reqs:
            for x in (r.src, r.dst):
                if x not in known:
                    raise RequirementError(f"requirement {r.ident}: unknown router {x}")
    return corpus, reqs


def _need_reqs(reqs):
    if reqs is None:
        raise UsageError("no requirements file given and none next to the configs")
    return reqs


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    corpus, _ = _load(args)
    net = simulate(corpus, shuffle_seed=args.seed, max_iters=args.max_iters)
    if args.json is not None:
        _dump({"sessions": net.sessions_json(), "rib": net.rib(), "fib": net.fib()}, args.json)
        return 0
    for s in net.sessions_json():
        state = "up" if s["established"] else f"down ({s['reason']})"
        print(f"{'iBGP' if s['ibgp'] else 'eBGP'} {s['a']}-{s['b']}: {state}")
    for r, entries in net.fib().items():
        print(f"{r}:")
        for p, hop in entries.items():
            print(f"  {p:<20} {hop}")
    return 0


def cmd_verify(args) -> int:
    corpus, reqs = _load(args)
    reqs = _need_reqs(reqs)
    net = simulate(corpus, shuffle_seed=args.seed, max_iters=args.max_iters)
    verdicts = verify(reqs, net)
    ok = all(v.satisfied for v in verdicts)
    if args.json is not None:
        _dump({"satisfied": ok, "verdicts": [v.to_json() for v in verdicts]}, args.json)
    else:
        for v in verdicts:
            path = " ".join(v.path) if v.path else "-"
            extra = f" under failure of {', '.join(v.failed_links)}" if v.failed_links else ""
            print(f"{'PASS' if v.satisfied else 'FAIL'} {v.requirement.ident or v.requirement.label()}: "
                  f"{v.reason}{extra} [{path}]")
    return 0 if ok else 1


def cmd_run(args) -> int:
    corpus, reqs = _load(args)
    reqs = _need_reqs(reqs)
    opts = Options(emit_rpg=Path(args.emit_rpg) if args.emit_rpg else None, jobs=args.jobs,
                   max_iters=args.max_iters, seed=args.seed, prune=not args.no_prune)
    rep = run(corpus, reqs, opts)
    if args.out and rep.patched is not None and rep.ok:
        rep.patched.write(args.out)
    if args.json is not None:
        _dump(rep.to_json(timings=args.timings), args.json)
    else:
        print(f"status: {rep.status}")
        if rep.conflict:
            print(f"conflict: {rep.conflict['message']}")
        if rep.error:
            print(f"error: {rep.error}")
        for g in rep.groups:
            print(f"[{g.stage}] {g.label}")
            for d in g.diagnoses:
                note = f" ({d.note})" if d.note else ""
                print(f"  {d.condition}  -- {d.category}: {d.explanation}{note}")
        if rep.patches:
            print(patch_table(rep.patches))
        print(f"modified lines: {len(rep.patches)} ({rep.modified_line_ratio:.2%})")
        for v in rep.post:
            if not v.satisfied:
                print(f"still violated: {v.requirement.ident or v.requirement.label()} ({v.reason})")
        if args.timings:
            for k, t in sorted(rep.timings.items()):
                print(f"{k}: {t:.3f}s")
    return 0 if rep.ok else 1


def cmd_explain(args) -> int:
    corpus, reqs = _load(args)
    reqs = _need_reqs(reqs)
    if args.req:
        reqs = [r for r in reqs if r.ident == args.req]
        if not reqs:
            raise UsageError(f"no requirement with id {args.req!r}")
    net = simulate(corpus, shuffle_seed=args.seed, max_iters=args.max_iters)
    out, violated = [], 0
    for r in reqs:
        entry = {"requirement": r.to_json()}
        try:
            diag = diagnose_trace(net, r, budget=args.budget)
            violated += 1
            entry.update(diag.to_json())
        except NotAnError:
            entry["status"] = "satisfied"
        except UnsupportedConstraint as exc:
            violated += 1
            entry["status"] = f"unsupported: {exc}"
        except Timeout as exc:
            violated += 1
            entry["status"] = str(exc)
        out.append(entry)
    if args.json is not None:
        _dump({"explanations": out}, args.json)
    else:
        for e in out:
            rid = e["requirement"].get("id") or e["requirement"]["regex"]
            if "trace" not in e:
                print(f"{rid}: {e['status']}")
                continue
            print(f"{rid}: violated; error trace")
            for s in e["trace"]["statements"]:
                print(f"  π{s['index']} [{s['kind']}] {s['label']}")
            print(f"  assertion: {e['trace']['assertion']}")
            for m in e["mucs"]:
                print(f"  MUC {{{', '.join(f'π{i}' for i in m['statements'])}}}")
                for x in m["explanations"]:
                    print(f"    after π{x['after']}: {x['explanation']}")
    return 1 if violated else 0


def cmd_bench(args) -> int:
    sc = scenario(args.topo)
    report = bench(sc, parse_errors(args.errors), parse_seeds(args.seeds),
                   Options(max_iters=args.max_iters, jobs=args.jobs), timings=args.timings)
    if args.json is not None:
        _dump(report, args.json)
    else:
        s = report["summary"]
        print(f"{report['scenario']}: {s['repaired']}/{s['applicable']} repaired "
              f"({s['runs']} runs, {s['regressions']} regressions, "
              f"mean modified-line ratio {s['mean_modified_line_ratio']:.2%})")
    s = report["summary"]
    return 0 if s["repaired"] == s["applicable"] else 1


def cmd_inject(args) -> int:
    corpus, reqs = _load(args)
    spec = ErrorSpec(args.category, args.target, args.seed or 0)
    inj = inject(corpus, spec, reqs if args.verify else None)
    if args.out:
        inj.corpus.write(args.out)
    if args.json is not None:
        _dump(inj.to_json(), args.json)
    else:
        print(inj.description)
        print(patch_table(inj.edits))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="routefix", description="Diagnose and repair router configuration errors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, reqs: bool = True):
        sp.add_argument("configs", nargs="?", help="directory of .cfg files, or a bundled scenario name")
        sp.add_argument("--configs", dest="configs_opt", metavar="DIR", help="same as the positional CONFIGS")
        if reqs:
            sp.add_argument("requirements", nargs="?", help="requirements JSON (default: CONFIGS/requirements.json)")
            sp.add_argument("--reqs", dest="reqs_opt", metavar="FILE", help="same as the positional REQUIREMENTS")
        sp.add_argument("--json", nargs="?", const="-", metavar="PATH",
                        help="write the JSON report to PATH (stdout when no PATH)")
        sp.add_argument("--seed", type=int, help="propagation-order seed (default: deterministic order)")
        sp.add_argument("--max-iters", type=int, help="route-change budget per prefix before non-convergence")

    sp = sub.add_parser("simulate", help="compute sessions, RIBs and FIBs")
    common(sp, reqs=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="check requirements on the simulated data plane")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("run", help="verify, diagnose, repair and re-verify")
    common(sp)
    sp.add_argument("--emit-rpg", metavar="DIR", help="write each RPG as DOT and JSON into DIR")
    sp.add_argument("--jobs", type=int, default=1, help="parallel RPG groups (default 1)")
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings")
    sp.add_argument("--out", metavar="DIR", help="write the repaired configs into DIR")
    sp.add_argument("--no-prune", action="store_true", help="keep diagnoses made redundant by others")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("explain", help="data-flow diagnosis: error trace, MUCs and explanations")
    common(sp)
    sp.add_argument("--req", help="only this requirement id")
    sp.add_argument("--budget", type=float, default=30.0, help="seconds per MUC enumeration")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("bench", help="inject errors into a generated network and score the repairs")
    sp.add_argument("--topo", default="fattree:4", help="fattree:K, fattree-pinned:K, wan or a bundled scenario")
    sp.add_argument("--errors", required=True, help="category[:count][,category[:count]...]; categories: "
                    + ", ".join(CATEGORIES))
    sp.add_argument("--seeds", default="0", help="e.g. 0..19 or 1,4,9")
    sp.add_argument("--json", nargs="?", const="-", metavar="PATH")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timings", action="store_true")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("inject", help="apply one seeded error to a corpus")
    common(sp)
    sp.add_argument("--category", required=True, choices=CATEGORIES)
    sp.add_argument("--target", help="router or router:peer")
    sp.add_argument("--verify", action="store_true", help="retry until a requirement is violated")
    sp.add_argument("--out", metavar="DIR", help="write the broken configs into DIR")
    sp.set_defaults(func=cmd_inject)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("ROUTEFIX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, RequirementError, UnknownRouterSymbol, InvalidK, TargetNotApplicable,
            NonConvergence, FileNotFoundError, ValueError) as exc:
        print(f"routefix: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
