"""Batch front door: auto-solve bundled examples with printed justified
traces, replay audits, ruleset group checks, transcript replay and the
service runner.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import interpreter, knowledge, service
from .calctree import SpecNode, audit
from .dialog import SessionManager
from .interpreter import CalcFinished, ProgramStuck
from .rewrite import check_group
from .specify import Formalisation
from .tactics import tactic_label
from .terms import pretty

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_UNKNOWN = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stepcalc",
        description="Step-wise calculation engine: solve bundled examples, "
                    "check rulesets, or serve the worksheet protocol.")
    p.add_argument("example", nargs="?",
                   help="example id from the content bundle, or a .exs file")
    p.add_argument("--content", default=None,
                   help="content bundle directory (default: ./content)")
    p.add_argument("--data", default=None,
                   help="data directory for user models and logs")
    p.add_argument("--audit", action="store_true",
                   help="replay every step's justification after solving")
    p.add_argument("--check-groups", action="store_true",
                   help="run the confluence/termination smoke test on all "
                        "bundled rulesets")
    p.add_argument("--listen", type=int, metavar="PORT",
                   help="serve HTTP on PORT and the frame protocol on PORT+1")
    p.add_argument("--transcript", metavar="FILE",
                   help="replay a JSON request transcript against the service")
    p.add_argument("--quiet", action="store_true", help="suppress the trace")
    return p


def _default_content() -> str:
    here = Path.cwd() / "content"
    if here.is_dir():
        return str(here)
    packaged = Path(__file__).resolve().parent.parent.parent / "content"
    return str(packaged)


def print_trace(node: SpecNode, out, depth: int = 0):
    pad = "  " * depth
    refs = node.formalisation.refs
    out.write(f"{pad}Problem {list(refs.problem or ())} [{node.status}]\n")
    for child in node.children:
        if isinstance(child, SpecNode):
            print_trace(child, out, depth + 1)
        else:
            origin = "u" if child.origin == "user" else " "
            out.write(f"{pad}  {origin} {pretty(child.formula):60} "
                      f"# {tactic_label(child.tactic)}\n")


def run_example(store, example_id: str, do_audit: bool, quiet: bool,
                out) -> int:
    ex = store.examples.get(example_id)
    if ex is None:
        out.write(f"unknown example {example_id!r}\n")
        return EXIT_UNKNOWN
    cs = interpreter.init_calc(store, Formalisation(list(ex.items), ex.refs))
    try:
        cs = interpreter.solve(cs, store)
    except (ProgramStuck, CalcFinished) as e:
        out.write(f"stuck: {e}\n")
        return EXIT_FAILED
    if not quiet:
        print_trace(cs.tree, out)
    if do_audit:
        report = audit(cs, store.rule)
        if not report.ok:
            out.write("audit failed:\n")
            for f in report.failures:
                out.write(f"  {f}\n")
            return EXIT_FAILED
        out.write(f"audit ok ({_count_steps(cs.tree)} steps replayed)\n")
    status = interpreter.check_postcondition(cs, store)
    out.write(f"postcondition: {status}\n")
    out.write(pretty(cs.tree.result) + "\n")
    return EXIT_OK


def _count_steps(node: SpecNode) -> int:
    n = 0
    for child in node.children:
        n += _count_steps(child) if isinstance(child, SpecNode) else 1
    return n


def run_check_groups(store, out) -> int:
    failed = False
    for name, rs in sorted(store.all_rulesets().items()):
        report = check_group(rs, sample_budget=120)
        status = "ok" if report.clean else "FAIL"
        out.write(f"{name:32} {status}  pairs={len(report.pairs)} "
                  f"non-joinable={len(report.non_joinable)} "
                  f"conditional-skipped={report.conditional_skipped} "
                  f"divergent={len(report.divergent)} "
                  f"sampled={report.sampled}\n")
        for pair in report.non_joinable:
            out.write(f"    {pair.rule_outer} / {pair.rule_inner} at "
                      f"{list(pair.position)}: {pretty(pair.left)}  vs  "
                      f"{pretty(pair.right)}\n")
        for t in report.divergent[:5]:
            out.write(f"    divergent: {pretty(t)}\n")
        failed = failed or not report.clean
    return EXIT_FAILED if failed else EXIT_OK


def run_transcript(store, data_dir, content_dir, path: str, out) -> int:
    rules = Path(content_dir) / "dialog.rules"
    manager = SessionManager(data_dir, str(rules) if rules.exists() else None)
    core = service.ServiceCore(store, manager)
    requests = json.loads(Path(path).read_text())
    failures = 0
    session_map: dict[str, str] = {}
    for entry in requests:
        req = dict(entry["request"]) if "request" in entry else dict(entry)
        payload = dict(req.get("payload") or {})
        alias = payload.get("session")
        if alias in session_map:
            payload["session"] = session_map[alias]
        req["payload"] = payload
        resp = core.handle(req)
        if req.get("method") == "session.new" and "session" in resp["payload"]:
            session_map[alias or f"s{len(session_map)}"] = \
                resp["payload"]["session"]
        expect = entry.get("expect")
        if expect is not None and not _subset(expect, resp["payload"]):
            failures += 1
            out.write(f"mismatch for {req.get('method')}:\n  want {expect}\n"
                      f"  got  {resp['payload']}\n")
        out.write(json.dumps(resp) + "\n")
    return EXIT_FAILED if failures else EXIT_OK


def _subset(want, have) -> bool:
    if isinstance(want, dict):
        return isinstance(have, dict) and all(
            k in have and _subset(v, have[k]) for k, v in want.items())
    if isinstance(want, list):
        return (isinstance(have, list) and len(want) == len(have)
                and all(_subset(w, h) for w, h in zip(want, have)))
    return want == have


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    content = args.content or _default_content()
    out = sys.stdout
    try:
        store = knowledge.load_bundle(content)
    except Exception as e:
        out.write(f"content bundle failed to load: {e}\n")
        return EXIT_FAILED

    if args.listen:
        config = service.ServeConfig(content, args.data, http_port=args.listen)
        front = Path("frontend/dist")
        if front.is_dir():
            config.static_root = str(front)
        service.serve(config)
        out.write(f"serving HTTP on :{args.listen} and frames on "
                  f":{args.listen + 1} (Ctrl-C stops)\n")
        try:
            import time
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            return EXIT_OK

    if args.check_groups:
        return run_check_groups(store, out)

    if args.transcript:
        return run_transcript(store, args.data, content, args.transcript, out)

    if args.example:
        example_id = args.example
        if Path(example_id).is_file():
            extra = knowledge.load_bundle_file(store, Path(example_id))
            code = EXIT_OK
            for ex_id in extra:
                code = max(code, run_example(store, ex_id, args.audit,
                                             args.quiet, out))
            return code
        return run_example(store, example_id, args.audit, args.quiet, out)

    build_parser().print_help()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
