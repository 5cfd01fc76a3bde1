"""Command line entry point: ``kframe <command> ...``.

Exit status: 0 ok, 1 invariant/claim/golden failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import generators, harness
from .generators import Claim, GeneratedCase
from .model import InstanceError, ParseError, read_instance, validate_order_respecting, write_instance
from .opt import OracleLimitError, opt_branch_bound, opt_bruteforce
from .policies import read_trace, run_policy, write_trace

OK, FAILED, USAGE = 0, 1, 2


def _emit(obj):
    print(json.dumps(obj, indent=1, default=str))


def sidecar_path(instance_path):
    p = Path(instance_path)
    return p.with_name(p.stem + ".case.json")


def read_case(instance_path, sidecar=None) -> GeneratedCase:
    inst = read_instance(instance_path)
    data = json.loads(Path(sidecar or sidecar_path(instance_path)).read_text())
    claims = []
    for c in data.get("claims", []):
        v = c["value"]
        claims.append(Claim(c["quantity"], c["relation"],
                            Fraction(v) if isinstance(v, str) else v, c["source"]))
    return GeneratedCase(inst, int(data["B"]), frozenset(data["opt_witness"]), claims)


def cmd_simulate(args):
    inst = read_instance(args.instance)
    opts = {"skip_invalid": True} if args.skip_invalid else {}
    sim = run_policy(inst, args.B, args.policy, **opts)
    if args.trace:
        write_trace(sim.trace, args.trace)
    violations = harness.check_invariants(sim, inst, args.B)
    _emit({"policy": sim.policy, "gain": sim.gain, "completed": sorted(sim.completed),
           "violations": [v._asdict() for v in violations]})
    return FAILED if violations else OK


def cmd_opt(args):
    inst = read_instance(args.instance)
    if args.mode == "brute":
        res = opt_bruteforce(inst, args.B)
    else:
        res = opt_branch_bound(inst, args.B, node_limit=args.node_limit)
    _emit(res.to_json())
    return OK if res.proven else FAILED


def cmd_generate(args):
    case = generators.generate(args.family, k=args.k, B=args.B, y=args.y, z=args.z,
                               seed=args.seed, alg=args.alg, frames=args.frames)
    write_instance(case.instance, args.out)
    sc = sidecar_path(args.out)
    sc.write_text(json.dumps(case.sidecar(), indent=1))
    written = [str(args.out), str(sc)]
    if case.golden is not None:
        gp = Path(args.out).with_name(Path(args.out).stem + ".golden.csv")
        write_trace(case.golden, gp)
        written.append(str(gp))
    print("wrote " + ", ".join(written), file=sys.stderr)
    return OK


def cmd_ratio(args):
    if args.certificate:
        case = read_case(args.instance, args.certificate)
        rep = harness.run_ratio(case.instance, args.B or case.B, args.policies, "certificate", case)
    else:
        inst = read_instance(args.instance)
        rep = harness.run_ratio(inst, args.B, args.policies, "oracle")
    _emit(rep.to_json())
    return OK if rep.ok else FAILED


def cmd_validate(args):
    inst = read_instance(args.instance, validate=False)
    try:
        violations = validate_order_respecting(inst)
    except InstanceError as e:
        _emit({"structural": e.problems, "order_violations": []})
        return FAILED
    _emit({"structural": [], "order_violations": [v._asdict() for v in violations]})
    return FAILED if violations else OK


def cmd_sweep(args):
    config = json.loads(Path(args.config).read_text())
    rows = harness.sweep(config, workers=args.workers)
    if args.out:
        harness.write_sweep(rows, args.out)
    failed = [r for r in rows if not r["ok"]]
    _emit({"rows": len(rows), "failed": len(failed),
           "failures": [{k: r[k] for k in ("name", "checks")} for r in failed[:20]]})
    return FAILED if failed else OK


def cmd_compare(args):
    diffs = harness.compare_trace(read_trace(args.trace), read_trace(args.golden))
    _emit([d._asdict() for d in diffs])
    return FAILED if diffs else OK


def build_parser():
    ap = argparse.ArgumentParser(prog="kframe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one policy on an instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--policy", choices=["mf", "sp", "greedy"], default="mf")
    p.add_argument("--skip-invalid", action="store_true", help="SP: drop packets of broken frames")
    p.add_argument("--trace", help="write the decision trace as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("opt", help="exact offline optimum")
    p.add_argument("--instance", required=True)
    p.add_argument("--B", type=int, required=True)
    p.add_argument("--mode", choices=["bb", "brute"], default="bb")
    p.add_argument("--node-limit", type=int)
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("generate", help="write an instance file plus a .case.json sidecar")
    p.add_argument("--family", choices=generators.FAMILIES, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--y", type=int)
    p.add_argument("--z", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, help="random family: number of frames")
    p.add_argument("--alg", choices=["mf", "sp", "greedy"], default="mf")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ratio", help="policy gains vs OPT, invariants and claims")
    p.add_argument("--instance", required=True)
    p.add_argument("--B", type=int)
    p.add_argument("--policies", type=lambda s: s.split(","), default=["mf", "sp", "greedy"])
    p.add_argument("--certificate", help="sidecar JSON; use its witness instead of solving OPT")
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("validate", help="structural and order-respecting checks")
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="run a parameter grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="diff a trace CSV against a golden trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--golden", required=True)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "ratio" and not args.certificate and args.B is None:
        ap.error("ratio without --certificate needs --B")
    try:
        return args.func(args)
    except (OSError, ParseError, OracleLimitError, ValueError, KeyError) as e:
        print(f"kframe: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
