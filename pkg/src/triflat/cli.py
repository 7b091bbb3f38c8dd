"""Command-line front end.

Commands: ``check`` (decision procedure with witnesses), ``flat-output``,
``transform`` (six-stage transcript, optionally saved for re-verification)
and ``verify`` (numeric re-verification of a saved transformation, or
prolongation-linearizability evidence).  Reports are JSON on stdout with
deterministic key order; the sampler configuration is embedded in every
report.  Exit codes: 0 verdict true, 1 verdict false, 2 usage/parse error,
3 heuristic failure (hints needed).
"""

from __future__ import annotations

import argparse
import json
import sys

from .checks import check_static_feedback_linearizable
from .direction_search import (
    candidate_via_h,
    candidates_via_quadratic,
    compute_bracket_chain,
)
from .errors import (
    EliminationError,
    ExprSyntaxError,
    IntegrationError,
    NotApplicable,
    PipelineError,
    SamplerExhausted,
    TriflatError,
)
from .expr import ZERO, to_str
from .flatout import admissible_phi1, flat_output_for_report
from .parser import parse_expr
from .sysfile import SysFileError, load_sysfile
from .systems import prolong
from .transform import (
    CoordinateChange,
    prolonged_linearizability,
    transform_to_triangular,
    verify_transformation,
)
from .triform import equal_length_variant_check, triangular_form_check

EXIT_TRUE, EXIT_FALSE, EXIT_USAGE, EXIT_HEURISTIC = 0, 1, 2, 3


def _sampler_dict(sp):
    return {
        "seed": sp.seed,
        "samples": sp.samples,
        "tol": sp.tol,
        "domains": {k: list(v) for k, v in sorted(sp.domains.items())},
        "default_domain": list(sp.default_domain),
    }


def _field_dict(f):
    return {x: to_str(c) for x, c in zip(f.frame, f.components) if c != ZERO}


def _system_dict(sysm):
    return {
        "name": sysm.name,
        "states": list(sysm.frame),
        "inputs": list(sysm.input_syms),
        "params": list(sysm.params),
        "drift": _field_dict(sysm.drift),
        "b1": _field_dict(sysm.b1),
        "b2": _field_dict(sysm.b2),
    }


def _distribution_dict(D, sp):
    from .diffgeo import generic_rank

    return {
        "rank": generic_rank(D, sp),
        "fields": [[to_str(c) for c in f.components] for f in D.fields],
    }


def _report_dict(rep, sp):
    out = {
        "candidate": {
            "source": rep.candidate.source if rep.candidate else None,
            "alpha1": to_str(rep.candidate.alpha1) if rep.candidate else None,
            "alpha2": to_str(rep.candidate.alpha2) if rep.candidate else None,
        },
        "verdict": rep.verdict,
        "items": {k: rep.items.get(k) for k in "abcde"},
        "case": rep.case,
        "depth_n3": rep.depth,
        "n2": rep.n2,
        "chain_lengths": list(rep.chain_lengths) if rep.chain_lengths else None,
        "s": rep.s,
        "failures": list(rep.failures),
    }
    for key, dist in (
        ("delta0", rep.delta0),
        ("delta1", rep.delta1),
        ("closure", rep.closure),
    ):
        if dist is not None:
            out[key] = _distribution_dict(dist, sp)
    if rep.g_chain:
        out["extension_ranks"] = [
            _distribution_dict(D, sp)["rank"] for D in rep.g_chain
        ]
    return out


def _load(args):
    definition = load_sysfile(args.file)
    sp = definition.sampler(seed=args.seed, samples=args.samples, tol=args.tol)
    for entry in args.domain or ():
        try:
            name, rng = entry.split("=", 1)
            lo, hi = (float(p) for p in rng.split(":", 1))
        except ValueError:
            raise SysFileError(f"bad --domain entry {entry!r}") from None
        sp = sp.with_domains({name.strip(): (lo, hi)})
    sysm = definition.system()
    prolongations = []
    for entry in args.prolong or ():
        for part in entry.split(","):
            name, _, count = part.partition("=")
            name = name.strip()
            if name not in sysm.input_syms:
                raise SysFileError(f"unknown input {name!r} in --prolong")
            which = sysm.input_syms.index(name)
            sysm = prolong(sysm, which, int(count))
            prolongations.append({"input": name, "order": int(count)})
    return definition, sysm, sp, prolongations


def _analyze(sysm, sp, phi1=None, hints=()):
    """Chain, candidates, and one report per candidate; best report first."""
    chain = compute_bracket_chain(sysm, sp)
    if chain.depth < 1:
        from .triform import TriangularReport

        rep = TriangularReport(sysm, chain, None)
        rep.failures.append("the input span itself is non-involutive")
        return chain, "inapplicable", [], [rep]
    candidates = []
    h_status = None
    try:
        candidates.append(candidate_via_h(sysm, chain, sp))
        h_status = "ok"
    except NotApplicable as e:
        h_status = str(e)
    if not candidates:
        candidates = candidates_via_quadratic(sysm, chain, sp)
    reports = [triangular_form_check(sysm, c, sp, chain) for c in candidates]
    reports.sort(key=lambda r: (not r.verdict))
    return chain, h_status, candidates, reports


def cmd_check(args):
    definition, sysm, sp, prolonged = _load(args)
    out = {
        "command": "check",
        "file": args.file,
        "system": _system_dict(sysm),
        "sampler": _sampler_dict(sp),
        "prolonged": prolonged,
    }
    try:
        chain, h_status, candidates, reports = _analyze(sysm, sp)
    except NotApplicable as e:
        if "linearizable" in str(e):
            out["verdict"] = "static-feedback-linearizable"
            out["detail"] = str(e)
            lin = check_static_feedback_linearizable(sysm, sp)
            out["linearizable"] = lin.verdict
            print(json.dumps(out, indent=2))
            return EXIT_TRUE if lin.verdict else EXIT_FALSE
        out["verdict"] = False
        out["detail"] = str(e)
        print(json.dumps(out, indent=2))
        return EXIT_FALSE
    out["chain"] = {
        "depth_n3": chain.depth,
        "ranks": chain.ranks,
        "rank_ok": chain.rank_ok,
        "cauchy_ok": chain.cauchy_ok,
    }
    out["h_method"] = h_status
    out["candidates"] = [
        {"source": c.source, "alpha1": to_str(c.alpha1), "alpha2": to_str(c.alpha2)}
        for c in candidates
    ]
    out["reports"] = [_report_dict(r, sp) for r in reports]
    out["verdict"] = any(r.verdict for r in reports)
    if args.variant:
        variant = equal_length_variant_check(sysm, sp)
        out["equal_length_variant"] = {
            "verdict": variant.verdict,
            "failing": variant.failing,
        }
    print(json.dumps(out, indent=2))
    return EXIT_TRUE if out["verdict"] else EXIT_FALSE


def _passing_report(args, sysm, sp):
    _chain, _h, _cands, reports = _analyze(sysm, sp)
    passing = [r for r in reports if r.verdict]
    if not passing:
        raise NotApplicable("no direction candidate passes the decision procedure")
    return passing[0]


def cmd_flat_output(args):
    definition, sysm, sp, prolonged = _load(args)
    out = {
        "command": "flat-output",
        "file": args.file,
        "system": _system_dict(sysm),
        "sampler": _sampler_dict(sp),
        "prolonged": prolonged,
    }
    phi1 = parse_expr(args.phi1) if args.phi1 else definition.phi1
    hints = [parse_expr(h) for h in (args.hint or ())] + list(definition.hints)
    rep = _passing_report(args, sysm, sp)
    out["case"] = rep.case
    out["dims"] = rep.dims
    try:
        flat = flat_output_for_report(rep, sp, phi1=phi1, hints=hints)
    except NotApplicable as e:
        out["error"] = str(e)
        out["admissible_phi1"] = admissible_phi1(rep, sp)
        print(json.dumps(out, indent=2))
        return EXIT_HEURISTIC
    out["phi1"] = to_str(flat.phi1)
    out["phi2"] = to_str(flat.phi2)
    out["provenance"] = list(flat.provenance)
    out["l_perp"] = [str(w) for w in flat.l_perp.forms]
    out["verdict"] = True
    print(json.dumps(out, indent=2))
    return EXIT_TRUE


def _change_dict(change: CoordinateChange):
    return {
        "state_map": {k: to_str(v) for k, v in change.state_map.items()},
        "input_map": {k: to_str(v) for k, v in change.input_map.items()},
    }


def cmd_transform(args):
    definition, sysm, sp, prolonged = _load(args)
    out = {
        "command": "transform",
        "file": args.file,
        "system": _system_dict(sysm),
        "sampler": _sampler_dict(sp),
        "prolonged": prolonged,
    }
    phi1 = parse_expr(args.phi1) if args.phi1 else definition.phi1
    hints = [parse_expr(h) for h in (args.hint or ())] + list(definition.hints)
    rep = _passing_report(args, sysm, sp)
    flat = flat_output_for_report(rep, sp, phi1=phi1, hints=hints)
    result = transform_to_triangular(sysm, rep, flat, sp, hints=hints)
    out["flat_output"] = {"phi1": to_str(flat.phi1), "phi2": to_str(flat.phi2)}
    out["stages"] = [
        {
            "name": name,
            "log": stage.log,
            "system": _system_dict(stage.sys),
            **_change_dict(stage.change()),
        }
        for name, stage in result.stages
    ]
    final = result.final
    out["final"] = {
        "system": _system_dict(final.system),
        "terminal_chains": [list(c) for c in final.chains],
        "core": list(final.core),
        "rear_long": list(final.rear_long),
        "rear_short": list(final.rear_short),
        "w_symbol": final.w_symbol,
        "couplings": {k: to_str(v) for k, v in final.couplings.items()},
        "structure_ok": final.structure_ok,
        "structure_failures": final.structure_failures,
    }
    out["verified"] = result.verified
    out["verdict"] = result.verified and final.structure_ok
    if args.save:
        payload = {
            "original": args.file,
            "result": _system_dict(final.system),
            **_change_dict(result.change),
        }
        with open(args.save, "w") as fh:
            json.dump(payload, fh, indent=2)
        out["saved"] = args.save
    print(json.dumps(out, indent=2))
    return EXIT_TRUE if out["verdict"] else EXIT_FALSE


def _system_from_dict(d):
    from .systems import AffineSystem, vector_field

    frame = tuple(d["states"])

    def fld(key):
        return vector_field(frame, {k: parse_expr(v) for k, v in d[key].items()})

    return AffineSystem(
        frame=frame,
        drift=fld("drift"),
        b1=fld("b1"),
        b2=fld("b2"),
        input_syms=tuple(d["inputs"]),
        params=tuple(d.get("params", ())),
        name=d.get("name", "result"),
    )


def cmd_verify(args):
    definition, sysm, sp, prolonged = _load(args)
    out = {
        "command": "verify",
        "file": args.file,
        "sampler": _sampler_dict(sp),
        "prolonged": prolonged,
    }
    if args.transform:
        with open(args.transform) as fh:
            payload = json.load(fh)
        result_sys = _system_from_dict(payload["result"])
        change = CoordinateChange(
            state_map={k: parse_expr(v) for k, v in payload["state_map"].items()},
            input_map={k: parse_expr(v) for k, v in payload["input_map"].items()},
            inverse_state_map=None,
        )
        ok = verify_transformation(sysm, change, result_sys, sp, tol=args.vtol)
        out["transform_file"] = args.transform
        out["verified"] = ok
        out["tol"] = args.vtol
        print(json.dumps(out, indent=2))
        return EXIT_TRUE if ok else EXIT_FALSE
    if args.evidence:
        phi1 = parse_expr(args.phi1) if args.phi1 else definition.phi1
        hints = [parse_expr(h) for h in (args.hint or ())] + list(definition.hints)
        rep = _passing_report(args, sysm, sp)
        flat = flat_output_for_report(rep, sp, phi1=phi1, hints=hints)
        result = transform_to_triangular(sysm, rep, flat, sp, hints=hints)
        lin = prolonged_linearizability(result, sp)
        out["prolongation_order"] = rep.n2 - 1
        out["linearizable"] = lin.verdict
        out["detail"] = lin.failing
        print(json.dumps(out, indent=2))
        return EXIT_TRUE if lin.verdict else EXIT_FALSE
    lin = check_static_feedback_linearizable(sysm, sp)
    out["linearizable"] = lin.verdict
    out["detail"] = lin.failing
    print(json.dumps(out, indent=2))
    return EXIT_TRUE if lin.verdict else EXIT_FALSE


def build_parser():
    ap = argparse.ArgumentParser(
        prog="triflat",
        description="Static feedback equivalence to a flat triangular form: "
        "checks, flat outputs, constructive transformations.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("file", help="system definition (.sys)")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--samples", type=int, default=16)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--domain", action="append", metavar="SYM=LO:HI")
        p.add_argument("--prolong", action="append", metavar="INPUT=K")
        p.add_argument("--phi1", help="first output function (no-terminal-chain case)")
        p.add_argument("--hint", action="append", metavar="EXPR",
                       help="candidate integral for the straightening heuristic")

    p = sub.add_parser("check", help="run the equivalence decision procedure")
    common(p)
    p.add_argument("--variant", action="store_true",
                   help="also test the equal-chain-length variant form")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("flat-output", help="derive a flat output")
    common(p)
    p.set_defaults(fn=cmd_flat_output)

    p = sub.add_parser("transform", help="construct the normal-form transformation")
    common(p)
    p.add_argument("--save", metavar="PATH", help="write the composed map as JSON")
    p.set_defaults(fn=cmd_transform)

    p = sub.add_parser("verify", help="re-verify a saved transformation or gather "
                                      "prolongation evidence")
    common(p)
    p.add_argument("--transform", metavar="PATH", help="saved transformation JSON")
    p.add_argument("--vtol", type=float, default=1e-7,
                   help="verification tolerance")
    p.add_argument("--evidence", action="store_true",
                   help="prolongation linearizability evidence via the normal form")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0,) else 0
    try:
        return args.fn(args)
    except (SysFileError, ExprSyntaxError, FileNotFoundError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, SamplerExhausted) as e:
        print(json.dumps({"error": str(e), "kind": "heuristic"}), file=sys.stderr)
        return EXIT_HEURISTIC
    except NotApplicable as e:
        print(json.dumps({"error": str(e), "kind": "not-applicable"}), file=sys.stderr)
        return EXIT_FALSE
    except (EliminationError, PipelineError, TriflatError) as e:
        print(json.dumps({"error": str(e), "kind": "failure"}), file=sys.stderr)
        return EXIT_HEURISTIC


if __name__ == "__main__":
    sys.exit(main())
