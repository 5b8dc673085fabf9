"""Command-line front end.

Exit status: 0 when every check passes, 1 when a check fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import linalg as la
from .errors import ChainError, InvalidInputError
from .measurement import Branch, compose_chain
from .probability import world_distribution
from .retrodiction import compare_routes, confirming_report, ru_recursive
from .scenarios import (
    NAMES,
    SCHEMA_VERSION,
    build_scenario,
    compare_expected,
    expected_report,
    resolve,
    run_scenario,
    structural_checks,
)
from .typicality import sample_worlds

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _amps(v) -> list:
    a = np.round(np.asarray(v, dtype=np.complex128), 12) + 0.0
    return [[float(z.real) + 0.0, float(z.imag) + 0.0] for z in a]


def _key(t) -> str:
    return ",".join(t)


def _write_json(path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in 0..2**64-1")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _retro_json(layout, rec) -> dict:
    return {
        "branches": {str(k): list(t) for k, t in sorted(rec.branches.items())},
        "states": {str(k): _amps(v) for k, v in sorted(rec.states.items())},
        "factors": {
            str(k): {layout[i].label: _amps(s) for i, s in sorted(fs.items())}
            for k, fs in sorted(rec.factors.items())
        },
    }


def _routes_json(layout, comps) -> list:
    return [{"level": c.level, "target": layout[c.target].label, "step": c.step,
             "overlap": round(c.overlap, 12), "agrees": c.agrees} for c in comps]


def cmd_list(args) -> int:
    for name in NAMES:
        spec = build_scenario(name)
        print(f"{name:16s} {spec.description}")
    return EXIT_OK


def cmd_run(args) -> int:
    spec = resolve(args.scenario)
    rep = run_scenario(spec, args.samples, args.seed, args.tol, args.atol)
    layout = rep.layout
    oracle = None
    if args.scenario in NAMES:
        oracle = compare_expected(rep, expected_report(args.scenario), args.atol)
        rep.checks["oracle"] = oracle.passed
    name = lambda i: layout[i].label  # noqa: E731

    if not args.quiet:
        print(f"scenario {spec.name}: {' -> '.join(f.label for f in layout.factors)}")
        print("world distribution:")
        for t, p in zip(rep.table.alphabet, rep.table.weights):
            print(f"  ({_key(t)}): {round(p, 12) + 0.0:.12g}")
        print(f"sampled {rep.samples} worlds with seed {rep.seed}")
        print(f"  LLN max deviation {rep.lln.max_deviation:.4g} (tol {args.tol}): "
              f"{'pass' if rep.lln.passed else 'FAIL'}")
        print(f"  support: {'pass' if rep.support_ok else 'FAIL'}")
        for label, m in rep.constant_columns.items():
            print(f"  observer {label} records {m} in every repetition")
        print(f"confirming points: system -> {name(rep.confirming.system_point)}; " + ", ".join(
            f"{name(i)} -> {name(p)}" for i, p in sorted(rep.confirming.apparatus_points.items())))
        agree = [c for cs in rep.routes.values() for c in cs]
        print(f"retrodiction routes compared: {len(agree)}, agreeing: {sum(c.agrees for c in agree)}")
        print(f"confirmed-state check: {rep.confirmed.checked} claims, {len(rep.confirmed.violations)} violations")
        if rep.annihilation is not None:
            r1 = rep.annihilation
            print(f"pinned annihilation rate {r1.rate:.4f}; coincides with differing outcomes: "
                  f"{'yes' if r1.coincide else 'NO'}")
        if rep.naive_projector is not None:
            r2 = rep.naive_projector
            ov = sorted(set(round(o, 12) for o in r2.overlaps.values()))
            print(f"grouped apparatus PVM: {'yes' if r2.grouped_pvm else 'no'}; naive vs backtracked "
                  f"overlap {ov}; contradiction: {'yes' if r2.contradiction else 'no'}")
        if oracle is not None:
            print(f"expected values: {'pass' if oracle.passed else 'FAIL'}")
            for m in oracle.mismatches:
                print(f"  {m}")
        print("PASS" if rep.passed else "FAIL")

    if args.json:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "scenario": spec.name,
            "factors": [f.label for f in layout.factors],
            "table": [{"outcome": list(t), "p": p} for t, p in zip(rep.table.alphabet, rep.table.weights)],
            "samples": rep.samples,
            "seed": rep.seed,
            "lln": {"tol": args.tol, "passed": rep.lln.passed,
                    "frequencies": {_key(t): f for t, f in rep.lln.frequencies.items()}},
            "support": rep.support_ok,
            "constant_columns": rep.constant_columns,
            "confirming": rep.confirming.to_json(layout),
            "retrodicted": {_key(t): _retro_json(layout, r) for t, r in rep.retrodicted.items()},
            "routes": {_key(t): _routes_json(layout, cs) for t, cs in rep.routes.items()},
            "confirmed_states": {"checked": rep.confirmed.checked, "violations": [
                {"branch": list(v.outcomes), "target": name(v.target), "step": v.step, "at": v.at, "size": v.size}
                for v in rep.confirmed.violations]},
            "checks": rep.checks,
            "passed": rep.passed,
        }
        if rep.annihilation is not None:
            payload["annihilation"] = {"samples": rep.annihilation.samples, "annihilated": rep.annihilation.annihilated,
                                  "rate": rep.annihilation.rate, "coincide": rep.annihilation.coincide}
        if rep.naive_projector is not None:
            payload["naive_projector"] = {
                "grouped_complete": rep.naive_projector.grouped_complete,
                "grouped_pvm": rep.naive_projector.grouped_pvm,
                "naive_state": _amps(rep.naive_projector.naive_state),
                "overlaps": {_key(t): round(o, 12) for t, o in rep.naive_projector.overlaps.items()},
                "contradiction": rep.naive_projector.contradiction,
            }
        if oracle is not None:
            payload["oracle"] = {"passed": oracle.passed, "mismatches": oracle.mismatches}
        _write_json(args.json, payload)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    spec = resolve(args.scenario)
    checks = structural_checks(spec, args.atol)["families"]
    yn = lambda b: "yes" if b else "no"  # noqa: E731
    complete = all(c["complete"] for c in checks)
    domain = all(c["domain"] for c in checks)
    if not args.quiet:
        print(f"PVM: {' '.join(yn(c['pvm']) for c in checks)}; "
              f"completeness: {'ok' if complete else 'FAIL'}; "
              f"domain condition: {'ok' if domain else 'FAIL'}")
        for c in checks:
            if not c["complete"] or not c["domain"]:
                what = [w for w in ("complete", "domain") if not c[w]]
                print(f"  apparatus {c['apparatus']}: fails {', '.join(what)}")
    if args.json:
        _write_json(args.json, {"schema_version": SCHEMA_VERSION, "scenario": spec.name,
                                "families": checks, "passed": complete and domain})
    return EXIT_OK if complete and domain else EXIT_FAIL


def cmd_sample(args) -> int:
    spec = resolve(args.scenario)
    chain, psi = spec.effective()
    table = world_distribution(compose_chain(chain, psi))
    world = sample_worlds(table, args.samples, args.seed)
    if args.json and args.json != "-":
        Path(args.json).write_text(world.to_jsonl())
    elif not args.quiet:
        sys.stdout.write(world.to_jsonl())
    return EXIT_OK


def _parse_branch(s: str, chain) -> tuple:
    t = tuple(p.strip() for p in s.split(","))
    if t not in chain.tuples():
        raise InvalidInputError(f"--branch {s!r} is not an outcome tuple of this chain")
    return t


def cmd_retrodict(args) -> int:
    spec = resolve(args.scenario)
    chain, psi = spec.effective()
    layout = chain.layout
    name = lambda i: layout[i].label  # noqa: E731
    conf = confirming_report(chain)
    branches = compose_chain(chain, psi)
    if args.branch:
        want = _parse_branch(args.branch, chain)
        branches = [b for b in branches if b.outcomes == want]
        if la.is_zero(branches[0].vector):
            raise InvalidInputError(f"branch {args.branch!r} has zero weight")
    ok = True
    out = {}
    if not args.quiet:
        print(f"confirming points: system -> {name(conf.system_point)}; " + ", ".join(
            f"{name(i)} -> {name(p)}" for i, p in sorted(conf.apparatus_points.items())))
    for b in branches:
        if la.is_zero(b.vector):
            continue
        b = Branch(b.outcomes, la.normalize(b.vector))
        rec = ru_recursive(chain, psi, b)
        comps = compare_routes(chain, psi, b)
        ok &= all(c.agrees for c in comps)
        out[_key(b.outcomes)] = {"retrodicted": _retro_json(layout, rec), "routes": _routes_json(layout, comps)}
        if args.quiet:
            continue
        print(f"branch ({_key(b.outcomes)}):")
        for k in sorted(rec.states, reverse=True):
            fs = rec.factors[k]
            desc = ", ".join(f"{name(i)}={_describe(layout, i, s)}" for i, s in sorted(fs.items()))
            print(f"  after step {k} ({name(k)}): {desc if desc else 'entangled'}")
        for c in comps:
            print(f"  {name(c.target)} before step {c.step}: backtracked and projected states "
                  f"{'agree' if c.agrees else 'DISAGREE'} (overlap {c.overlap:.12g})")
    if args.json:
        _write_json(args.json, {"schema_version": SCHEMA_VERSION, "scenario": spec.name,
                                "confirming": conf.to_json(layout), "branches": out, "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_FAIL


def _describe(layout, i, s) -> str:
    f = layout[i]
    if f.is_apparatus:
        if la.equal_up_to_phase(s, f.init_state):
            return "init"
        for m in f.outcomes:
            if la.equal_up_to_phase(s, f.final_state(m)):
                return f"[{m}]"
    nz = [(j, z) for j, z in enumerate(np.asarray(s)) if abs(z) > 1e-12]
    if len(nz) == 1:
        return f"|{nz[0][0]}>"
    return "[" + " ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in np.asarray(s)) + "]"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="worldchain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sampling=False):
        sp.add_argument("scenario", help=f"built-in name ({', '.join(NAMES)}) or scenario JSON file")
        if sampling:
            sp.add_argument("--samples", type=_positive_int, default=100_000, help="number of repetitions")
            sp.add_argument("--seed", type=_seed, required=True, help="RNG seed (required)")
            sp.add_argument("--tol", type=_positive_float, default=0.01, help="statistical tolerance")
        sp.add_argument("--atol", type=_positive_float, default=1e-10, help="algebraic tolerance")
        sp.add_argument("--json", metavar="PATH", help="write a JSON report ('-' for stdout)")
        sp.add_argument("--quiet", action="store_true", help="suppress the text report")

    sp = sub.add_parser("list", help="list built-in scenarios")
    sp.set_defaults(func=cmd_list)
    sp = sub.add_parser("run", help="full analysis of a scenario")
    common(sp, sampling=True)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("verify", help="completeness, PVM and domain checks")
    common(sp)
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("sample", help="emit sampled worlds as JSON lines")
    common(sp, sampling=True)
    sp.set_defaults(func=cmd_sample)
    sp = sub.add_parser("retrodict", help="confirming points and retrodicted states")
    common(sp)
    sp.add_argument("--branch", help="comma-separated outcome tuple, e.g. 0,0,+")
    sp.set_defaults(func=cmd_retrodict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ChainError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
