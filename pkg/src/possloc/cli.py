"""possloc command-line front end."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import quantum, sat, solver, tables

VERBS = (
    "check", "verify", "hardy", "nosig", "gen", "encode", "harden",
    "robust", "sat", "decode", "audit", "qtable", "sweep",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="possloc", description="Possibilistic locality toolkit.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("inputs", nargs="*", help="input file ('-' for stdin), fixture name or sweep family")
    p.add_argument("-o", "--output", help="write results here instead of stdout")
    p.add_argument("--eps", type=float, default=tables.DEFAULT_EPS)
    p.add_argument("--r", type=int, default=2, help="robustness order")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--exit-status", action="store_true", help="exit 1 on Nonlocal/NotRobust/pattern found")
    p.add_argument("--certificate", help="certificate path (written by check, read by verify and decode)")
    p.add_argument("--entry", action="store_true", help="robust: check only table-induced fixing pairs")
    p.add_argument("--probabilities", action="store_true", help="qtable: emit PROBLOC instead of POSSLOC")
    p.add_argument("--max-vars", type=int, default=4)
    p.add_argument("--max-clauses", type=int, default=3)
    p.add_argument("--samples", type=int, help="audit: sample this many instances instead of enumerating")
    p.add_argument("--resolution", type=int, default=64)
    return p


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _one_input(args) -> str:
    if len(args.inputs) != 1:
        raise UsageError(f"{args.verb} takes exactly one input")
    return args.inputs[0]


def _load_table(args) -> tables.PossibilityTable:
    t = tables.parse_table(_read(_one_input(args)))
    if isinstance(t, tables.ProbabilityTable):
        t = tables.possibilize(t, args.eps)
    return t


def _load_cnf(path: str) -> sat.CnfInstance:
    return sat.parse_dimacs(_read(path))


def _warn_signalling(table, err) -> None:
    for v in tables.check_no_signalling(table):
        print(f"warning: signalling: {v}", file=err)


def _cmd_check(args, out, err):
    table = _load_table(args)
    _warn_signalling(table, err)
    verdict = solver.decide_local(table)
    text = solver.format_verdict(verdict, table)
    if args.certificate:
        Path(args.certificate).write_text(solver.format_verdict(verdict))
    out.write(text)
    return 0 if verdict.is_local else 1


def _cmd_verify(args, out, err):
    if not args.certificate:
        raise UsageError("verify needs --certificate")
    table = _load_table(args)
    verdict = solver.parse_certificate(_read(args.certificate))
    try:
        ok = solver.verify_certificate(table, verdict)
    except solver.CertificateError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        print(f"warning: {exc}", file=err)
        ok = False
    out.write("VALID\n" if ok else "INVALID\n")
    return 0 if ok else 1


def _cmd_hardy(args, out, err):
    table = _load_table(args)
    _warn_signalling(table, err)
    pattern = solver.hardy_scan(table)
    out.write("none\n" if pattern is None else f"{pattern}\n")
    return 0 if pattern is None else 1


def _cmd_nosig(args, out, err):
    violations = tables.check_no_signalling(_load_table(args))
    out.write("".join(f"{v}\n" for v in violations) or "no-signalling\n")
    return 1 if violations else 0


def _cmd_gen(args, out, err):
    name = _one_input(args)
    try:
        out.write(tables.serialize_table(tables.fixture(name)))
    except KeyError:
        raise UsageError(f"unknown fixture {name!r}; choose from {', '.join(tables.FIXTURE_NAMES)}") from None
    return 0


def _cmd_encode(args, out, err):
    table, _ = sat.encode_possloc(sat.normalize(_load_cnf(_one_input(args))))
    out.write(tables.serialize_table(table))
    return 0


def _cmd_harden(args, out, err):
    hard, _ = sat.harden(sat.normalize(_load_cnf(_one_input(args))))
    out.write(sat.serialize_dimacs(hard))
    return 0


def _format_fixings(fixings) -> str:
    return " ".join(f"x{f.variable + 1}={f.value}" for f in fixings)


def _cmd_robust(args, out, err):
    inst = _load_cnf(_one_input(args))
    if args.entry:
        res = sat.is_entry_robust(sat.normalize(inst))
    else:
        if args.r < 0:
            raise UsageError("--r must be non-negative")
        res = sat.is_r_robust(inst, args.r)
    if res.robust:
        out.write("ROBUST\n")
        return 0
    out.write(f"NOT_ROBUST {_format_fixings(res.counterexample)}".rstrip() + "\n")
    return 1


def _cmd_sat(args, out, err):
    inputs = list(args.inputs)
    if inputs[:1] == ["satisfiable"]:
        inputs = inputs[1:]
    if len(inputs) != 1:
        raise UsageError("sat takes exactly one input")
    model = sat.satisfiable(_load_cnf(inputs[0]))
    if model is None:
        out.write("UNSAT\n")
        return 1
    out.write("SAT " + " ".join(str(v + 1 if b else -(v + 1)) for v, b in enumerate(model)) + "\n")
    return 0


def _cmd_decode(args, out, err):
    if not args.certificate:
        raise UsageError("decode needs --certificate")
    inst = sat.normalize(_load_cnf(_one_input(args)))
    table, emap = sat.encode_possloc(inst)
    verdict = solver.parse_certificate(_read(args.certificate))
    if not verdict.is_local:
        raise UsageError("certificate holds no grids to decode")
    for grid in verdict.certificate:
        assignment = sat.decode_grid(emap, grid)
        out.write(" ".join(str(v + 1 if b else -(v + 1)) for v, b in enumerate(assignment)) + "\n")
    return 0


def _cmd_audit(args, out, err):
    if args.seed is None:
        raise UsageError("audit needs --seed")
    if args.inputs:
        raise UsageError("audit takes no input file")
    report = sat.audit_equivalence(args.max_vars, args.max_clauses, args.samples, args.seed, args.jobs)
    out.write(report.to_text())
    return 1 if report.sound_violations or report.semantic_violations else 0


def _cmd_qtable(args, out, err):
    geom = quantum.parse_geom(_read(_one_input(args)))
    ptable, poss = quantum.generate_tables(geom, args.eps)
    out.write(tables.serialize_table(ptable if args.probabilities else poss))
    return 0


def _cmd_sweep(args, out, err):
    res = quantum.sweep_paradox(_one_input(args), args.resolution, args.eps, args.jobs)
    params = " ".join(repr(p) for p in res.params)
    out.write(f"{res.family} value={res.value!r} params={params}\n")
    return 0


_COMMANDS = {name: globals()[f"_cmd_{name}"] for name in VERBS}


def run_cli(argv, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = build_parser().parse_args(list(argv))
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if args.eps < 0:
            raise UsageError("--eps must be non-negative")
        sink = open(args.output, "w") if args.output else out
        try:
            status = _COMMANDS[args.verb](args, sink, err)
        finally:
            if args.output:
                sink.close()
    except UsageError as exc:
        print(f"possloc: error: {exc}", file=err)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"possloc: error: {exc}", file=err)
        return 2
    return status if args.exit_status else 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
