"""The ``nc`` command.

Exit codes: 0 success, 1 type or fragment error (parse errors included),
2 runtime error, 3 configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys

from .core import format_value
from .device import EvalError, StepBudgetExceeded
from .hfc import HfcError, check_hfc_prime, check_same_behaviour
from .network import NetworkError
from .parser import ParseError
from .prims import BuiltinError
from .scenario import (ConfigError, ScenarioConfig, compile_scenario, export_csv,
                       export_plot_data, run_scenario)
from .stdlib import CATALOG, load_program, load_stdlib
from .typesys import NCTypeError, format_scheme, format_type, infer_program

OK, TYPE_ERROR, RUNTIME_ERROR, CONFIG_ERROR = 0, 1, 2, 3

RUNTIME_ERRORS = (EvalError, StepBudgetExceeded, BuiltinError, NetworkError, HfcError)


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def cmd_check(args, out):
    prog = load_program(_read(args.file), file=args.file, with_stdlib=not args.no_stdlib)
    schemes, main = infer_program(prog)
    lib = set() if args.no_stdlib else {d.name for d in load_stdlib()}
    for d in prog.functions:
        if d.name not in lib:
            print(f"{d.name} : {format_scheme(schemes[d.name])}", file=out)
    print(f"main : {format_type(main)}", file=out)
    if args.fragment:
        report = check_hfc_prime(prog)
        if not report.ok:
            tag = f" ({report.restriction})" if report.restriction else ""
            print(f"fragment: {report}{tag}", file=out)
            return TYPE_ERROR
        print(f"fragment: ok, main : {format_type(report.result.main)}", file=out)
    return OK


def _scenario(path, seed):
    cfg = ScenarioConfig.from_file(path)
    if seed is not None:
        cfg.seed = seed
    return cfg


def cmd_run(args, out):
    cfg = _scenario(args.scenario, args.seed)
    if args.snapshots is not None:
        cfg.snapshot_every = args.snapshots
    if args.rounds is not None:
        cfg.max_rounds = args.rounds
    program = compile_scenario(cfg)
    infer_program(program)
    res = run_scenario(cfg, program)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        export_csv(res.rows, os.path.join(args.out, "metrics.csv"))
        export_plot_data(res.rows, os.path.join(args.out, "plot.csv"))
        with open(os.path.join(args.out, "events.log"), "w", encoding="utf-8") as fh:
            fh.write(res.log.text())
    conv = "never" if res.converged_round is None else f"round {res.converged_round}"
    print(f"rounds: {res.rounds}  steps: {len(res.log)}  stable since: {conv}", file=out)
    for rnd, label in res.history:
        print(f"  round {rnd}: {label}", file=out)
    for d, vals in sorted(res.final_outputs().items()):
        shown = "  ".join(f"{k}={format_value(v)}" for k, v in vals.items())
        print(f"{d}: {shown}", file=out)
    if args.out:
        print(f"wrote {os.path.join(args.out, 'metrics.csv')}", file=out)
    return OK


def cmd_diff(args, out):
    cfg = _scenario(args.scenario, args.seed)
    cfg.source = _read(args.file)
    cfg.program_file = args.file
    program = compile_scenario(cfg)
    report = check_hfc_prime(program)
    if not report.ok:
        print(f"not in the common fragment: {report}", file=out)
        return TYPE_ERROR
    res = run_scenario(cfg, program)
    verdict = check_same_behaviour(program, res.initial_env, res.actions, cfg.horizon, cfg.budget)
    print(str(verdict), file=out)
    return OK if verdict.ok else RUNTIME_ERROR


def cmd_stdlib(args, out):
    width = max(len(e.name) for e in CATALOG)
    for e in CATALOG:
        print(f"{e.name:<{width}}  {e.scheme}", file=out)
        print(f"{'':<{width}}  {e.summary} ({e.file})", file=out)
    return OK


def build_parser():
    p = argparse.ArgumentParser(prog="nc", description="Neighbours calculus tools")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--snapshots", type=int, metavar="K", help="snapshot every K rounds")
    r.add_argument("--rounds", type=int, help="override max_rounds")
    r.add_argument("--out", metavar="DIR", help="write metrics.csv, plot.csv and events.log here")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="infer types of a program")
    c.add_argument("file")
    c.add_argument("--fragment", action="store_true", help="also check the restricted fragment")
    c.add_argument("--no-stdlib", action="store_true")
    c.set_defaults(func=cmd_check)

    d = sub.add_parser("diff", help="compare NC and HFC evaluation on a scenario")
    d.add_argument("file")
    d.add_argument("--scenario", required=True)
    d.add_argument("--seed", type=int)
    d.set_defaults(func=cmd_diff)

    s = sub.add_parser("stdlib", help="list the standard library")
    s.set_defaults(func=cmd_stdlib)
    return p


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (ParseError, NCTypeError) as exc:
        print(f"error: {exc}", file=err)
        return TYPE_ERROR
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return CONFIG_ERROR
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=err)
        return RUNTIME_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return RUNTIME_ERROR


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
