"""Command-line front end.

Exit codes: 0 success, 1 validation failure or unsatisfied check, 2 file or
parse error, 3 unrealizable specification, 4 iteration budget exhausted,
5 blocking supervisor.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import exact
from .io import InputFileError, load_model, load_spec, load_supervisor, save_supervisor
from .model import validate
from .pctl import FormulaSyntaxError, UnsupportedFragmentError, atoms, eval_state_formula
from .supervisor import (Alphabet, AlphabetMismatch, BlockingError, ZaDfa, adversary_to_dfa,
                         nonblocking_check, product, simulate, to_dot)
from .synthesis import BudgetExhausted, SynthesisConfig, synthesize

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INPUT = 2
EXIT_UNREALIZABLE = 3
EXIT_BUDGET = 4
EXIT_BLOCKING = 5

log = logging.getLogger("pomdp_lstar")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _model(path):
    pomdp = load_model(path)
    problems = validate(pomdp)
    if problems:
        raise CliError("invalid model:\n  " + "\n  ".join(problems), EXIT_INVALID)
    return pomdp


def _spec(text, pomdp):
    try:
        spec = load_spec(text)
    except (FormulaSyntaxError, UnsupportedFragmentError, ValueError) as e:
        raise CliError(f"specification: {e}", EXIT_INPUT) from e
    unknown = (atoms(spec.phi1) | atoms(spec.phi2)) - pomdp.ap
    if unknown:
        raise CliError(f"specification uses propositions not in the model: {sorted(unknown)}", EXIT_INVALID)
    return spec


def _print(obj):
    print(json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True))


# --------------------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    pomdp = load_model(args.model)
    problems = validate(pomdp)
    for msg in problems:
        print(msg)
    if problems:
        return EXIT_INVALID
    print(f"ok: {pomdp.n_states} states, {pomdp.n_actions} actions, {pomdp.n_observations} observations")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    pomdp = _model(args.model)
    spec = _spec(args.spec, pomdp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = open(args.trace, "w", encoding="utf-8") if args.trace else None
    cfg = SynthesisConfig(engine=args.engine, pomcp_simulations=args.sims, ucb_c=args.ucb_c,
                          seed=args.seed, trace_file=trace, max_iterations=args.max_iterations)
    try:
        result = synthesize(pomdp, spec, cfg)
        code = EXIT_UNREALIZABLE if result.outcome == "unrealizable" else EXIT_OK
    except BudgetExhausted as e:
        result = e.result
        code = EXIT_BUDGET
    finally:
        if trace:
            trace.close()
    save_supervisor(result.dfa, out / "supervisor.json")
    (out / "supervisor.dot").write_text(to_dot(result.dfa, legend=True), encoding="utf-8")
    summary = result.summary()
    (out / "result.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _print(summary)
    return code


def cmd_check(args) -> int:
    pomdp = _model(args.model)
    spec = _spec(args.spec, pomdp)
    alphabet = Alphabet.of(pomdp)
    if args.policy is not None:
        try:
            y = alphabet.parse(args.policy)
        except ValueError as e:
            raise CliError(f"policy: {e}", EXIT_INPUT) from e
        if not y:
            raise CliError("policy: empty string", EXIT_INPUT)
        value = exact.policy_string_value(pomdp, spec, y)
        report = {"policy": alphabet.format(y), "value": value, "satisfied": spec.holds(value),
                  "evidence": exact.path_evidence(pomdp, spec, y)}
        _print(report)
        return EXIT_OK if report["satisfied"] else EXIT_INVALID
    dfa = load_supervisor(args.supervisor) if args.supervisor else ZaDfa.trivial_full(alphabet)
    blocked = nonblocking_check(product(pomdp, dfa), spec.k)
    if blocked is not None:
        raise CliError(f"supervisor blocks after {alphabet.format(blocked.string)} at {blocked.name}",
                       EXIT_BLOCKING)
    if args.engine == "pomcp":
        from .pomcp import PomcpConfig, estimate_max
        est = estimate_max(pomdp, spec, dfa, PomcpConfig(args.sims, args.ucb_c, args.seed))
        report = {"p_max": est.p_hat, "satisfied": spec.holds(est.p_hat), "engine": "pomcp",
                  "simulations": args.sims}
    else:
        check = exact.check_supervisor(pomdp, dfa, spec)
        witness = adversary_to_dfa(check.witness.choices, alphabet, spec.k)
        report = {"p_max": check.p_c, "satisfied": check.satisfied, "engine": "exact",
                  "branch_values": {pomdp.observations[z]: v for z, v in check.witness.branch_values.items()},
                  "witness": witness.to_json()}
        if args.witness_dot:
            Path(args.witness_dot).write_text(to_dot(witness, legend=True), encoding="utf-8")
    _print(report)
    return EXIT_OK if report["satisfied"] else EXIT_INVALID


def _until_holds(pomdp, spec, states: List[int]) -> bool:
    for s in states[: spec.k + 1]:
        lab = pomdp.labels[s]
        if eval_state_formula(spec.phi2, lab):
            return True
        if not eval_state_formula(spec.phi1, lab):
            return False
    return False


def cmd_simulate(args) -> int:
    pomdp = _model(args.model)
    dfa = load_supervisor(args.supervisor)
    spec = _spec(args.spec, pomdp) if args.spec else None
    k = args.k if args.k is not None else (spec.k if spec else None)
    if k is None:
        raise CliError("simulate needs --k or --spec", EXIT_INPUT)
    rng = np.random.default_rng(args.seed)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    hits = 0
    try:
        for run in range(args.runs):
            tr = simulate(pomdp, dfa, k, rng=rng)
            rec = {"run": run,
                   "states": [pomdp.states[s] for s in tr.states],
                   "observations": [pomdp.observations[z] for z in tr.observations],
                   "actions": [pomdp.actions[a] for a in tr.actions]}
            if spec is not None:
                rec["satisfied"] = _until_holds(pomdp, spec, tr.states)
                hits += rec["satisfied"]
            sink.write(json.dumps(rec) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    if spec is not None and args.runs:
        print(f"empirical frequency of {_path_text(spec)}: {hits / args.runs:.6f} ({hits}/{args.runs})",
              file=sys.stderr)
    return EXIT_OK


def _path_text(spec) -> str:
    text = str(spec)
    return text[text.index("[") + 2: -2]


def cmd_export_dot(args) -> int:
    dfa = load_supervisor(args.input)
    text = to_dot(dfa, legend=args.legend)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pomdp-lstar", description="Supervisor synthesis for POMDPs")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_validate)

    def engine_args(q):
        q.add_argument("--engine", choices=("exact", "pomcp"), default="exact")
        q.add_argument("--sims", type=int, default=100_000, help="POMCP simulations")
        q.add_argument("--ucb-c", type=float, default=1.0, help="POMCP exploration constant")
        q.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("synthesize", help="learn a supervisor")
    s.add_argument("--model", required=True)
    s.add_argument("--spec", required=True, help="formula text or a file holding it")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--trace", help="write the iteration trace as JSON lines")
    s.add_argument("--max-iterations", type=int, help="override the default iteration budget")
    engine_args(s)
    s.set_defaults(func=cmd_synthesize)

    c = sub.add_parser("check", help="model-check a supervisor or a single policy string")
    c.add_argument("--model", required=True)
    c.add_argument("--spec", required=True)
    g = c.add_mutually_exclusive_group()
    g.add_argument("--supervisor")
    g.add_argument("--policy", help='digit coding ("124") or z:a pairs ("z1:a1,z1:a2")')
    c.add_argument("--witness-dot", help="write the witness adversary as DOT")
    engine_args(c)
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("simulate", help="regulated random runs")
    m.add_argument("--model", required=True)
    m.add_argument("--supervisor", required=True)
    m.add_argument("--spec")
    m.add_argument("--k", type=int)
    m.add_argument("--runs", type=int, default=1)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", help="JSON-lines trace file (default stdout)")
    m.set_defaults(func=cmd_simulate)

    d = sub.add_parser("export-dot", help="render a supervisor as Graphviz DOT")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out")
    d.add_argument("--legend", action="store_true", help="digit labels with a symbol legend")
    d.set_defaults(func=cmd_export_dot)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("POMDP_LSTAR_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except InputFileError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except AlphabetMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BlockingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BLOCKING


if __name__ == "__main__":
    sys.exit(main())
