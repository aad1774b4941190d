"""Command-line front end.

Subcommands:

    check MODEL [--prop NAME | --ltl F | --invariant E |
                 --timeliness FLAG1,FLAG2,BOUND]
                [--param K=V]... [--fair] [--cap N] [--workers N] [--json]
    simulate MODEL (--dense | --integral) --seed S --max-time T [--param ...]
    digitize-check MODEL --runs N --seed S [--eps LIST] [--param ...]
    stats MODEL [--param ...] [--cap N] [--json]
    export-dot MODEL [--reachable] [--param ...] [--cap N]
    fmt MODEL
    bisim MODEL [--horizon H] [--param ...]

Exit codes: 0 property holds / command succeeded; 1 property violated
(counterexample emitted); 2 usage or parse error; 3 model validation error;
4 resource cap hit / inconclusive.

Machine output goes to stdout, errors to stderr.  JSON output is canonical
(sorted keys, no whitespace variation, no wall-clock fields), so identical
inputs give byte-identical bytes.  ``TOCHECK_STATE_CAP`` sets the default
state cap.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from typing import Optional

from . import checker, clocked, digitization, dsl, ir
from .clockless import ClocklessSpace, state_space_bound
from .kernel import IMPL
from .ltl import PropertyError

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_LIMIT = 4


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _load_model(path: str) -> ir.Model:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise SystemExit(_usage_error(f"cannot read {path}: {e}"))
    res = dsl.parse(text, file=path)
    if res.errors:
        for err in res.errors:
            print(err.render(), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    assert res.model is not None
    return res.model


def _usage_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _validate_or_exit(model: ir.Model) -> None:
    diags = ir.validate(model)
    errors = [d for d in diags if d.severity == "error"]
    for d in diags:
        print(d.render(), file=sys.stderr)
    if errors:
        raise SystemExit(EXIT_INVALID)


def _parse_params(items: list[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(_usage_error(f"--param expects K=V, got {item!r}"))
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = int(v)
        except ValueError:
            raise SystemExit(_usage_error(f"--param value must be an integer: {item!r}"))
    return out


def _flatten_or_exit(model: ir.Model, params: dict[str, int]) -> ir.FlatModel:
    try:
        return ir.flatten(model, params)
    except ir.ModelError as e:
        for d in e.diagnostics:
            print(d.render(), file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _human_verdict(v: checker.Verdict, space: ClocklessSpace) -> str:
    lines = []
    outcome = "HOLDS" if v.holds else ("VIOLATED" if v.holds is False else "INCONCLUSIVE (cap)")
    lines.append(f"property {v.property}: {outcome}")
    s = v.stats
    lines.append(
        f"  states={s.states_stored} transitions={s.transitions} "
        f"peak_frontier={s.peak_frontier} deadlocks={s.deadlocks} "
        f"wall_time={s.wall_time:.3f}s kernel={IMPL}"
    )
    if v.counterexample:
        ce = v.counterexample
        lines.append(f"  counterexample ({ce.kind}, {len(ce.states)} states):")
        for i, st in enumerate(ce.states):
            mark = ""
            if ce.kind == "lasso" and i == ce.loop_start:
                mark = "  <- loop start"
            d = space.decode(st)
            lines.append(f"    [{i}] locs={','.join(d.locs)} "
                         f"timeouts={list(d.timeouts)} vars={dict(d.vars)}{mark}")
            if i < len(ce.labels):
                lines.append(f"         --{space.label_json(ce.labels[i])}-->")
    return "\n".join(lines)


def cmd_check(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    params = _parse_params(args.param)
    fm = _flatten_or_exit(model, params)
    space = ClocklessSpace(fm)

    picked: list[tuple[str, str, str]] = []  # (name, kind, formula)
    if args.prop:
        matches = [p for p in fm.properties if p.name == args.prop]
        if not matches:
            return _usage_error(f"no property named {args.prop!r} in model")
        picked = [(p.name, p.kind, p.formula) for p in matches]
    elif args.ltl:
        picked = [("cli_ltl", "ltl", args.ltl)]
    elif args.invariant:
        picked = [("cli_invariant", "invariant", args.invariant)]
    elif args.timeliness:
        pass  # handled below
    else:
        if not fm.properties:
            return _usage_error("model declares no properties; use --prop/--ltl/--invariant")
        picked = [(p.name, p.kind, p.formula) for p in fm.properties]

    verdicts: list[tuple[checker.Verdict, ClocklessSpace]] = []
    try:
        if args.timeliness:
            parts = args.timeliness.split(",")
            if len(parts) != 3:
                return _usage_error("--timeliness expects FLAG1,FLAG2,BOUND")
            f1, f2, bound = parts[0].strip(), parts[1].strip(), int(parts[2])
            v = checker.check_timeliness(
                space, (f1, f2), bound, name=f"timeliness<={bound}",
                state_cap=args.cap, workers=args.workers,
            )
            verdicts.append((v, getattr(v, "instrumented_space", space)))
        for name, kind, formula in picked:
            v = checker.run_property(
                space,
                ir.PropertyDecl(name, kind, formula),
                state_cap=args.cap,
                workers=args.workers,
                weak_fairness=args.fair,
            )
            verdicts.append((v, space))
    except PropertyError as e:
        for err in e.errors:
            print(err.render(), file=sys.stderr)
        return EXIT_USAGE
    except (ir.ModelError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except checker.KernelError as e:
        print(f"model error during exploration: {e}", file=sys.stderr)
        return EXIT_INVALID

    for v, vspace in verdicts:
        if args.json:
            print(_dump(v.to_json_dict(vspace)))
        else:
            print(_human_verdict(v, vspace))
    if any(v.holds is None for v, _ in verdicts):
        return EXIT_LIMIT
    if any(v.holds is False for v, _ in verdicts):
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    fm = _flatten_or_exit(model, _parse_params(args.param))
    mode = "dense" if args.dense else "integral"
    try:
        tr = clocked.simulate(fm, args.seed, args.max_time, mode=mode)
    except checker.KernelError as e:
        print(f"model error during simulation: {e}", file=sys.stderr)
        return EXIT_INVALID
    space = clocked.ClockedSpace(fm)
    print(_dump(clocked.trace_to_json(space, tr)))
    return EXIT_OK


def cmd_digitize_check(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    fm = _flatten_or_exit(model, _parse_params(args.param))
    ok, offending = digitization.increment_at_least_one(model)
    if args.eps:
        try:
            eps = [digitization.Epsilon(Fraction(x)) for x in args.eps.split(",")]
        except (ValueError, ZeroDivisionError) as e:
            return _usage_error(f"bad --eps list: {e}")
    else:
        eps = digitization.default_epsilons()
    report = digitization.closure_check(fm, args.runs, eps, args.seed, max_time=args.max_time)
    out = report.to_json_dict()
    out["increments_at_least_one"] = ok
    out["sub_unit_rules"] = offending
    print(_dump(out))
    return EXIT_OK if report.closed else EXIT_VIOLATED


def cmd_stats(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    fm = _flatten_or_exit(model, _parse_params(args.param))
    space = ClocklessSpace(fm)
    try:
        st = checker.explore_stats(space, state_cap=args.cap)
    except checker.KernelError as e:
        print(f"model error during exploration: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.json:
        print(_dump(st.to_json_dict()))
    else:
        print(
            f"states={st.states} transitions={st.transitions} "
            f"deadlocks={st.deadlocks} bound={st.bound} "
            f"within_bound={st.states <= st.bound and not st.capped} kernel={IMPL}"
        )
    return EXIT_LIMIT if st.capped else EXIT_OK


def cmd_export_dot(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    fm = _flatten_or_exit(model, _parse_params(args.param))
    if args.reachable:
        text = _dot_reachable(fm, args.cap)
    else:
        text = _dot_processes(fm)
    print(text, end="")
    return EXIT_OK


def cmd_fmt(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    print(dsl.render(model), end="")
    return EXIT_OK


def cmd_bisim(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    _validate_or_exit(model)
    fm = _flatten_or_exit(model, _parse_params(args.param))
    try:
        rep = checker.bisim_check(fm, horizon=args.horizon, state_cap=args.cap)
    except ir.ModelError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    print(_dump(rep.to_json_dict()))
    if rep.bisimilar is None:
        return EXIT_LIMIT
    return EXIT_OK if rep.bisimilar else EXIT_VIOLATED


def _dot_processes(fm: ir.FlatModel) -> str:
    lines = ["digraph model {", "  rankdir=LR;"]
    for pi, p in enumerate(fm.procs):
        lines.append(f"  subgraph cluster_{pi} {{")
        lines.append(f'    label="{p.name}";')
        for li, loc in enumerate(p.locations):
            shape = "doublecircle" if li == p.entry else "circle"
            lines.append(f'    "p{pi}_{loc}" [label="{loc}", shape={shape}];')
        lines.append("  }")
    for e in sorted(fm.edges, key=lambda e: (e.proc, e.source, e.target, e.kind)):
        p = fm.procs[e.proc]
        src = f"p{e.proc}_{p.locations[e.source]}"
        dst = f"p{e.proc}_{p.locations[e.target]}"
        lines.append(f'  "{src}" -> "{dst}" [label="{e.kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _dot_reachable(fm: ir.FlatModel, cap: Optional[int]) -> str:
    space = ClocklessSpace(fm)
    limit = cap or checker.default_state_cap()
    seen: dict[tuple, int] = {}
    order: list[tuple] = []
    edges: list[tuple[int, str, int]] = []
    frontier = space.initial_states()
    for s in frontier:
        seen[s] = len(seen)
        order.append(s)
    i = 0
    while i < len(order) and len(seen) <= limit:
        u = order[i]
        i += 1
        for lab, v in space.successors(u):
            if v not in seen:
                if len(seen) > limit:
                    break
                seen[v] = len(seen)
                order.append(v)
            edges.append((seen[u], lab[0], seen[v]))
    lines = ["digraph reachable {"]
    for s, idx in seen.items():
        d = space.decode(s)
        label = ",".join(d.locs) + "|" + ",".join(map(str, d.timeouts))
        lines.append(f'  n{idx} [label="{label}"];')
    for src, kind, dst in edges:
        lines.append(f'  n{src} -> n{dst} [label="{kind}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tocheck",
        description="Verify timeout/calendar transition models (clockless reduction + LTL).",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, cap=True):
        p.add_argument("model", help="path to a .ttm model file")
        p.add_argument("--param", action="append", default=[], metavar="K=V",
                       help="constant override / family size binding (repeatable)")
        if cap:
            p.add_argument("--cap", type=int, default=None, help="state cap")

    pc = sub.add_parser("check", help="check a property")
    common(pc)
    pc.add_argument("--prop", help="property name declared in the model")
    pc.add_argument("--ltl", help="inline LTL formula")
    pc.add_argument("--invariant", help="inline invariant expression")
    pc.add_argument("--timeliness", metavar="F1,F2,BOUND",
                    help="bounded accumulated time between two flags")
    pc.add_argument("--fair", action="store_true", help="weak fairness per process")
    pc.add_argument("--workers", type=int, default=1)
    pc.add_argument("--json", action="store_true")
    pc.set_defaults(fn=cmd_check)

    ps = sub.add_parser("simulate", help="random run over the clocked semantics")
    common(ps, cap=False)
    g = ps.add_mutually_exclusive_group(required=True)
    g.add_argument("--dense", action="store_true")
    g.add_argument("--integral", action="store_true")
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--max-time", type=int, required=True)
    ps.set_defaults(fn=cmd_simulate)

    pd = sub.add_parser("digitize-check", help="empirical digitization closure")
    common(pd, cap=False)
    pd.add_argument("--runs", type=int, required=True)
    pd.add_argument("--seed", type=int, required=True)
    pd.add_argument("--eps", help="comma list of rationals in (0,1], e.g. 1/2,1")
    pd.add_argument("--max-time", type=int, default=None)
    pd.set_defaults(fn=cmd_digitize_check)

    pt = sub.add_parser("stats", help="explore and report state counts vs bound")
    common(pt)
    pt.add_argument("--json", action="store_true")
    pt.set_defaults(fn=cmd_stats)

    pe = sub.add_parser("export-dot", help="DOT of the process graphs or state space")
    common(pe)
    pe.add_argument("--reachable", action="store_true")
    pe.set_defaults(fn=cmd_export_dot)

    pf = sub.add_parser("fmt", help="reprint a model canonically")
    pf.add_argument("model")
    pf.set_defaults(fn=cmd_fmt)

    pb = sub.add_parser("bisim", help="clocked/clockless equivalence check")
    common(pb)
    pb.add_argument("--horizon", type=int, default=None)
    pb.set_defaults(fn=cmd_bisim)
    return ap


def run_cli(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
