"""Command-line front end.

One executable, seven subcommands: simulate, field, ode, urn, limit,
verify, plot. Exit codes: 0 success (and tolerance pass where one is
checked), 1 tolerance or verification failure, 2 configuration or
runtime error. Graph files use the line-oriented format; simulate also
accepts experiment files that add `param <key> <value>` lines.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import field as _field
from . import flow as _flow
from . import harness as _harness
from . import limits as _limits
from . import urn as _urn
from . import walk as _walk
from .graph import (
    GraphError,
    MarkedGraph,
    classify,
    cone_graph,
    losange_graph,
    parse_experiment,
    tree_like_graph,
    two_paths_graph,
)

PASS, FAIL, CONFIG_ERROR = 0, 1, 2


class CliError(Exception):
    pass


def _load_experiment(path) -> tuple:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    return parse_experiment(text)


def _weights_from_spec(g: MarkedGraph, spec: str) -> dict:
    """Weights as `id=value,...` pairs or bare values in edge-id order."""
    parts = [p for p in spec.split(",") if p.strip()]
    try:
        if any("=" in p for p in parts):
            pairs = dict(p.split("=", 1) for p in parts)
            return {e: float(pairs[e]) for e in g.edge_ids}
        values = [float(p) for p in parts]
    except (KeyError, ValueError) as exc:
        raise CliError(f"bad weight list {spec!r}: {exc}")
    if len(values) != len(g.edge_ids):
        raise CliError(f"expected {len(g.edge_ids)} weights "
                       f"for edges {', '.join(g.edge_ids)}, got {len(values)}")
    return dict(zip(g.edge_ids, values))


def _merge_params(args, params: dict) -> dict:
    """Explicit flags win over `param` lines, which win over defaults."""
    def pick(flag_value, key, cast, default):
        if flag_value is not None:
            return flag_value
        if key in params:
            try:
                return cast(params[key])
            except ValueError:
                raise CliError(f"bad param {key} {params[key]!r}")
        return default

    return {
        "ants": pick(args.ants, "ants", int, 10_000),
        "replicas": pick(args.replicas, "replicas", int, 1),
        "seed": pick(args.seed, "seed", int, None),
        "tol": pick(args.tol, "tol", float, 0.02),
        "label": params.get("label", ""),
    }


def _cmd_simulate(args) -> int:
    g, params = _load_experiment(args.graph)
    merged = _merge_params(args, params)
    cfg = _harness.ExperimentConfig(
        g, merged["ants"], replicas=merged["replicas"], seed=merged["seed"],
        tolerance=merged["tol"], label=merged["label"])
    report = _harness.run_experiment(cfg, out_dir=args.out)
    fam = report.prediction.family.tag.value if report.prediction else "General"
    print(f"graph {report.graph_hash[:12]} family {fam} "
          f"n={report.n_ants} replicas={report.replicas} seed={report.seed}")
    for e in report.edge_ids:
        line = f"  {e}: mean {report.mean[e]:.6f} std {report.std[e]:.6f}"
        if report.prediction and e in report.prediction.limit:
            line += f" limit {report.prediction.limit[e]:.6f}"
        print(line)
    if report.passed is None:
        print("no limit prediction for this family; nothing to check")
        return PASS
    print(f"sup deviation {report.deviation:.6f} vs tolerance "
          f"{merged['tol']}: {'PASS' if report.passed else 'FAIL'}")
    return PASS if report.passed else FAIL


def _cmd_field(args) -> int:
    g, _ = _load_experiment(args.graph)
    w = _weights_from_spec(g, args.weights)
    ev = _field.field(g, w)
    print("edge,p,F")
    for e in g.edge_ids:
        print(f"{e},{ev.p[e]:.17g},{ev.F[e]:.17g}")
    return PASS


def _cmd_ode(args) -> int:
    g, _ = _load_experiment(args.graph)
    start = _weights_from_spec(g, args.start)
    traj = _flow.integrate(g, start, t_max=args.t_max, dt=args.dt)
    lines = ["t," + ",".join(g.edge_ids)]
    for t, state in zip(traj.times, traj.states):
        lines.append(f"{t:.17g}," + ",".join(f"{x:.17g}" for x in state))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# terminal: {traj.terminal}, final drift {traj.final_drift:.3g}",
          file=sys.stderr)
    return PASS


def _cmd_urn(args) -> int:
    try:
        spec = _urn.UrnSpec(_urn.parse_g_spec(args.g))
    except _urn.UrnError as exc:
        raise CliError(str(exc))
    times, values = _urn.simulate_urn_replicas(
        spec, args.steps, args.replicas, seed=args.seed,
        record_schedule=range(spec.start_time,
                              spec.start_time + args.steps + 1))
    lines = ["t," + ",".join(f"x{r}" for r in range(args.replicas))]
    for t, row in zip(times, values):
        lines.append(f"{t}," + ",".join(str(int(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return PASS


def _limit_graph(args) -> MarkedGraph:
    if args.graph:
        g, _ = _load_experiment(args.graph)
        return g
    p, q = args.p or 2, args.q or 2
    return {
        "tree": lambda: tree_like_graph(max(q, 2)),
        "cone": cone_graph,
        "losange": losange_graph,
        "two-paths": lambda: two_paths_graph(p, q),
    }[args.family]()


def _cmd_limit(args) -> int:
    if not args.family and not args.graph:
        raise CliError("need --family or --graph")
    g = _limit_graph(args)
    try:
        pred = _limits.predict_limit(g)
    except _limits.LimitError as exc:
        raise CliError(str(exc))
    print(f"family: {pred.family.tag.value}")
    print(f"method: {pred.method}")
    if pred.residual is not None:
        print(f"residual: {pred.residual:.3g}")
    for e in g.edge_ids:
        if e in pred.limit:
            print(f"{e} {pred.limit[e]:.15g}")
    if pred.dirichlet is not None:
        print(f"dirichlet over {','.join(pred.dirichlet.edges)} "
              f"alpha {','.join(str(a) for a in pred.dirichlet.alpha)}")
    return PASS


def _cmd_verify(args) -> int:
    out = _harness.verify_suite(args.level, seed=args.seed if args.seed
                                is not None else 42)
    for e in out["entries"]:
        if e.get("floor"):
            mark = "floor-ok" if e["consistent"] else "floor-DRIFT"
        else:
            mark = "pass" if e["passed"] else "FAIL"
        print(f"[{mark}] {e['name']}: {e['detail']}")
    print(f"{out['level']}: strict "
          f"{'pass' if out['passed'] else 'FAIL'}, floors "
          f"{'consistent' if out['floor_consistent'] else 'DRIFTED'} "
          f"({out['runtime_seconds']:.1f}s)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return PASS if out["passed"] and out["floor_consistent"] else FAIL


def _cmd_plot(args) -> int:
    pred = None
    if args.graph:
        g, _ = _load_experiment(args.graph)
        try:
            pred = _limits.predict_limit(g)
        except _limits.LimitError:
            pred = None
    try:
        script = _harness.emit_plot_script(args.csv, pred)
    except OSError as exc:
        raise CliError(f"cannot read {args.csv}: {exc}")
    out = args.out or (str(Path(args.csv).with_suffix("")) + "_plot.py")
    Path(out).write_text(script)
    print(f"wrote {out}")
    return PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="antflow",
        description="Simulate and analyze trace-reinforced ant processes "
                    "on marked graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicated process runs vs limit")
    sim.add_argument("--graph", required=True,
                     help="graph or experiment file")
    sim.add_argument("--ants", type=int)
    sim.add_argument("--replicas", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="directory for CSVs and report.json")
    sim.add_argument("--tol", type=float)
    sim.set_defaults(func=_cmd_simulate)

    fld = sub.add_parser("field", help="trace probabilities and drift")
    fld.add_argument("--graph", required=True)
    fld.add_argument("--weights", required=True,
                     help="comma list: values in edge order or id=value pairs")
    fld.set_defaults(func=_cmd_field)

    ode = sub.add_parser("ode", help="integrate the mean-field flow")
    ode.add_argument("--graph", required=True)
    ode.add_argument("--start", required=True,
                     help="start weights, same format as field --weights")
    ode.add_argument("--dt", type=float, default=_flow.DEFAULT_DT)
    ode.add_argument("--t-max", type=float, default=_flow.DEFAULT_T_MAX)
    ode.add_argument("--out", help="CSV file (default stdout)")
    ode.set_defaults(func=_cmd_ode)

    urn = sub.add_parser("urn", help="simulate a generalized urn")
    urn.add_argument("--g", required=True,
                     help="success map: polya, ratio:C, direct-edge:K, "
                          "or expr:<python in x>")
    urn.add_argument("--steps", type=int, default=10_000)
    urn.add_argument("--replicas", type=int, default=1)
    urn.add_argument("--seed", type=int)
    urn.add_argument("--out", help="CSV file (default stdout)")
    urn.set_defaults(func=_cmd_urn)

    lim = sub.add_parser("limit", help="predicted limit vector")
    lim.add_argument("--family",
                     choices=["tree", "cone", "two-paths", "losange"])
    lim.add_argument("--p", type=int)
    lim.add_argument("--q", type=int)
    lim.add_argument("--graph", help="predict for this graph instead")
    lim.set_defaults(func=_cmd_limit)

    ver = sub.add_parser("verify", help="oracle and invariant batteries")
    ver.add_argument("--level", choices=["quick", "full"], default="quick")
    ver.add_argument("--seed", type=int)
    ver.add_argument("--out", help="write the JSON summary here")
    ver.set_defaults(func=_cmd_verify)

    plo = sub.add_parser("plot", help="emit a standalone plotting script")
    plo.add_argument("--csv", required=True, help="trajectory CSV")
    plo.add_argument("--graph", help="attach this graph's limit prediction")
    plo.add_argument("--out", help="script path (default <csv>_plot.py)")
    plo.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, GraphError, _harness.HarnessError, _field.FieldError,
            _flow.FlowError, _walk.WalkError, _urn.UrnError,
            _limits.LimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
