"""Command-line interface: ``theory``, ``generate``, ``detect``, ``sweep``, ``plot``.

Every subcommand accepts ``--config FILE``, a flat TOML file whose keys are
the long option names (dashes or underscores); flags given on the command
line win over file values.

Exit codes: 0 ok, 1 usage, 2 infeasible parameters, 3 I/O error, 4 solver
failure, 5 malformed input file, 6 dimension mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, GraphFormatError, InfeasibleParameters, SolverError

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_SOLVER, EXIT_FORMAT, EXIT_DIM = range(7)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _model_args(p, defaults=True):
    p.add_argument("--n", type=int, default=6000 if defaults else None)
    p.add_argument("--qs", type=int, default=1 if defaults else None, help="minority communities")
    p.add_argument("--qb", type=int, default=1 if defaults else None, help="majority communities")
    p.add_argument("--d", type=float, default=5.0, help="average degree")
    p.add_argument("--scenario", choices=("consistent_pout", "consistent_degree"),
                   default="consistent_pout")


def build_parser():
    parser = _Parser(prog="minority-sbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("theory", help="signal-matrix spectrum and phase of one model")
    _model_args(p)
    p.add_argument("--rho", type=float, required=False)
    p.add_argument("--delta", type=float, required=False)
    p.add_argument("--csv", help="also write threshold-curve points (curve,delta,rho) here")
    p.add_argument("--config")

    p = sub.add_parser("generate", help="sample a graph and write edge list + sidecar")
    _model_args(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=("direct", "background"), default="direct")
    p.add_argument("--out", help="output prefix; writes PREFIX.edges and PREFIX.json")
    p.add_argument("--config")

    p = sub.add_parser("detect", help="detect communities in an edge list")
    p.add_argument("--edges")
    p.add_argument("--sidecar", help="JSON sidecar with planted labels (enables AMI)")
    p.add_argument("--method", choices=("bh", "bp"), default="bh")
    p.add_argument("--order", choices=("nec", "mfe", "mdl"), default=None,
                   help="order selection (default: nec for bh, mfe for bp)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qmax", type=int, default=6)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--json", dest="json_out", help="write diagnostics JSON here")
    p.add_argument("--labels-out", help="write one label per line here")
    p.add_argument("--config")

    p = sub.add_parser("sweep", help="phase-diagram sweep over a (rho, delta) grid")
    p.add_argument("--preset", help="fig2, fig3, fig4, fig5, fig7 or fig8")
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    _model_args(p, defaults=False)
    p.add_argument("--rho-min", type=float)
    p.add_argument("--rho-max", type=float)
    p.add_argument("--rho-steps", type=int)
    p.add_argument("--delta-min", type=float)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--delta-steps", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", help="comma-separated, e.g. bh+nec,bp+mfe")
    p.add_argument("--probe", action="append", default=None, metavar="RHO,DELTA")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qmax", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--sampler", choices=("direct", "background"))
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=False)
    p.add_argument("--config")

    p = sub.add_parser("plot", help="render a sweep or an elbow curve as SVG")
    p.add_argument("--results", help="sweep output directory")
    p.add_argument("--value", choices=("mean_q", "mean_ami"), default="mean_q")
    p.add_argument("--method")
    p.add_argument("--elbow", help="detect diagnostics JSON from --method bp --order mfe")
    p.add_argument("--title")
    p.add_argument("--out")
    p.add_argument("--config")
    return parser


def _load_config(path, subparser):
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
    known = {a.dest for a in subparser._actions}
    out = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "json":
            dest = "json_out"
        if dest not in known or dest in ("help", "config"):
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(value, dict):
            raise UsageError(f"{path}: nested tables are not supported ({key!r})")
        out[dest] = value
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        subparser.set_defaults(**_load_config(args.config, subparser))
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required option(s): " +
                         ", ".join("--" + m.replace("_", "-") for m in missing))


def _model(args):
    from .theory import MinorityModel
    _require(args, "rho", "delta")
    return MinorityModel(args.n, args.qs, args.qb, args.rho, args.delta, args.d, args.scenario)


def cmd_theory(args, out):
    from .sweep import SweepSpec, theory_overlays
    from .theory import closed_form_spectrum, edge_probabilities, expected_degrees
    model = _model(args)
    rep = closed_form_spectrum(model)
    probs = edge_probabilities(model)
    deg = expected_degrees(model)
    print(f"model: n={model.n} q_s={model.q_s} q_b={model.q_b} rho={model.rho:g} "
          f"delta={model.delta:g} d={model.d:g} scenario={model.scenario.value}", file=out)
    print(f"p_in={probs.p_in:.6g} p_out1={probs.p_out1:.6g} p_out2={probs.p_out2:.6g} "
          f"d_s={deg.d_s:.6g} d_b={deg.d_b:.6g}", file=out)
    for k, ((v, m), c) in enumerate(zip(rep.lambdas, rep.contrasts), 1):
        ratio = "" if k == 1 else f"  lambda^2/lambda1={rep.ratio(k):.6g}"
        print(f"lambda{k}={v:.6g} (x{m}, {c}){ratio}", file=out)
    snr = rep.snr2 if rep.snr2 is not None else 0.0
    print(f"SNR={snr:.6g}", file=out)
    print(f"phase={rep.phase.value}", file=out)
    print(f"expected_q={rep.expected_q}", file=out)
    spec = SweepSpec(model.n, model.q_s, model.q_b, model.d, (model.rho,), (model.delta,),
                     scenario=model.scenario.value)
    points = theory_overlays(spec)
    for curve, delta, rho in points:
        print(f"threshold {curve}: rho={rho:.10g} at delta={delta:g}", file=out)
    if args.csv:
        from .sweep import overlays_csv
        Path(args.csv).write_text(overlays_csv(points))
    return EXIT_OK


def cmd_generate(args, out):
    from .graphgen import (sample_consistent_degree, sample_direct, sample_via_background,
                           write_edgelist, write_sidecar)
    _require(args, "out")
    model = _model(args)
    if model.scenario.value == "consistent_degree":
        graph = sample_consistent_degree(model, seed=args.seed)
    elif args.sampler == "background":
        graph = sample_via_background(model, seed=args.seed)
    else:
        graph = sample_direct(model, seed=args.seed)
    edges, side = Path(args.out + ".edges"), Path(args.out + ".json")
    write_edgelist(graph, edges)
    write_sidecar(graph, side, model, {"seed": args.seed, "sampler": args.sampler})
    print(f"wrote {edges} ({graph.m} edges) and {side}", file=out)
    return EXIT_OK


def cmd_detect(args, out):
    from .graphgen import read_edgelist, read_sidecar
    from .metrics import ami, confusion_matrix
    from .sweep import Method, detect
    _require(args, "edges")
    order = args.order or ("nec" if args.method == "bh" else "mfe")
    planted, n = None, None
    if args.sidecar:
        n, planted, _, _ = read_sidecar(args.sidecar)
    graph = read_edgelist(args.edges, n=n, planted=planted)
    method = Method(args.method, order)
    part, q, diag = detect(graph, method, args.seed, q_max=args.qmax, t=args.restarts)
    print(f"method={method.key} q={q}", file=out)
    print("sizes=" + " ".join(str(s) for s in part.sizes()), file=out)
    report = {"method": method.key, "q": int(q), "sizes": part.sizes().tolist(),
              "diagnostics": diag}
    if planted is not None:
        score = ami(planted, part)
        cm = confusion_matrix(planted, part)
        print(f"AMI={score:.6f}", file=out)
        print("confusion (rows planted, columns detected, matched):", file=out)
        for row in cm.proportions:
            print("  " + " ".join(f"{x:.3f}" for x in row), file=out)
        report["ami"] = score
        report["confusion"] = cm.to_dict()
    print("partition=" + " ".join(str(x) for x in part.labels), file=out)
    if args.labels_out:
        Path(args.labels_out).write_text("".join(f"{x}\n" for x in part.labels))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=1, sort_keys=True,
                                                  default=_jsonable) + "\n")
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _parse_probe(text):
    try:
        rho, delta = (float(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"--probe expects RHO,DELTA, got {text!r}") from None
    return rho, delta


def _sweep_spec(args):
    from .sweep import SweepSpec, linear_grid, preset
    if args.preset:
        spec = preset(args.preset, args.scale)
        changes = {}
        for name, field in (("n", "n"), ("qs", "q_s"), ("qb", "q_b"), ("reps", "replicates"),
                            ("qmax", "q_max"), ("restarts", "bp_restarts"),
                            ("sampler", "sampler")):
            if getattr(args, name) is not None:
                changes[field] = getattr(args, name)
        if "n" in changes and changes["n"] != spec.n:
            # keep n*delta fixed so the grid stays on the same spectra
            changes["deltas"] = tuple(x * spec.n / changes["n"] for x in spec.deltas)
            changes["probes"] = tuple((r, x * spec.n / changes["n"]) for r, x in spec.probes)
        spec = spec.with_(**changes)
    else:
        _require(args, "n", "qs", "qb", "rho_min", "rho_max", "rho_steps",
                 "delta_min", "delta_max", "delta_steps")
        spec = SweepSpec(args.n, args.qs, args.qb, args.d,
                         linear_grid(args.rho_min, args.rho_max, args.rho_steps),
                         linear_grid(args.delta_min, args.delta_max, args.delta_steps),
                         scenario=args.scenario)
        changes = {}
        for name, field in (("reps", "replicates"), ("qmax", "q_max"),
                            ("restarts", "bp_restarts"), ("sampler", "sampler")):
            if getattr(args, name) is not None:
                changes[field] = getattr(args, name)
        spec = spec.with_(**changes)
    changes = {"master_seed": args.seed}
    if args.methods:
        changes["methods"] = tuple(m for m in args.methods.split(",") if m)
    if args.probe:
        changes["probes"] = tuple(_parse_probe(p) for p in args.probe)
    try:
        return spec.with_(**changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args, out):
    from .sweep import run_grid
    _require(args, "out")
    spec = _sweep_spec(args)
    config = {k: v for k, v in sorted(vars(args).items()) if k != "threads"}

    def progress(done, total):
        if done == total or done % max(total // 20, 1) == 0:
            print(f"  {done}/{total} tasks", file=sys.stderr, flush=True)

    result = run_grid(spec, args.out, workers=max(args.threads, 1), progress=progress,
                      config=config)
    valid = sum(1 for r in result.rows if r["valid"])
    failed = sum(r["n_fail"] for r in result.rows)
    print(f"sweep {spec.name}: {len(result.rows)} rows ({valid} valid), "
          f"{failed} failed replicates; wrote {args.out}", file=out)
    return EXIT_OK


def cmd_plot(args, out):
    from .svgplot import elbow_svg, heatmap_svg, read_overlays, read_results
    _require(args, "out")
    if args.elbow:
        try:
            doc = json.loads(Path(args.elbow).read_text())
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{args.elbow}: invalid JSON ({exc.msg})") from None
        trace = doc.get("diagnostics", doc).get("trace")
        if not trace:
            raise GraphFormatError(f"{args.elbow}: no free-energy trace (run detect with "
                                   "--method bp --order mfe --json)")
        svg = elbow_svg(trace["q"], trace["f_min"], trace.get("q_star"),
                        args.title or "BP free energy")
    else:
        _require(args, "results")
        root = Path(args.results)
        rows = read_results(root / "results.csv")
        overlays = read_overlays(root / "overlays.csv") if (root / "overlays.csv").exists() else []
        try:
            svg = heatmap_svg(rows, overlays, args.value, args.method, args.title)
        except (KeyError, ValueError) as exc:
            raise GraphFormatError(f"{root / 'results.csv'}: {exc}") from None
    Path(args.out).write_text(svg)
    print(f"wrote {args.out}", file=out)
    return EXIT_OK


COMMANDS = {"theory": cmd_theory, "generate": cmd_generate, "detect": cmd_detect,
            "sweep": cmd_sweep, "plot": cmd_plot}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args, out)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"minority-sbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleParameters as exc:
        print(f"minority-sbm: infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DimensionMismatch as exc:
        print(f"minority-sbm: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIM
    except GraphFormatError as exc:
        print(f"minority-sbm: malformed input: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SolverError as exc:
        print(f"minority-sbm: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"minority-sbm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
