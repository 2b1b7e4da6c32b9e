"""Command-line entry point: ``diffuse <command> [options]``.

Commands: net-gen, simulate, infer, baseline, evaluate, report. Diagnostics
go to stderr; set ``DIFFUSE_LOG`` to error, info or debug.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import analysis
from .baselines import baseline_dict, naive_event_profile, naive_exposure_curve
from .exposure import ExposureCurve
from .hazards import parse_hazard
from .inference import FitOptions, fit
from .network import generate_preferential_attachment, load_edges, save_edges
from .simulator import SimulationConfig, load_profile_csv, simulate, truth_dict
from .trace import load_infections, save_infections

log = logging.getLogger("diffuse")

EXIT_OK, EXIT_PARTIAL, EXIT_ERROR = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("DIFFUSE_LOG", "error").strip().lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _write_json(data, path) -> None:
    text = json.dumps(data, indent=1) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_net_gen(args) -> int:
    if args.model != "pa":
        raise ValueError(f"unknown model {args.model!r}")
    net = generate_preferential_attachment(args.nodes, args.m, seed=args.seed)
    if args.out is None:
        src, dst = net.edges()
        sys.stdout.writelines(f"{u}\t{v}\n" for u, v in zip(src.tolist(), dst.tolist()))
    else:
        save_edges(net, args.out)
    log.info("wrote %d nodes, %d edges", net.n, net.edge_count)
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = load_edges(args.edges, n=args.nodes)
    profile = load_profile_csv(args.profile)
    horizon = args.horizon if args.horizon is not None else float(profile.times[-1])
    cfg = SimulationConfig(net, ExposureCurve(args.rho1, args.rho2), profile, parse_hazard(args.hazard),
                           horizon, dt=args.dt, seed=args.seed)
    res = simulate(cfg)
    save_infections(res.trace, args.out)
    if args.truth:
        _write_json(truth_dict(cfg.curve, profile, res), args.truth)
    log.info("%d infections (%d external)", len(res.trace), len(res.external_infections))
    return EXIT_OK


def _fit_one(edges, nodes, infections, hazard, opts, out):
    net = load_edges(edges, n=nodes)
    trace = load_infections(infections)
    start = time.perf_counter()
    result = fit(net, trace, parse_hazard(hazard), opts)
    log.info("%s: fit in %.2f s", infections, time.perf_counter() - start)
    _write_json(result.to_json(), out)
    if out is not None:
        analysis.write_node_sidecar(result, analysis.sidecar_path(out))
    return out


def cmd_infer(args) -> int:
    opts = FitOptions(anchors=args.anchors, rho2_max=args.rho2_max)
    if not os.path.isdir(args.infections):
        _fit_one(args.edges, args.nodes, args.infections, args.hazard, opts, args.out)
        return EXIT_OK
    if args.out is None:
        raise ValueError("--out must name a directory when --infections is a directory")
    os.makedirs(args.out, exist_ok=True)
    inputs = sorted(glob.glob(os.path.join(args.infections, "*.tsv")))
    if not inputs:
        raise ValueError(f"no .tsv files in {args.infections}")
    failed = 0
    with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = {}
        for path in inputs:
            name = os.path.splitext(os.path.basename(path))[0]
            out = os.path.join(args.out, name + ".json")
            futures[path] = pool.submit(_fit_one, args.edges, args.nodes, path, args.hazard, opts, out)
        for path, fut in futures.items():
            try:
                fut.result()
            except Exception as exc:  # one bad contagion must not stop the batch
                failed += 1
                log.error("%s: %s", path, exc)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_baseline(args) -> int:
    net = load_edges(args.edges, n=args.nodes)
    trace = load_infections(args.infections)
    width = trace.t_max / args.bins if trace.t_max > 0 else 1.0
    curve = naive_exposure_curve(net, trace)
    profile = naive_event_profile(net, trace, width)
    _write_json(baseline_dict(curve, profile), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    baseline = _read_json(args.baseline) if args.baseline else None
    _write_json(analysis.evaluate(_read_json(args.result), _read_json(args.truth), baseline), args.out)
    return EXIT_OK


def _read_labels(path) -> dict:
    labels = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            name = os.path.splitext(os.path.basename(row["file"]))[0]
            labels[name] = row["category"]
    return labels


def cmd_report(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.results, "*.json")))
    if not paths:
        raise ValueError(f"no result files in {args.results}")
    results, failed = [], 0
    for path in paths:
        try:
            results.append(analysis.load_result(path))
        except (OSError, ValueError, KeyError) as exc:
            failed += 1
            log.error("%s: %s", path, exc)
    if not results:
        raise ValueError("no readable result files")
    labels = _read_labels(args.labels) if args.labels else None
    report = analysis.aggregate_report(results, labels)
    if args.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(analysis.REPORT_HEADER)
        w.writerows([[row[k] for k in analysis.REPORT_HEADER] for row in report.rows])
    else:
        analysis.write_report_csv(report, args.out)
    if args.plots:
        analysis.write_plot_data(report, args.plots)
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffuse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("net-gen", help="generate a network")
    q.add_argument("--model", default="pa", choices=["pa"])
    q.add_argument("--nodes", type=int, required=True)
    q.add_argument("--m", type=int, default=2)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_net_gen)

    q = sub.add_parser("simulate", help="simulate one contagion")
    q.add_argument("--edges", required=True)
    q.add_argument("--nodes", type=int, help="node count if trailing ids are isolated")
    q.add_argument("--rho1", type=float, required=True)
    q.add_argument("--rho2", type=float, required=True)
    q.add_argument("--profile", required=True, help="CSV with columns t,lambda")
    q.add_argument("--hazard", default="linear:1")
    q.add_argument("--dt", type=float)
    q.add_argument("--horizon", type=float, help="hours; default is the last profile time")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.add_argument("--truth")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("infer", help="fit the model to one trace or a directory of traces")
    q.add_argument("--edges", required=True)
    q.add_argument("--nodes", type=int)
    q.add_argument("--infections", required=True, help="TSV file or directory of TSV files")
    q.add_argument("--hazard", default="reciprocal:0.14,1")
    q.add_argument("--anchors", type=int, default=20)
    q.add_argument("--rho2-max", type=int, default=20)
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--out")
    q.set_defaults(func=cmd_infer)

    q = sub.add_parser("baseline", help="naive exposure curve and event profile")
    q.add_argument("--edges", required=True)
    q.add_argument("--nodes", type=int)
    q.add_argument("--infections", required=True)
    q.add_argument("--bins", type=int, default=40)
    q.add_argument("--out")
    q.set_defaults(func=cmd_baseline)

    q = sub.add_parser("evaluate", help="compare a result with ground truth")
    q.add_argument("--result", required=True)
    q.add_argument("--truth", required=True)
    q.add_argument("--baseline")
    q.add_argument("--out")
    q.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("report", help="aggregate a directory of results")
    q.add_argument("--results", required=True)
    q.add_argument("--labels")
    q.add_argument("--out")
    q.add_argument("--plots", help="prefix for figure data CSVs")
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"diffuse {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
