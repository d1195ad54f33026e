"""Command line interface: ``cluster``, ``select-r``, ``simulate`` and ``plot``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  When ``--out`` is
omitted the directory named by ``SUPCLUST_OUT`` is used.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io, svg
from .core import ConfigurationError, SupOptions, UsageError
from .datagen import LabeledDataset
from .evaluate import evaluate, pca_components
from .experiments import (ALGOS, DESIGN_DEFAULTS, aggregate, format_report, make_design,
                          run_algorithm, simulate)
from .params import (DEFAULT_MIN_PROMINENCE, find_valleys, frequency_polygon,
                     pairwise_distances, valley_r)

log = logging.getLogger("supclust")

OUT_ENV = "SUPCLUST_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliUsageError(Exception):
    pass


def _add_source(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="CSV file of points")
    src.add_argument("--gen", choices=["triplets", "noise", "grid", "unbalanced"],
                     help="named synthetic generator")
    p.add_argument("--n-noise", type=int, help="scattered points for --gen noise (default 50)")
    p.add_argument("--rotation", type=float, help="degrees for --gen unbalanced (default 45)")
    p.add_argument("--truth-column", help="name or index of a ground-truth column")
    p.add_argument("--noise-column", help="name or index of a 0/1 noise column")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="supclust", description="Clustering by the self-updating process")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="cluster one dataset", argument_default=None)
    _add_source(c)
    c.add_argument("--algo", choices=ALGOS)
    c.add_argument("--r", type=float, help="explicit influential range")
    c.add_argument("--r-policy", help="'valley' or 'pct:<q>'")
    c.add_argument("--valley-policy", choices=["first", "sharpest"])
    c.add_argument("--bins", type=int)
    c.add_argument("--min-prominence", type=float)
    c.add_argument("--temp", help="'static:<T>' or 'dynamic:<s>'")
    c.add_argument("--eps", type=float)
    c.add_argument("--max-iter", type=int)
    c.add_argument("--merge-tol", type=float)
    c.add_argument("--mode", choices=["sequential", "fast"])
    c.add_argument("--normalize", choices=["none", "zscore"])
    c.add_argument("--k", type=int, help="clusters for kmeans / hierarchical / centroid_sup")
    c.add_argument("--n-init", type=int)
    c.add_argument("--linkage", choices=["single", "complete", "centroid"])
    c.add_argument("--tseng-p", type=int, help="k-means initial centres from a k*p hierarchical cut")
    c.add_argument("--trajectory", action="store_true", default=None, help="save iterate snapshots")
    c.add_argument("--snapshot-stride", type=int)
    c.add_argument("--config", help="JSON run configuration; flags override it")
    c.add_argument("--out")

    s = sub.add_parser("select-r", help="frequency polygon of pairwise distances")
    _add_source(s)
    s.add_argument("--bins", type=int)
    s.add_argument("--min-prominence", type=float, default=DEFAULT_MIN_PROMINENCE)
    s.add_argument("--valley-policy", choices=["first", "sharpest"], default="first")
    s.add_argument("--out")

    m = sub.add_parser("simulate", help="replicated simulation study")
    m.add_argument("--design", required=True, choices=sorted(DESIGN_DEFAULTS))
    m.add_argument("--runs", type=int, required=True)
    m.add_argument("--algos", required=True, help="comma-separated algorithm tokens")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--n-noise", default="50", help="noise level(s) for the noise design, e.g. 10,50")
    m.add_argument("--rotation", type=float, default=45.0)
    m.add_argument("--r", type=float)
    m.add_argument("--r-policy")
    m.add_argument("--temp")
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--out")

    p = sub.add_parser("plot", help="SVG figures from a cluster run directory")
    p.add_argument("--input", required=True, help="run directory written by 'cluster'")
    p.add_argument("--kind", required=True, choices=["scatter", "polygon", "trajectory", "heatmap"])
    p.add_argument("--frame", type=int, help="trajectory step to draw (default: all saved)")
    p.add_argument("--pc", type=int, default=2, help="principal components used when p > 2")
    p.add_argument("--out", help="output file (single figure) or directory")
    return ap


def _out_dir(arg, required=True):
    path = arg or os.environ.get(OUT_ENV)
    if path is None:
        if required:
            raise CliUsageError(f"--out is required (or set {OUT_ENV})")
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_source(input_path, gen, seed, n_noise, rotation, truth_column, noise_column) -> LabeledDataset:
    if input_path:
        if not Path(input_path).is_file():
            raise CliUsageError(f"input file not found: {input_path}")
        return io.read_csv(input_path, truth_column=truth_column, noise_column=noise_column)
    if gen:
        params = {}
        if gen == "noise":
            params["n_noise"] = 50 if n_noise is None else n_noise
        if gen == "unbalanced":
            params["rotation"] = 45.0 if rotation is None else rotation
        return make_design(gen, seed or 0, **params)
    raise CliUsageError("give --input <csv> or --gen <name>")


def cmd_cluster(args) -> int:
    cfg = io.RunConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise CliUsageError(f"config file not found: {args.config}")
        cfg = io.RunConfig.load(args.config)
    flags = {
        "algo": args.algo, "input": args.input, "gen": args.gen, "seed": args.seed,
        "truth_column": args.truth_column, "noise_column": args.noise_column, "r": args.r,
        "r_policy": args.r_policy, "valley_policy": args.valley_policy, "bins": args.bins,
        "min_prominence": args.min_prominence, "temp": args.temp, "eps": args.eps,
        "max_iter": args.max_iter, "merge_tol": args.merge_tol, "mode": args.mode,
        "normalize": args.normalize, "k": args.k, "n_init": args.n_init, "linkage": args.linkage,
        "tseng_p": args.tseng_p, "trajectory": args.trajectory,
        "snapshot_stride": args.snapshot_stride, "out": args.out,
    }
    if args.input or args.gen:
        # a source flag replaces whichever source the config named
        cfg.input, cfg.gen = None, None
    for key, val in flags.items():
        if val is not None:
            setattr(cfg, key, val)
    gen_params = dict(cfg.gen_params)
    if args.n_noise is not None:
        gen_params["n_noise"] = args.n_noise
    if args.rotation is not None:
        gen_params["rotation"] = args.rotation
    cfg.gen_params = gen_params
    if cfg.r is not None and cfg.r_policy is not None:
        raise CliUsageError("--r and --r-policy are mutually exclusive")
    out = _out_dir(cfg.out)
    cfg.out = str(out)

    ds = _load_source(cfg.input, cfg.gen, cfg.seed, gen_params.get("n_noise"),
                      gen_params.get("rotation"), cfg.truth_column, cfg.noise_column)
    points = io.zscore_normalize(ds.points) if cfg.normalize == "zscore" else ds.points
    opts = SupOptions(convergence_eps=cfg.eps, max_iterations=cfg.max_iter, merge_tol=cfg.merge_tol,
                      record_trajectory=cfg.trajectory, snapshot_stride=cfg.snapshot_stride,
                      mode=cfg.mode)
    outcome = run_algorithm(points, cfg.algo, r=cfg.r, r_policy=cfg.r_policy, temp=cfg.temp, k=cfg.k,
                            n_init=cfg.n_init, linkage=cfg.linkage, tseng_p=cfg.tseng_p,
                            seed=cfg.seed, opts=opts, bins=cfg.bins,
                            min_prominence=cfg.min_prominence, valley_policy=cfg.valley_policy)

    cfg.save(out / "config.json")
    io.write_csv(out / "points.csv", LabeledDataset(points, ds.truth, ds.noise_mask, ds.seed, ds.name))
    io.write_labels(out / "labels.csv", outcome.labels)
    p = points.shape[1]
    if outcome.representatives is not None:
        io.write_matrix(out / "representatives.csv", outcome.representatives,
                        [f"x{j + 1}" for j in range(p)])
    if outcome.sup is not None and outcome.sup.trajectory is not None:
        tdir = out / "trajectory"
        tdir.mkdir(exist_ok=True)
        for step, frame in zip(outcome.sup.trajectory_steps, outcome.sup.trajectory):
            io.write_matrix(tdir / f"step_{step:06d}.csv", frame, [f"x{j + 1}" for j in range(p)])
    if outcome.merge_tree is not None:
        with (out / "merges.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "groups", "distance"])
            for e in outcome.merge_tree.events:
                w.writerow([e.step, "|".join(" ".join(map(str, g)) for g in e.groups), io.fmt(e.distance)])

    ev = evaluate(points, outcome.labels, ds.truth, ds.noise_mask if ds.noise_mask.any() else None)
    sizes = np.bincount(outcome.labels)
    record = {"algo": cfg.algo, "n_points": points.shape[0], "dim": p, "n_clusters": ev.n_clusters,
              "cluster_sizes": sorted(sizes.tolist(), reverse=True)}
    record.update(outcome.info)
    record["total_withinss"] = ev.total_withinss
    record["tiny_cluster_sizes"] = ev.tiny_cluster_sizes
    if ds.truth is not None:
        record.update(n_mistakes=ev.n_mistakes, accuracy=ev.accuracy, correct_run=ev.correct_run)
    io.write_record(out / "summary.txt", record)
    sys.stdout.write((out / "summary.txt").read_text())
    return EXIT_OK


def cmd_select_r(args) -> int:
    ds = _load_source(args.input, args.gen, args.seed, args.n_noise, args.rotation,
                      args.truth_column, args.noise_column)
    d = pairwise_distances(ds.points)
    poly = frequency_polygon(d, args.bins)
    report = find_valleys(poly, args.min_prominence)
    chosen = valley_r(d, args.bins, args.min_prominence, policy=args.valley_policy)
    print(f"bins={poly.counts.size} bin_width={io.fmt(poly.bin_width)}")
    print("valleys (distance, sharpness):")
    for dist, sharp in report.valleys:
        print(f"  {dist:.4f}  {sharp:g}")
    print("peaks: " + ", ".join(f"{v:.4f}" for v in report.peaks))
    print(f"selected r ({args.valley_policy}): {chosen:.6g}")
    out = _out_dir(args.out, required=False)
    if out is not None:
        io.write_matrix(out / "polygon.csv", np.column_stack([poly.bin_midpoints, poly.counts]),
                        ["bin_midpoint", "count"])
        (out / "polygon.svg").write_text(svg.polygon_svg(
            poly.bin_midpoints, poly.counts, [v for v, _ in report.valleys], report.peaks,
            title="Frequency polygon of pairwise distances"))
    return EXIT_OK


def cmd_simulate(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    if args.r is not None and args.r_policy is not None:
        raise CliUsageError("--r and --r-policy are mutually exclusive")
    try:
        levels = [int(v) for v in args.n_noise.split(",")] if args.design == "noise" else [None]
    except ValueError:
        raise CliUsageError(f"bad --n-noise {args.n_noise!r}") from None
    out = _out_dir(args.out, required=False)
    records, text = [], []
    for level in levels:
        recs = simulate(args.design, args.runs, algos, args.seed, n_noise=level or 0,
                        rotation=args.rotation, r=args.r, r_policy=args.r_policy, temp=args.temp,
                        jobs=args.jobs)
        records.extend(recs)
        head = f"design={args.design} runs={args.runs} seed={args.seed}"
        if level is not None:
            head += f" n_noise={level}"
        text.append(format_report(args.design, aggregate(recs), head))
    report = "\n".join(text)
    sys.stdout.write(report)
    if out is not None:
        keys = list(records[0].keys())
        with (out / "runs.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for rec in records:
                w.writerow({k: io._record_value(v) for k, v in rec.items()})
        (out / "report.txt").write_text(report)
    return EXIT_OK


def _run_dir_data(run: Path):
    if not (run / "points.csv").is_file():
        raise CliUsageError(f"{run} is not a cluster run directory (points.csv missing)")
    ds = io.read_dataset_csv(run / "points.csv")
    labels = io.read_labels(run / "labels.csv") if (run / "labels.csv").is_file() else None
    return ds, labels


def cmd_plot(args) -> int:
    run = Path(args.input)
    ds, labels = _run_dir_data(run)
    pts = ds.points
    project = None
    if pts.shape[1] > 2:
        mean, comps, _ = pca_components(pts, min(args.pc, pts.shape[1]))
        project = lambda a: (np.asarray(a) - mean) @ comps.T
    view = project(pts) if project else pts
    out_arg = Path(args.out) if args.out else run / "plots"

    def target(name):
        if args.out and out_arg.suffix == ".svg":
            out_arg.parent.mkdir(parents=True, exist_ok=True)
            return out_arg
        out_arg.mkdir(parents=True, exist_ok=True)
        return out_arg / name

    if args.kind == "scatter":
        target("scatter.svg").write_text(svg.scatter_svg(view, labels, "Clusters", ds.noise_mask))
    elif args.kind == "polygon":
        poly = frequency_polygon(pairwise_distances(pts))
        rep = find_valleys(poly)
        target("polygon.svg").write_text(svg.polygon_svg(
            poly.bin_midpoints, poly.counts, [v for v, _ in rep.valleys], rep.peaks,
            "Frequency polygon of pairwise distances"))
    elif args.kind == "trajectory":
        frames = sorted((run / "trajectory").glob("step_*.csv"))
        if not frames:
            raise CliUsageError("no trajectory saved; rerun 'cluster' with --trajectory")
        steps = {int(f.stem.split("_")[1]): f for f in frames}
        wanted = [args.frame] if args.frame is not None else sorted(steps)
        for step in wanted:
            if step not in steps:
                raise CliUsageError(f"no snapshot for step {step}; saved: {sorted(steps)}")
        lims = (svg._limits(view[:, 0]), svg._limits(view[:, 1])) if view.shape[1] > 1 else None
        for step in wanted:
            frame = np.loadtxt(steps[step], delimiter=",", skiprows=1, ndmin=2)
            fv = project(frame) if project else frame
            target(f"trajectory_{step:06d}.svg").write_text(
                svg.scatter_svg(fv, labels, f"t = {step}", ds.noise_mask, limits=lims))
    else:
        if labels is None:
            raise CliUsageError("heatmap needs labels.csv")
        target("heatmap.svg").write_text(svg.heatmap_svg(pts, labels, "Clustered rows"))
    return EXIT_OK


COMMANDS = {"cluster": cmd_cluster, "select-r": cmd_select_r, "simulate": cmd_simulate, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:        # argparse: 0 for --help, 2 for bad flags
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliUsageError, UsageError, ConfigurationError) as exc:
        print(f"supclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (io.ParseError, OSError, ValueError) as exc:
        print(f"supclust {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
