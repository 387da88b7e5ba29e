"""Command-line interface: ``graphlef {score,evaluate,synth,graph-dump}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dataset import (
    DatasetError,
    ROAD_CLASSES,
    dataset_to_csv,
    gen_gaussian_with_planted_outlier,
    gen_synthetic_road_rasters,
    load_dataset,
    road_proxy_dataset,
)
from .evaluation import compare_methods, report_to_csv, report_to_json, write_plot_data
from .knn import build_neighbor_index
from .scores import METHODS, compute_score, get_method, scores_to_csv
from .similarity import (
    BH_SNE,
    UMAP,
    CalibrationError,
    build_bh_sne_graph,
    build_umap_graph,
    dump_graph,
    normalize_umap_weights,
)

log = logging.getLogger("graphlef")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(Exception):
    pass


def parse_k(text):
    """``"30"``, ``"5,15,40"`` or ``"3..100"`` (inclusive) -> ascending list."""
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            ks = list(range(int(a), int(b) + 1))
        else:
            ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid k specification {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError(f"k values must be positive, got {text!r}")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise argparse.ArgumentTypeError(f"k values must be strictly ascending, got {text!r}")
    return ks


def _methods(names):
    try:
        return [get_method(n).name for n in names]
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _single_k(ks):
    if len(ks) != 1:
        raise UsageError(f"this command takes a single k, got {len(ks)} values")
    return ks[0]


def _load(path):
    return load_dataset(path)


def cmd_score(args):
    methods = _methods(args.method or ["ulef"])
    k = _single_k(args.k)
    data = _load(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = build_neighbor_index(data.features, k, n_jobs=args.threads)
    for name in methods:
        res = compute_score(name, index, features=data.features, n_jobs=args.threads)
        stem = out / f"{name}_k{k}"
        if args.format == "json":
            doc = {
                "method": res.method,
                "k": res.k,
                "orientation": res.orientation,
                "scores": res.values.tolist(),
            }
            stem.with_suffix(".json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
        else:
            scores_to_csv(res, stem.with_suffix(".csv"))
        log.info("wrote %s", stem)
    if args.dump_graph:
        for kind in sorted({BH_SNE if m in ("tlef", "tslef", "knnsos") else UMAP for m in methods}):
            _dump(index, kind, out, normalized=(kind == UMAP))
    return EXIT_OK


def cmd_evaluate(args):
    methods = _methods(args.method or ["ulef"])
    report = None
    for path in args.data:
        data = _load(path)
        if data.n_outliers == 0:
            raise DatasetError(f"{path}: no outliers, nothing to evaluate")
        r = compare_methods(data, methods, args.k, n_jobs=args.threads)
        report = r if report is None else report.merged(r)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        report_to_json(report, out / "report.json")
    else:
        report_to_csv(report, out / "report.csv")
    write_plot_data(report, out / "plot")
    for c in report.cells:
        if c.error:
            log.warning("%s/%s failed: %s", c.dataset, c.method, c.error)
        else:
            a = c.aggregate
            print(
                f"{c.dataset:>20s} {c.method:>7s}  auc_max={a.auc_max:.4f}±{a.auc_max_std:.4f}"
                f"  auc_avg={a.auc_avg:.4f}±{a.auc_avg_std:.4f}  trials={len(c.curves)}"
            )
    return EXIT_OK


def cmd_synth(args):
    gen = args.generator
    if gen == "gaussian":
        data = gen_gaussian_with_planted_outlier(args.m, args.dims, args.offset, seed=args.seed)
    elif gen == "road":
        data = gen_synthetic_road_rasters(args.road_class, args.count, seed=args.seed)
    else:
        data = road_proxy_dataset(args.n_inliers, args.n_outliers, seed=args.seed)
    out = Path(args.out)
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{data.name}.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    dataset_to_csv(data, out)
    print(out)
    return EXIT_OK


def _dump(index, kind, out, normalized):
    if kind == BH_SNE:
        graph = build_bh_sne_graph(index)
    else:
        graph = build_umap_graph(index)
        if normalized:
            graph = normalize_umap_weights(graph)
    path, side = dump_graph(graph, Path(out) / f"{kind}_k{index.k}.txt")
    n_flag = int(graph.flagged.sum())
    if n_flag:
        log.warning("%d of %d rows hit the calibration bound", n_flag, graph.n_samples)
    return path, side


def cmd_graph_dump(args):
    k = _single_k(args.k)
    data = _load(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = build_neighbor_index(data.features, k, n_jobs=args.threads)
    for p in _dump(index, args.kind, out, args.normalized):
        print(p)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="graphlef", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    methods_help = f"score method, repeatable ({', '.join(METHODS)})"

    s = sub.add_parser("score", parents=[common], help="score every point of a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--method", action="append", help=methods_help)
    s.add_argument("--k", type=parse_k, required=True)
    s.add_argument("--dump-graph", action="store_true", help="also dump the similarity graph")
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("evaluate", parents=[common], help="one-outlier AUC sweep over k")
    e.add_argument("--data", action="append", required=True)
    e.add_argument("--method", action="append", help=methods_help)
    e.add_argument("--k", type=parse_k, default=parse_k("3..100"))
    e.set_defaults(func=cmd_evaluate)

    y = sub.add_parser("synth", parents=[common], help="write a synthetic dataset as CSV")
    y.add_argument("--generator", choices=("gaussian", "road", "road-proxy"), required=True)
    y.add_argument("--m", type=int, default=50, help="gaussian: number of inliers")
    y.add_argument("--dims", type=int, default=2, help="gaussian: dimensions")
    y.add_argument("--offset", type=float, default=10.0, help="gaussian: outlier offset")
    y.add_argument("--road-class", choices=ROAD_CLASSES, default="straight_multilane")
    y.add_argument("--count", type=int, default=100, help="road: number of rasters")
    y.add_argument("--n-inliers", type=int, default=500, help="road-proxy: inliers")
    y.add_argument("--n-outliers", type=int, default=50, help="road-proxy: outliers")
    y.set_defaults(func=cmd_synth)

    g = sub.add_parser("graph-dump", parents=[common], help="dump i j weight triples")
    g.add_argument("--data", required=True)
    g.add_argument("--kind", choices=(UMAP, BH_SNE), default=UMAP)
    g.add_argument("--k", type=parse_k, required=True)
    g.add_argument("--normalized", action="store_true", help="umap: divide by log2(k)")
    g.set_defaults(func=cmd_graph_dump)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"graphlef: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as exc:
        print(f"graphlef: calibration failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, OSError, ValueError) as exc:
        print(f"graphlef: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
