"""Command-line interface: detect, generate, report, compare.

Exit codes: 0 ok, 1 usage error, 2 input error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import metrics
from .engine import InternalError, STOP_NEGATIVE_DQ, STOP_POLICIES, run
from .generators import GenSpec, MODELS, generate
from .graph import ParseError, dump_edge_list, load_edge_list
from .heuristics import HEURISTIC_NAMES, Heuristic
from .metrics import (
    dendrogram_height, q_progress, ratio_series, read_dendrogram,
    read_merge_log, read_partition, scaling_fit, size_histogram, time_buckets,
    write_dendrogram, write_merge_log, write_partition,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

REPORT_KINDS = ("ratio", "buckets", "progress", "hist", "height", "fit")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_input_args(p):
    p.add_argument("--input", help="edge-list file (gzip detected by magic bytes)")
    p.add_argument("--model", choices=MODELS, help="generate the input graph instead")
    p.add_argument("--n", type=int, help="node count for --model")
    p.add_argument("--m-attach", type=int, help="edges per new node (ba model)")
    p.add_argument("--edges", type=int, help="edge count (er model)")
    p.add_argument("--seed", type=int, default=0, help="PRNG seed for --model")
    p.add_argument("--renumber", action="store_true",
                   help="compact arbitrary node ids to 0..n-1")


def build_parser() -> _Parser:
    parser = _Parser(prog="modclust",
                     description="Greedy modularity community detection with "
                                 "balance-aware merge heuristics.")
    sub = parser.add_subparsers(dest="cmd", parser_class=_Parser)

    p = sub.add_parser("detect", help="run community detection on a graph")
    _add_input_args(p)
    p.add_argument("--heuristic", choices=HEURISTIC_NAMES, default="plain")
    p.add_argument("--stop", choices=STOP_POLICIES, default=STOP_NEGATIVE_DQ)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--emit", default="partition,dendrogram,mergelog,summary",
                   help="comma list of artifacts to write")

    p = sub.add_parser("generate", help="emit a synthetic benchmark graph")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-attach", type=int)
    p.add_argument("--edges", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("report", help="tabulate diagnostics from run artifacts")
    p.add_argument("--which", choices=REPORT_KINDS, required=True)
    p.add_argument("--log", help="mergelog.csv (ratio, buckets, progress)")
    p.add_argument("--partition", help="partition.csv (hist)")
    p.add_argument("--dendrogram", help="dendrogram.csv (height)")
    p.add_argument("--summaries", nargs="*", help="summary.json files (fit)")
    p.add_argument("--bucket", type=int, default=10000)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--log-base", type=int, default=10)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default="-", help="output file, '-' for stdout")

    p = sub.add_parser("compare", help="run several heuristics on one graph")
    _add_input_args(p)
    p.add_argument("--heuristics", default="plain,hn",
                   help="comma list, at least two")
    p.add_argument("--stop", choices=STOP_POLICIES, default=STOP_NEGATIVE_DQ)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--parallel", action="store_true",
                   help="run the heuristics concurrently")
    return parser


def _load_input(parser, args):
    """Resolve the one input source of detect/compare into a Graph."""
    if args.input and args.model:
        parser.error("give either --input or --model, not both")
    if not args.input and not args.model:
        parser.error("an input source is required: --input or --model")
    if args.input:
        return load_edge_list(args.input, renumber=args.renumber), None
    spec = _genspec(parser, args)
    return generate(spec), spec


def _genspec(parser, args):
    if args.n is None:
        parser.error("--model requires --n")
    if args.model == "ba" and args.m_attach is None:
        parser.error("ba model requires --m-attach")
    if args.model == "er" and args.edges is None:
        parser.error("er model requires --edges")
    return GenSpec(args.model, args.n, m_attach=args.m_attach,
                   edges=args.edges, seed=args.seed)


def _write_table(args, columns, rows):
    text_rows = [",".join(str(x) for x in row) for row in rows]
    if args.format == "csv":
        payload = ",".join(columns) + "\n" + "".join(r + "\n" for r in text_rows)
    else:
        payload = json.dumps([dict(zip(columns, row)) for row in rows], indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(payload)
    else:
        with open(args.out, "w") as f:
            f.write(payload)


def _summary(result, spec, seed):
    data = {
        "n": result.n,
        "m": result.m,
        "heuristic": result.heuristic,
        "stop": result.stop,
        "merges": result.n_merges,
        "peak_q": result.best_q,
        "peak_q_scaled": result.q_scaled_best,
        "peak_step": result.best_step,
        "final_q": result.final_q,
        "final_q_scaled": result.q_scaled_final,
        "communities_at_peak": len(set(result.best_labels)),
        "communities_final": len(set(result.final_labels)),
        "dendrogram_height": result.dendrogram.height(),
        "elapsed_seconds": result.elapsed_ns / 1e9,
        "seed": seed,
    }
    if spec is not None:
        data["generator"] = spec.metadata()
    return data


def _cmd_detect(parser, args) -> int:
    g, spec = _load_input(parser, args)
    result = run(g, args.heuristic, stop=args.stop)
    emit = set(args.emit.split(","))
    unknown = emit - {"partition", "dendrogram", "mergelog", "summary"}
    if unknown:
        parser.error(f"unknown emit artifacts: {sorted(unknown)}")
    os.makedirs(args.out, exist_ok=True)
    if "partition" in emit:
        write_partition(result.best_labels, os.path.join(args.out, "partition.csv"),
                        id_map=g.id_map)
    if "dendrogram" in emit:
        write_dendrogram(result.dendrogram, os.path.join(args.out, "dendrogram.csv"))
    if "mergelog" in emit:
        write_merge_log(result.merge_log, os.path.join(args.out, "mergelog.csv"))
    summary = _summary(result, spec, args.seed)
    if "summary" in emit:
        with open(os.path.join(args.out, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"{result.heuristic}: {result.n_merges} merges, "
          f"peak Q = {result.best_q:.6f}, elapsed = {result.elapsed_ns / 1e9:.3f}s")
    return EXIT_OK


def _cmd_generate(parser, args) -> int:
    spec = _genspec(parser, args)
    g = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    dump_edge_list(g, os.path.join(args.out, "edges.txt"))
    meta = spec.metadata()
    meta["nodes"] = g.n
    meta["edges_written"] = g.m
    with open(os.path.join(args.out, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {g.n} nodes / {g.m} edges to {args.out}")
    return EXIT_OK


def _cmd_report(parser, args) -> int:
    which = args.which
    if which in ("ratio", "buckets", "progress"):
        if not args.log:
            parser.error(f"report --which {which} requires --log")
        log = read_merge_log(args.log)
        if which == "ratio":
            _write_table(args, ("step", "ratio"), ratio_series(log))
        elif which == "buckets":
            _write_table(args, ("bucket_index", "elapsed_ns", "seconds"),
                         time_buckets(log, args.bucket))
        else:
            _write_table(args, ("elapsed_fraction" if args.normalize else "step", "q"),
                         q_progress(log, normalize=args.normalize))
    elif which == "hist":
        if not args.partition:
            parser.error("report --which hist requires --partition")
        part = read_partition(args.partition)
        _write_table(args, ("size_bin_low", "size_bin_high", "count"),
                     size_histogram(part, log_base=args.log_base))
    elif which == "height":
        if not args.dendrogram:
            parser.error("report --which height requires --dendrogram")
        d = read_dendrogram(args.dendrogram)
        _write_table(args, ("height", "merges", "leaves"),
                     [(dendrogram_height(d), d.n_merges, d.n_leaves)])
    else:  # fit
        if not args.summaries or len(args.summaries) < 3:
            parser.error("report --which fit requires at least 3 --summaries files")
        points = []
        for path in args.summaries:
            with open(path) as f:
                data = json.load(f)
            points.append((data["n"], data["elapsed_seconds"]))
        fit = scaling_fit(points)
        _write_table(args, ("exponent", "coefficient"),
                     [(fit["exponent"], fit["coefficient"])])
    return EXIT_OK


def _cmd_compare(parser, args) -> int:
    names = [h.strip() for h in args.heuristics.split(",") if h.strip()]
    if len(names) < 2:
        parser.error("compare needs at least two heuristics")
    for name in names:
        if name not in HEURISTIC_NAMES:
            parser.error(f"unknown heuristic {name!r}")
    g, spec = _load_input(parser, args)

    def one(name):
        return run(g, name, stop=args.stop)

    if args.parallel:
        with ThreadPoolExecutor(max_workers=len(names)) as pool:
            results = list(pool.map(one, names))
    else:
        results = [one(name) for name in names]

    columns = ("heuristic", "elapsed_seconds", "peak_q", "merges", "dendrogram_height")
    rows = [(r.heuristic, r.elapsed_ns / 1e9, r.best_q, r.n_merges,
             r.dendrogram.height()) for r in results]
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "compare.json" if args.format == "json" else "compare.csv")
    table_args = argparse.Namespace(format=args.format, out=out_path)
    _write_table(table_args, columns, rows)
    for row in rows:
        print(f"{row[0]:>9}: {row[1]:10.3f}s  peak Q = {row[2]:.6f}  "
              f"merges = {row[3]}  height = {row[4]}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd is None:
            parser.error("a subcommand is required")
        if args.cmd == "detect":
            return _cmd_detect(parser, args)
        if args.cmd == "generate":
            return _cmd_generate(parser, args)
        if args.cmd == "report":
            return _cmd_report(parser, args)
        return _cmd_compare(parser, args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except InternalError as exc:
        print(f"modclust: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ParseError, OSError, ValueError, KeyError) as exc:
        print(f"modclust: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
