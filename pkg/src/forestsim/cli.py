"""Command-line front end.

Subcommands: generate, stats, eval, preview.
Exit codes: 0 ok, 1 usage, 2 config/schema error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .annotate import coco_from_json
from .config import ConfigError, load_config_file
from .dataset import compose_preview, dataset_stats, generate_dataset, stats_text
from .evalkit import evaluate, load_detections
from .formats import write_png_rgb

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    env = os.environ.get("FORESTSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def cmd_generate(args) -> int:
    try:
        cfg = load_config_file(args.config)
    except FileNotFoundError as exc:
        print(f"config not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = generate_dataset(cfg, args.out, threads=args.threads)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {manifest['frames']} frames, {len(manifest['trees'])} trees "
          f"-> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        stats = dataset_stats(args.dataset_dir)
    except FileNotFoundError as exc:
        print(f"missing dataset file: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.json:
        print(json.dumps(stats, indent=2))
    else:
        print(stats_text(stats))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        with open(args.gt) as fh:
            dataset = coco_from_json(fh.read())
        detections = load_detections(args.pred)
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = evaluate(dataset, detections)
    except ValueError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        with open(out / "report.txt", "w") as fh:
            fh.write(report.to_table() + "\n")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(report.to_table())
    return EXIT_OK


def cmd_preview(args) -> int:
    try:
        tile = compose_preview(args.dataset_dir, args.frame)
    except FileNotFoundError as exc:
        print(f"missing frame file: {exc}", file=sys.stderr)
        return EXIT_IO
    out = args.out or str(Path(args.dataset_dir) / f"preview_{args.frame}.png")
    try:
        write_png_rgb(out, tile)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forestsim",
                     description="procedural virtual-forest dataset synthesis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="render a dataset from a JSON config")
    gen.add_argument("--config", required=True, help="path to config JSON")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--threads", type=int, default=_default_threads(),
                     help="worker threads for rendering (env FORESTSIM_THREADS)")
    gen.set_defaults(func=cmd_generate)

    st = sub.add_parser("stats", help="summarize a generated dataset")
    st.add_argument("dataset_dir")
    st.add_argument("--json", action="store_true", help="emit JSON instead of text")
    st.set_defaults(func=cmd_stats)

    ev = sub.add_parser("eval", help="score predictions against COCO ground truth")
    ev.add_argument("--gt", required=True, help="ground-truth COCO JSON")
    ev.add_argument("--pred", required=True, help="predictions JSON (COCO results)")
    ev.add_argument("--out", required=True, help="report output directory")
    ev.set_defaults(func=cmd_eval)

    pv = sub.add_parser("preview", help="compose a 2x2 modality tile for one frame")
    pv.add_argument("dataset_dir")
    pv.add_argument("--frame", required=True, help="frame stem, e.g. seq0_00003")
    pv.add_argument("--out", default=None, help="output PNG path")
    pv.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
