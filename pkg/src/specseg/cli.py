"""Command-line interface.

Subcommands map to pipeline stages::

    specseg run         --manifest M --out DIR [--config C] [--seed N] [--jobs N]
    specseg preprocess  ... (run up to the named stage, reusing caches)
    specseg segment     ...
    specseg cluster     ...
    specseg postprocess ...
    specseg baseline    --method slic|fz --manifest M --out DIR
    specseg evaluate    --run DIR --manifest M [--matching hungarian|majority]

Log verbosity comes from the ``SPECSEG_LOG`` environment variable
(debug, info, warning or error; default warning).
"""

import argparse
import json
import logging
import os
import sys

from .config import load_config
from .errors import SpecsegError
from .pipeline import STAGES, evaluate_run, run_baseline, run_pipeline

log = logging.getLogger("specseg")


def _setup_logging():
    level_name = os.environ.get("SPECSEG_LOG", "warning").strip().lower()
    levels = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }
    level = levels.get(level_name, logging.WARNING)
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def _add_common(parser, need_out=True):
    parser.add_argument("--manifest", required=True, help="dataset manifest path")
    parser.add_argument("--config", default=None, help="config file (defaults apply)")
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers")
    if need_out:
        parser.add_argument("--out", required=True, help="run directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specseg",
        description="Unsupervised spectral segmentation for grayscale images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    stage_upto = {
        "preprocess": ("preprocess",),
        "segment": ("preprocess", "segment"),
        "cluster": ("preprocess", "segment", "cluster"),
        "postprocess": ("preprocess", "segment", "cluster", "postprocess"),
        "run": STAGES,
    }
    for name, stages in stage_upto.items():
        p = sub.add_parser(name, help=f"run the pipeline through the {name} stage"
                           if name != "run" else "run the full pipeline")
        _add_common(p)
        p.set_defaults(stages=stages)

    p = sub.add_parser("baseline", help="segment with a classical baseline")
    _add_common(p)
    p.add_argument("--method", choices=("slic", "fz"), default=None,
                   help="baseline algorithm (default from config)")

    p = sub.add_parser("evaluate", help="score a run directory against ground truth")
    p.add_argument("--run", required=True, help="run directory to score")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--config", default=None, help="config file (defaults apply)")
    p.add_argument("--matching", choices=("hungarian", "majority"), default=None,
                   help="label matching method")
    return parser


def _load_cfg(args):
    cfg = load_config(getattr(args, "config", None))
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg.spectral.seed = seed
    matching = getattr(args, "matching", None)
    if matching is not None:
        cfg.evaluate.matching = matching
    return cfg


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_cfg(args)
        if args.command == "evaluate":
            report = evaluate_run(args.run, args.manifest, cfg)
            json.dump(report, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        if args.command == "baseline":
            result = run_baseline(args.manifest, cfg, args.out, method=args.method)
        else:
            result = run_pipeline(
                args.manifest, cfg, args.out, stages=args.stages, jobs=args.jobs
            )
        for image_id, message in result.errors:
            print(f"error: {image_id}: {message}", file=sys.stderr)
        if result.report is not None:
            json.dump(result.report, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
        return 0 if result.ok else 1
    except SpecsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
