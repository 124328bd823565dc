"""Command-line entry point: ``sgvos synth | run | eval | gradcheck``.

Exit codes: 0 success, 1 partial failure, 2 invalid configuration or usage.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .classifier import grad_check, init_classifier
from .pipeline import ConfigError, Mode, config_from_dict, evaluate_predictions, load_config, run_pipeline
from .synth import SyntheticConfig, synth_generate

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
GRADCHECK_TOLERANCE = 1e-4


def _cmd_synth(args):
    doc = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synth config: {exc}") from exc
    out = args.out or doc.pop("output", None)
    doc.pop("output", None)
    if not out:
        raise ConfigError("no output directory (use --out or an 'output' key)")
    for key in ("seed", "num_sequences", "frames_per_sequence", "image_size", "noise_sigma", "distractor"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    try:
        cfg = SyntheticConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ids = synth_generate(cfg, out)
    print(f"wrote {len(ids)} sequences to {out}")
    return EXIT_OK


def _cmd_run(args):
    cfg = load_config(args.config)
    doc = cfg.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["mode"] = Mode.parse(args.mode).value
    if args.run_id is not None:
        doc["run_id"] = args.run_id
    cfg = config_from_dict(doc)
    if not os.path.isdir(cfg.dataset_root):
        raise ConfigError(f"dataset_root {cfg.dataset_root} does not exist")
    status, run_dir = run_pipeline(cfg, jobs=args.jobs, fmt=args.format)
    print(run_dir)
    return EXIT_OK if status == 0 else EXIT_PARTIAL


def _cmd_eval(args):
    dataset = args.dataset
    if args.config:
        dataset = dataset or load_config(args.config).dataset_root
    if not dataset or not args.preds:
        raise ConfigError("eval needs --dataset (or --config) and --preds")
    if not os.path.isdir(dataset) or not os.path.isdir(args.preds):
        raise ConfigError("dataset or prediction directory does not exist")
    out = args.out or args.preds
    results, failed = evaluate_predictions(dataset, args.preds, out, args.format)
    if results:
        from .evaluation import AGGREGATE_ID, summarize

        j, f = summarize(results)[AGGREGATE_ID]
        print(f"J-M {j.mean:.4f}  J-O {j.recall:.4f}  J-D {j.decay:.4f}  F-M {f.mean:.4f}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    params = init_classifier(args.dim, args.hidden, args.seed)
    features = rng.random((args.size, args.size, args.dim))
    gt = rng.random((args.size, args.size)) < 0.5
    w = rng.random((args.size, args.size))
    err = grad_check(params, features, gt, w, eps=args.eps)
    print(f"max relative error {err:.3e}")
    return EXIT_OK if err < GRADCHECK_TOLERANCE else EXIT_PARTIAL


def build_parser():
    parser = argparse.ArgumentParser(prog="sgvos", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON SyntheticConfig (may include 'output')")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-sequences", dest="num_sequences", type=int)
    p.add_argument("--frames", dest="frames_per_sequence", type=int)
    p.add_argument("--size", dest="image_size", type=int)
    p.add_argument("--noise", dest="noise_sigma", type=float)
    p.add_argument("--distractor", choices=["None", "SameCategory", "SameAppearance"])
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="segment every sequence of a dataset and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", help="conditional | monolithic | prior-only")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--run-id", dest="run_id")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--preds", help="directory holding <sequence_id>/NNNNN.pbm")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric classifier gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--hidden", type=int, default=16)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"sgvos: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
