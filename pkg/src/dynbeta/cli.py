"""Command-line entry point.

Exit codes: 0 on success, 1 on input/config errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import DynBetaError, NumericalError


def _build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the verb from being reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with ExperimentConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--paper-scale", action="store_true", help="40000/500/3000 records, 5000 epochs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dynbeta", parents=[common], description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    sub.add_parser("generate", parents=[common], help="write synthetic spectra CSVs")

    t = sub.add_parser("train", parents=[common], help="train one VAE variant")
    t.add_argument("--method", default="dynamic-beta-vae", choices=pipeline.VAE_METHODS)

    e = sub.add_parser("embed", parents=[common], help="posterior means of a spectra CSV")
    e.add_argument("model")
    e.add_argument("spectra")
    e.add_argument("-o", "--output", required=True)

    ev = sub.add_parser("evaluate", parents=[common], help="select K, cluster and score an embedding")
    ev.add_argument("embedding")
    ev.add_argument("truth")
    ev.add_argument("--method", default="dynamic-beta-vae")
    ev.add_argument("-o", "--output")

    g = sub.add_parser("latent-grid", parents=[common], help="decode latent grid points")
    g.add_argument("model")
    g.add_argument("grid", help="grid:x0,x1,nx,y0,y1,ny or wheel:radius,spokes,steps")
    g.add_argument("-o", "--output", required=True)

    cs = sub.add_parser("cluster-spectra", parents=[common], help="per-cluster spectra envelopes")
    cs.add_argument("spectra")
    cs.add_argument("embedding")
    cs.add_argument("-k", type=int, help="fixed K (default: silhouette selection)")
    cs.add_argument("-o", "--output", required=True)

    c = sub.add_parser("compare", parents=[common], help="all methods over repeated seeds")
    c.add_argument("--methods", nargs="+", choices=pipeline.METHODS, default=list(pipeline.METHODS))
    return p


def _config(args) -> pipeline.ExperimentConfig:
    path = getattr(args, "config", None)
    cfg = pipeline.ExperimentConfig.load(path) if path else pipeline.ExperimentConfig()
    if getattr(args, "paper_scale", False):
        cfg = cfg.with_paper_scale()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out_dir", None) is not None:
        cfg.out_dir = args.out_dir
    cfg.validate()
    return cfg


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        cfg = _config(args)
        if args.verb == "generate":
            print(pipeline.cmd_generate(cfg))
        elif args.verb == "train":
            print(pipeline.cmd_train(cfg, args.method))
        elif args.verb == "embed":
            print(pipeline.cmd_embed(args.model, args.spectra, args.output))
        elif args.verb == "evaluate":
            result = pipeline.cmd_evaluate(args.embedding, args.truth, cfg, method=args.method, output_path=args.output)
            print(json.dumps(result, sort_keys=True))
        elif args.verb == "latent-grid":
            print(pipeline.cmd_latent_grid(args.model, args.grid, args.output))
        elif args.verb == "cluster-spectra":
            print(pipeline.cmd_cluster_spectra(args.spectra, args.embedding, cfg, args.output, k=args.k))
        elif args.verb == "compare":
            result = pipeline.cmd_compare(cfg, args.methods)
            for e in result["methods"]:
                if e["n_runs"]:
                    print(
                        f"{e['method']:<24} K~{e['k_median']:<5} "
                        f"ARI {e['ari_mean']:.3f}±{e['ari_std']:.3f}  AMI {e['ami_mean']:.3f}±{e['ami_std']:.3f}"
                    )
                else:
                    print(f"{e['method']:<24} all runs failed")
            print(Path(cfg.out_dir) / "comparison.json")
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DynBetaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
