"""Command-line entry point: train, generate, encode, sample-near, evaluate, diagnose."""
import argparse
import csv
import glob
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import checkpoint_load
from .config import DataSource, EvalConfig, RunConfig
from .data import CsvError, load_csv, load_source, write_csv
from .errors import CheckpointError, ContractError
from .evaluation import (
    METRICS,
    distribution_report,
    encode_dataset,
    evaluate_protocol,
    sample_dataset,
    sample_near,
    write_report_files,
)
from .training import train

log = logging.getLogger("fetsgan")


class CliError(Exception):
    pass


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path} is not valid JSON: {exc}") from None


def _run_config(path, seed=None):
    cfg = RunConfig.from_dict(_read_json(path, "config")) if path else RunConfig()
    if seed is not None:
        cfg.train.seed = seed
    return cfg


def _model_paths(path):
    """Checkpoint files under ``path``: itself, its final.ckpt, or one per run subdirectory."""
    if os.path.isfile(path):
        return [path]
    if os.path.isfile(os.path.join(path, "final.ckpt")):
        return [os.path.join(path, "final.ckpt")]
    found = sorted(glob.glob(os.path.join(path, "*", "final.ckpt")))
    if not found:
        raise CliError(f"no checkpoint found at {path}")
    return found


def _load_model(path):
    return checkpoint_load(_model_paths(path)[0])[0]


def _columns(bundle):
    return bundle.meta.get("columns") or [f"x{i}" for i in range(bundle.data_dim)]


def _dataset(args):
    """Data for encode/evaluate/diagnose: an explicit CSV or the config's data source."""
    if args.data:
        source = DataSource(kind="csv", path=args.data, id_column=args.id_column or "",
                            window=args.window, stride=args.stride)
    else:
        source = _run_config(args.config).data
    return load_source(source)


def _seed(args, default=0):
    return default if args.seed is None else args.seed


def cmd_train(args):
    cfg = _run_config(args.config, args.seed)
    out = args.out or cfg.out_dir
    dataset = load_source(cfg.data)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "resolved_config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    def report(epoch, row):
        log.info("epoch %d %s", epoch, " ".join(f"{k}={v:.4g}" for k, v in row.items()
                                                if isinstance(v, float)))

    meta = {"columns": list(cfg.data.features) or [f"x{i}" for i in range(dataset.dim)],
            "max_length": max(dataset.lengths)}
    bundle, _ = train(cfg.train, dataset, out_dir=out, checkpoint_every=cfg.checkpoint_every,
                      callback=report, meta=meta)
    print(os.path.join(out, "final.ckpt"))
    return 0


def cmd_generate(args):
    bundle = _load_model(args.model)
    steps = args.steps or bundle.meta.get("max_length")
    if not steps:
        raise CliError("checkpoint does not record a sequence length; pass --steps")
    rng = np.random.default_rng(_seed(args))
    ds = sample_dataset(bundle, args.count, steps, rng)
    write_csv(args.out, ds, _columns(bundle))
    return 0


def cmd_encode(args):
    bundle = _load_model(args.model)
    ds = _dataset(args)
    codes = encode_dataset(bundle, ds, np.random.default_rng(_seed(args)))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id"] + [f"z{i}" for i in range(codes.shape[1])])
        for sid, z in zip(ds.ids, codes):
            w.writerow([sid] + [repr(float(v)) for v in z])
    return 0


def cmd_sample_near(args):
    bundle = _load_model(args.model)
    anchor = load_csv(args.anchor, None, args.id_column or None)
    if len(anchor) != 1:
        raise CliError(f"anchor file {args.anchor} holds {len(anchor)} sequences, expected one")
    ds, info = sample_near(bundle, anchor[0], args.noise_std, args.count, np.random.default_rng(_seed(args)))
    if info["untrained"]:
        log.warning("model has no recorded training epochs")
    write_csv(args.out, ds, _columns(bundle))
    with open(args.out + ".latent.json", "w", encoding="utf-8") as fh:
        json.dump(info, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def cmd_evaluate(args):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise CliError(f"unknown metric(s) {unknown}; valid names: {', '.join(METRICS)}")
    bundles = [checkpoint_load(p)[0] for p in _model_paths(args.model)]
    eval_cfg = EvalConfig.from_dict(_read_json(args.eval_config, "eval config")) if args.eval_config else EvalConfig()
    real = _dataset(args)
    report = evaluate_protocol(bundles, real, metrics, eval_cfg, _seed(args), args.models, args.samples)
    report.save(args.out)
    return 0


def cmd_diagnose(args):
    bundle = _load_model(args.model)
    real = _dataset(args)
    syn = sample_dataset(bundle, len(real), min(real.lengths), np.random.default_rng(_seed(args)))
    report = distribution_report(real, syn)
    for path in write_report_files(report, args.out):
        print(path)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fetsgan", description="Train and evaluate sequence autoencoder GANs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help, model=True):
        sp.add_argument("--config", help="flat JSON run config")
        sp.add_argument("--seed", type=int, help="overrides the run or sampling seed")
        sp.add_argument("--out", required=out_help is not None, help=out_help)
        if model:
            sp.add_argument("--model", required=True, help="checkpoint file or run directory")

    def data_args(sp):
        sp.add_argument("--data", help="CSV file (default: the config's data source)")
        sp.add_argument("--id-column", default="", help="CSV column grouping rows into sequences")
        sp.add_argument("--window", type=int, default=24, help="window length for single-series CSV")
        sp.add_argument("--stride", type=int, default=1)

    sp = sub.add_parser("train", help="fit a model from a run config")
    common(sp, None, model=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="decode prior draws to CSV")
    common(sp, "output CSV")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--steps", type=int, help="sequence length (default: longest training sequence)")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("encode", help="write latent codes of a dataset")
    common(sp, "output CSV")
    data_args(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("sample-near", help="sample around an anchor sequence's latent code")
    common(sp, "output CSV (latent code goes to OUT.latent.json)")
    sp.add_argument("--anchor", required=True, help="CSV holding one sequence")
    sp.add_argument("--id-column", default="")
    sp.add_argument("--noise-std", type=float, default=0.1)
    sp.add_argument("--count", type=int, default=100)
    sp.set_defaults(func=cmd_sample_near)

    sp = sub.add_parser("evaluate", help="discriminative and predictive scores")
    common(sp, "output JSON report")
    data_args(sp)
    sp.add_argument("--metrics", default=",".join(METRICS), help=f"comma list from {', '.join(METRICS)}")
    sp.add_argument("--models", type=int, help="trained models per protocol (default 3)")
    sp.add_argument("--samples", type=int, help="sample draws per model (default 5)")
    sp.add_argument("--eval-config", help="JSON overrides for the classifier/forecaster")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("diagnose", help="distribution diagnostics as CSV")
    common(sp, "output directory")
    data_args(sp)
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ContractError, CsvError, CheckpointError) as exc:
        print(f"fetsgan {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"fetsgan {args.command}: error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
