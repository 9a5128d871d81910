"""Command-line entry point: ``bulkalloc {gen-data,train,eval,sweep,report}``.

Exit codes: 0 success, 1 configuration error, 2 runtime/training error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import losses
from .channel_sim import SimConfig, derive_stream, generate_realizations
from .checkpoint import CheckpointError, save_checkpoint
from .experiment import (
    FULL_RETRAINS,
    ConfigError,
    evaluate_only,
    parse_config,
    read_results_csv,
    rows_to_csv,
    run_experiment,
)
from .model import TrainingError
from .training import TrainConfig, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("bulkalloc")


def _sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--gamma-th", type=float, default=1.2)
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--R", type=int, default=16)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--rate-agg", choices=("mean", "min"), default="mean")


def _sim_from(args) -> SimConfig:
    try:
        return SimConfig(
            R=args.R,
            k=args.k,
            gamma_th=args.gamma_th,
            snr_db=args.snr_db,
            rate_agg=args.rate_agg,
            master_seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gen_data(args) -> int:
    sim = _sim_from(args)
    data = generate_realizations(sim, derive_stream(sim.master_seed, args.stream, 0, 0), args.n)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["realization_id", "resource_id", "C_i", "y_i"])
        for i in range(len(data)):
            for r in range(sim.R):
                writer.writerow([i, r, f"{data.rates[i, r]:.6g}", int(data.y[i, r])])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_train(args) -> int:
    if args.loss not in losses.loss_kinds():
        raise ConfigError(f"--loss: unknown loss {args.loss!r}")
    sim = _sim_from(args)
    tcfg = TrainConfig(
        loss=args.loss,
        D=args.D,
        q_th=args.q_th,
        epochs=args.epochs,
        batches_per_epoch=args.batches,
        retrain=args.retrain,
    )
    ckpt, history = train(sim, tcfg)
    save_checkpoint(ckpt, args.out)
    print(f"saved {args.out}; final train loss {history.train_loss[-1] if history.train_loss else float('nan'):.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    row = evaluate_only(
        args.checkpoint,
        q_th=args.q_th,
        D=args.D,
        snr_db=args.snr_db,
        gamma_th=args.gamma_th,
        n_test=args.n_test,
        seed=args.seed,
    )
    text = rows_to_csv([row])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    overrides = {}
    if args.paper_scale:
        overrides["retrains"] = FULL_RETRAINS
    if args.retrains is not None:
        overrides["retrains"] = args.retrains
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.output is not None:
        overrides["output_dir"] = args.output
    if args.n_test is not None:
        overrides["n_test"] = args.n_test
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    result = run_experiment(cfg, workers=args.workers, plots=not args.no_plots)
    print(f"wrote {result.csv_path} ({len(result.rows)} rows)")
    for p in result.plots:
        print(f"wrote {p}")
    if result.failures:
        print(f"{len(result.failures)} training run(s) diverged; their rows carry nan metrics", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    from .plots import plot_results

    rows = read_results_csv(args.csv)
    if not rows:
        raise ConfigError(f"{args.csv}: no result rows")
    experiment = rows[0]["experiment"]
    out_dir = Path(args.out_dir or Path(args.csv).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    for p in plot_results(experiment, rows, out_dir):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bulkalloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="dump realizations as CSV")
    _sim_args(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--stream", default="debug", help="experiment id for the stream")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one predictor and save a checkpoint")
    _sim_args(p)
    p.add_argument("--loss", default="RBOL")
    p.add_argument("--D", type=int, default=4)
    p.add_argument("--q-th", type=float, default=0.4)
    p.add_argument("--epochs", type=int, default=65)
    p.add_argument("--batches", type=int, default=60)
    p.add_argument("--retrain", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a checkpoint under new settings")
    p.add_argument("checkpoint")
    p.add_argument("--q-th", type=float)
    p.add_argument("--D", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--gamma-th", type=float)
    p.add_argument("--n-test", type=int, default=3000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run an experiment from a YAML config")
    p.add_argument("config")
    p.add_argument("--retrains", type=int)
    p.add_argument("--paper-scale", action="store_true", help=f"use {FULL_RETRAINS} retrains")
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.add_argument("--n-test", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="redraw plots from a results CSV")
    p.add_argument("csv")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, RuntimeError, CheckpointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
