"""Command-line entry point: ``acfgtrust {synth,train,eval,run,serve}``."""
from __future__ import annotations

import argparse
import asyncio
import logging
import signal
import sys
from pathlib import Path

from .dataset import DatasetConfig, load_dataset, save_dataset, synthesize
from .embed import init_params, load_model, save_model
from .evaluation import (
    auc,
    detection_report,
    evaluate_stream,
    roc_curve,
    write_roc_csv,
    write_verdicts_csv,
    write_verdicts_jsonl,
)
from .errors import FileFormatError
from .siamese import TrainConfig, similarities, train, write_loss_csv
from .telemetry import read_records


class CliError(Exception):
    pass


def _int_at_least(lo):
    def parse(text):
        v = int(text)
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    return parse


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _delta(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"delta must lie in (0, 1], got {text}")
    return v


def _h_list(text):
    try:
        hs = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not hs or min(hs) < 2:
        raise argparse.ArgumentTypeError("every H must be >= 2")
    return hs


def _slot_list(text):
    try:
        return {int(x) for x in text.split(",") if x.strip()}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated slot indices, got {text!r}") from None


def _add_model_flags(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--p", type=_int_at_least(1), default=64, help="embedding size (default 64)")
    g.add_argument("--L", type=_int_at_least(1), default=2, help="propagation iterations (default 2)")
    g.add_argument("--H", type=_int_at_least(2), default=2, help="layers in the neighbour transform (default 2)")
    g.add_argument("--lr", type=_positive_float, default=0.001, help="SGD learning rate (default 0.001)")
    g.add_argument("--batch-size", type=_int_at_least(1), default=1, help="pairs per SGD update (default 1)")
    g.add_argument("--epochs", type=_int_at_least(1), default=20, help="passes over the data (default 20)")
    g.add_argument("--seed", type=_int_at_least(0), default=0, help="initialization and shuffle seed (default 0)")


def _fit(data_path, args, H):
    ds = load_dataset(data_path)
    params = init_params(args.p, 2, args.L, H, seed=args.seed).with_norm_stats(ds.stats)
    cfg = TrainConfig(args.lr, args.batch_size, args.epochs, args.seed)
    return train(params, ds.pairs, cfg)


def cmd_synth(args):
    cfg = DatasetConfig(args.q, args.s, args.n_raw, args.k, args.kmeans_iters, args.seed)
    if args.q + args.s == 0:
        raise CliError("refusing to write an empty dataset (--q and --s are both 0)")
    ds = synthesize(cfg)
    save_dataset(ds.pairs, ds.stats, args.out)
    pos = sum(1 for lbl in ds.labels if lbl == 1)
    print(f"wrote {len(ds.pairs)} pairs ({pos} positive, {len(ds.pairs) - pos} negative) to {args.out}")


def cmd_train(args):
    if not Path(args.data).is_file():
        raise CliError(f"dataset not found: {args.data}")
    model, history = _fit(args.data, args, args.H)
    save_model(model, args.out)
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="") as fh:
            write_loss_csv(history, fh)
    print(f"epoch 1 loss {history[0]:.6f}, epoch {len(history)} loss {history[-1]:.6f}; model written to {args.out}")


def _eval_one(model, ds, roc_path):
    curve = roc_curve(similarities(model, ds.examples(model.norm_stats)), ds.labels)
    with open(roc_path, "w", newline="") as fh:
        write_roc_csv(curve, fh)
    return auc(curve)


def cmd_eval(args):
    ds = load_dataset(args.data)
    if len(set(ds.labels)) < 2:
        raise CliError("evaluation set must contain both positive and negative pairs")
    if args.sweep_h:
        if not args.train_data:
            raise CliError("--sweep-h needs --train-data to fit one model per H")
        out_dir = Path(args.roc_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for H in args.sweep_h:
            model, _ = _fit(args.train_data, args, H)
            path = out_dir / f"roc_H{H}.csv"
            print(f"H={H} AUC={_eval_one(model, ds, path):.6f} roc={path}")
        return
    if not args.model:
        raise CliError("eval needs --model (or --sweep-h with --train-data)")
    model = load_model(args.model)
    print(f"H={model.H} AUC={_eval_one(model, ds, args.roc_out):.6f} roc={args.roc_out}")


def cmd_run(args):
    model = load_model(args.model)
    with open(args.reference, encoding="utf-8") as fh:
        refs = read_records(fh)
    if len(refs) != 1:
        raise CliError(f"reference file must hold exactly one record, found {len(refs)}")
    with open(args.stream, encoding="utf-8") as fh:
        stream = read_records(fh)
    verdicts = evaluate_stream(model, refs[0], stream, args.delta)
    if args.out == "-":
        write_verdicts_csv(verdicts, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_verdicts_csv(verdicts, fh)
    if args.jsonl:
        with open(args.jsonl, "w", newline="\n") as fh:
            write_verdicts_jsonl(verdicts, fh)
    if args.truth is not None:
        r = detection_report(verdicts, args.truth)
        print(f"detected {r.true_detections}, missed {r.missed}, false alarms {r.false_alarms}", file=sys.stderr)


def cmd_serve(args):
    from .service import serve

    if not Path(args.model).is_file():
        raise CliError(f"model file not found: {args.model}")
    model = load_model(args.model)
    if model.norm_stats is None:
        raise CliError("model has no normalization stats; use a trained model")

    async def main():
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)

        def ready(addr):
            print(f"serving on {addr[0]}:{addr[1]} (p={model.p}, L={model.L}, H={model.H})", flush=True)

        await serve(args.host, args.port, model, stop, ready)

    asyncio.run(main())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acfgtrust", description="Continuous collaborator trust evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="simulate telemetry and write a labeled pair dataset")
    p.add_argument("--out", required=True, help="dataset file to write (JSON lines)")
    p.add_argument("--q", type=_int_at_least(0), default=4000, help="trusted records kept, one positive pair each (default 4000)")
    p.add_argument("--s", type=_int_at_least(0), default=1000, help="anomalous records, one negative pair each (default 1000)")
    p.add_argument("--n-raw", type=_int_at_least(0), default=None, help="simulated trusted records before selection (default 1.25*q)")
    p.add_argument("--k", type=_int_at_least(1), default=8, help="K-means clusters (default 8)")
    p.add_argument("--kmeans-iters", type=_int_at_least(1), default=100, help="Lloyd iteration cap (default 100)")
    p.add_argument("--seed", type=_int_at_least(0), default=0, help="simulation seed (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset file")
    p.add_argument("--data", required=True, help="dataset file from `synth`")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--loss-csv", help="write per-epoch mean loss as CSV (epoch,mean_loss)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ROC/AUC of a model on a held-out dataset")
    p.add_argument("--data", required=True, help="held-out dataset file")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--roc-out", default="roc.csv", help="ROC CSV path for a single model (default roc.csv)")
    p.add_argument("--sweep-h", type=_h_list, help="train and evaluate one model per H, e.g. 2,3,4,5")
    p.add_argument("--train-data", help="training dataset for --sweep-h")
    p.add_argument("--roc-dir", default=".", help="directory for roc_H<h>.csv files (default .)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="evaluate a recorded slot stream offline")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--reference", required=True, help="JSON-lines file with the trusted-state record")
    p.add_argument("--stream", required=True, help="JSON-lines file of slot records")
    p.add_argument("--delta", type=_delta, default=0.85, help="trust threshold in (0, 1] (default 0.85)")
    p.add_argument("--out", default="-", help="verdict CSV path, - for stdout (default -)")
    p.add_argument("--jsonl", help="also write verdicts as JSON lines")
    p.add_argument("--truth", type=_slot_list, help="comma-separated anomalous slots; prints a detection report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="run the edge-server trust service")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--host", default="127.0.0.1", help="listen address (default 127.0.0.1)")
    p.add_argument("--port", type=_int_at_least(0), default=7878, help="listen port (default 7878)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (CliError, FileFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
