"""Per-epoch training loss on the default synthetic dataset, optionally at a
second, smaller size for comparison.

    python scripts/convergence_curve.py --out loss.csv [--also-small]

Writes ``epoch,mean_loss`` rows (plus a ``size`` column with --also-small).
"""
import argparse
import csv
import time

from acfgtrust.dataset import DatasetConfig, synthesize
from acfgtrust.embed import init_params
from acfgtrust.siamese import TrainConfig, train


def curve(q, s, seed, cfg):
    ds = synthesize(DatasetConfig(q_select=q, s_anomalies=s, seed=seed))
    t0 = time.perf_counter()
    _, hist = train(init_params(seed=seed).with_norm_stats(ds.stats), ds.pairs, cfg)
    print(f"{q}+{s} pairs: {hist[0]:.4f} -> {hist[-1]:.4f} (ratio {hist[-1] / hist[0]:.3f}) in {time.perf_counter() - t0:.1f}s")
    return hist


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="loss.csv")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--lr", type=float, default=0.001)
    ap.add_argument("--batch-size", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--also-small", action="store_true", help="also train on 800 + 200 pairs")
    args = ap.parse_args()

    cfg = TrainConfig(args.lr, args.batch_size, args.epochs, args.seed)
    runs = {"5000": curve(4000, 1000, args.seed, cfg)}
    if args.also_small:
        runs["1000"] = curve(800, 200, args.seed, cfg)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["size", "epoch", "mean_loss"] if args.also_small else ["epoch", "mean_loss"])
        for size, hist in runs.items():
            for e, loss in enumerate(hist, 1):
                w.writerow(([size] if args.also_small else []) + [e, repr(loss)])


if __name__ == "__main__":
    main()
