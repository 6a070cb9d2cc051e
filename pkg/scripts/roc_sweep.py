"""Train one model per H and write its ROC on a held-out set.

    python scripts/roc_sweep.py --h 2,3,4,5 --out-dir rocs

Produces ``rocs/roc_H<h>.csv`` (threshold,fpr,tpr) and prints each AUC.
"""
import argparse
from pathlib import Path

from acfgtrust.dataset import DatasetConfig, synthesize
from acfgtrust.embed import init_params
from acfgtrust.evaluation import auc, roc_curve, write_roc_csv
from acfgtrust.siamese import TrainConfig, similarities, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", default="2,3,4,5")
    ap.add_argument("--out-dir", default="rocs")
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--test-seed", type=int, default=12345)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = synthesize(DatasetConfig(seed=args.train_seed))
    test_ds = synthesize(DatasetConfig(q_select=800, s_anomalies=200, seed=args.test_seed))
    for H in (int(h) for h in args.h.split(",")):
        model, _ = train(init_params(H=H, seed=args.train_seed).with_norm_stats(train_ds.stats),
                         train_ds.pairs, TrainConfig(epochs=args.epochs))
        curve = roc_curve(similarities(model, test_ds.examples(model.norm_stats)), test_ds.labels)
        with open(out / f"roc_H{H}.csv", "w", newline="") as fh:
            write_roc_csv(curve, fh)
        print(f"H={H} AUC={auc(curve):.5f}")


if __name__ == "__main__":
    main()
