"""Continuous detection over several seeded 30-slot scenarios.

    python scripts/detection_demo.py [--model model.json] [--scenarios 10]

Without --model a default model is trained first (about 20 s). Prints one
line per scenario with the per-slot verdict pattern (``.`` trusted slot,
``x`` flagged slot, upper case where an anomaly was injected).
"""
import argparse

import numpy as np

from acfgtrust.dataset import DatasetConfig, synthesize
from acfgtrust.embed import init_params, load_model
from acfgtrust.evaluation import detection_report, evaluate_stream
from acfgtrust.siamese import TrainConfig, train
from acfgtrust.telemetry import TrustedProfile, random_anomaly_plan, simulate_stream, simulate_trusted_slot


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model")
    ap.add_argument("--scenarios", type=int, default=10)
    ap.add_argument("--slots", type=int, default=30)
    ap.add_argument("--anomalies", type=int, default=10)
    ap.add_argument("--delta", type=float, default=0.85)
    args = ap.parse_args()

    if args.model:
        model = load_model(args.model)
    else:
        ds = synthesize(DatasetConfig())
        model, _ = train(init_params().with_norm_stats(ds.stats), ds.pairs, TrainConfig())

    det, fa = [], []
    for sc in range(args.scenarios):
        plan = random_anomaly_plan(args.slots, args.anomalies, seed=1000 + sc)
        stream = simulate_stream(TrustedProfile(seed=1000 + sc), args.slots, plan)
        ref = simulate_trusted_slot(TrustedProfile(seed=2000 + sc), 0)
        verdicts = evaluate_stream(model, ref, stream, args.delta)
        r = detection_report(verdicts, set(plan))
        marks = "".join(
            ("." if v.trusted else "x").upper() if v.slot_index in plan else ("." if v.trusted else "x")
            for v in verdicts
        )
        print(f"scenario {sc}: {marks}  detected {r.true_detections}/{len(plan)}, false alarms {r.false_alarms}")
        det.append(r.true_detections)
        fa.append(r.false_alarms)
    print(f"mean detected {np.mean(det):.2f}, mean false alarms {np.mean(fa):.2f}")


if __name__ == "__main__":
    main()
