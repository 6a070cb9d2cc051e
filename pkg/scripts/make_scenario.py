"""Write a detection scenario: a trusted reference record, a slot stream with
injected anomalies, and the list of anomalous slots.

    python scripts/make_scenario.py --out-dir scenario --slots 30 --anomalies 10 --seed 1000

The files feed straight into ``acfgtrust run``::

    acfgtrust run --model model.json --reference scenario/reference.jsonl \\
        --stream scenario/stream.jsonl --truth "$(cat scenario/anomalies.txt)"
"""
import argparse
from pathlib import Path

from acfgtrust.telemetry import TrustedProfile, random_anomaly_plan, simulate_stream, simulate_trusted_slot, write_records


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="scenario")
    ap.add_argument("--slots", type=int, default=30)
    ap.add_argument("--anomalies", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1000)
    ap.add_argument("--reference-seed", type=int, default=None,
                    help="profile seed for the trusted snapshot (default seed + 1000)")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = random_anomaly_plan(args.slots, args.anomalies, args.seed)
    stream = simulate_stream(TrustedProfile(seed=args.seed), args.slots, plan)
    ref_seed = args.seed + 1000 if args.reference_seed is None else args.reference_seed
    reference = simulate_trusted_slot(TrustedProfile(seed=ref_seed), 0)

    with open(out / "reference.jsonl", "w", newline="\n") as fh:
        write_records([reference], fh)
    with open(out / "stream.jsonl", "w", newline="\n") as fh:
        write_records(stream, fh)
    (out / "anomalies.txt").write_text(",".join(str(s) for s in sorted(plan)) + "\n")
    for slot, kind in sorted(plan.items()):
        print(f"slot {slot:3d}: {kind.value}")


if __name__ == "__main__":
    main()
