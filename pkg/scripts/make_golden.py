"""Regenerate the service golden transcripts under tests/golden/.

Trains a small model, writes it next to the transcripts, then records the
outbound frames produced by replaying each inbound transcript. Each scenario is
checked for the behaviour it is named after before anything is written, so a
retrained model that no longer separates the chosen slots fails loudly here
rather than silently producing a meaningless golden file.

    python scripts/make_golden.py [--out tests/golden]
"""
import argparse
import json
from pathlib import Path

from acfgtrust.dataset import DatasetConfig, synthesize
from acfgtrust.embed import init_params, save_model
from acfgtrust.service import replay
from acfgtrust.siamese import TrainConfig, train
from acfgtrust.telemetry import AnomalyKind, TrustedProfile, simulate_stream

DELTA = 0.85


def frame(kind, sid, **fields):
    return json.dumps({"type": kind, "session_id": sid, **fields}, separators=(",", ":"))


def register(sid, ref, seq=None, **extra):
    f = {"initiator_id": f"{sid}-init", "collaborator_id": f"{sid}-collab", "reference": ref.to_wire(), "delta": DELTA}
    if seq is not None:
        f["seq"] = seq
    return frame("REGISTER", sid, **{**f, **extra})


def telemetry(sid, rec, seq=None):
    return frame("TELEMETRY", sid, record=rec.to_wire(), **({} if seq is None else {"seq": seq}))


def transcripts():
    a = simulate_stream(TrustedProfile(seed=31), 6, {2: AnomalyKind.CpuSaturation})
    b = simulate_stream(TrustedProfile(seed=32), 6, {4: AnomalyKind.PacketDrop})
    ref_a, ref_b = a[0], b[0]
    return {
        "registration": [
            register("s1", ref_a),
            frame("DEREGISTER", "s1"),
            frame("DEREGISTER", "s1"),
            telemetry("s1", a[1]),
        ],
        "trusted_flow": [
            register("s1", ref_a),
            telemetry("s1", a[1]),
            telemetry("s1", a[3]),
            telemetry("s1", a[4]),
            frame("DEREGISTER", "s1"),
        ],
        "anomaly_terminate": [
            register("s1", ref_a),
            telemetry("s1", a[1]),
            telemetry("s1", a[2]),
        ],
        "post_terminate_error": [
            register("s1", ref_a),
            telemetry("s1", a[1]),
            telemetry("s1", a[2]),
            telemetry("s1", a[3]),
            frame("DEREGISTER", "s1"),
            telemetry("s1", a[4]),
        ],
        "duplicate_register": [
            register("s1", ref_a),
            register("s1", ref_b),
            telemetry("s1", a[1]),
            frame("DEREGISTER", "s1"),
        ],
        "interleaved_sessions": [
            register("s1", ref_a, seq=1),
            register("s2", ref_b, seq=1),
            telemetry("s2", b[1], seq=2),
            telemetry("s1", a[1], seq=2),
            telemetry("s1", a[2], seq=3),
            telemetry("s2", b[3], seq=3),
            telemetry("s1", a[3], seq=4),
            telemetry("s2", b[4], seq=4),
            frame("DEREGISTER", "s2", seq=5),
        ],
        "malformed_frames": [
            "{not json",
            "[1,2]",
            json.dumps({"type": "PING", "session_id": "s1"}),
            json.dumps({"type": "TELEMETRY", "session_id": "ghost", "record": a[1].to_wire()}),
            register("s1", ref_a, seq=5),
            telemetry("s1", a[1], seq=5),
            json.dumps({"type": "TELEMETRY", "session_id": "s1", "record": {"slot": 1}}),
            register("s2", ref_b, delta=1.5),
            telemetry("s1", a[1], seq=6),
        ],
    }


def expect(name, out):
    kinds = [(o["type"], o.get("trusted"), o.get("code")) for o in out]
    checks = {
        "trusted_flow": lambda: kinds == [("VERDICT", True, None)] * 3,
        "anomaly_terminate": lambda: kinds == [("VERDICT", True, None), ("VERDICT", False, None), ("TERMINATE", None, None)],
        "post_terminate_error": lambda: kinds[-2:] == [("ERROR", None, "session_terminated")] * 2
        and sum(k[0] == "TERMINATE" for k in kinds) == 1,
        "interleaved_sessions": lambda: [k for k, o in zip(kinds, out) if o["session_id"] == "s1"]
        == [("VERDICT", True, None), ("VERDICT", False, None), ("TERMINATE", None, None), ("ERROR", None, "session_terminated")]
        and [k for k, o in zip(kinds, out) if o["session_id"] == "s2"]
        == [("VERDICT", True, None)] * 2 + [("VERDICT", False, None), ("TERMINATE", None, None)],
    }
    if name in checks and not checks[name]():
        raise SystemExit(f"{name}: unexpected outbound kinds {kinds}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="tests/golden")
    args = ap.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = synthesize(DatasetConfig(q_select=400, s_anomalies=100, seed=7))
    model, _ = train(init_params(p=16, seed=7).with_norm_stats(ds.stats), ds.pairs, TrainConfig(epochs=10))
    save_model(model, out_dir / "model.json")

    for name, lines in transcripts().items():
        _, emitted = replay(lines, model)
        expect(name, [json.loads(e) for e in emitted])
        (out_dir / f"{name}.in.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        (out_dir / f"{name}.out.jsonl").write_text("".join(emitted), encoding="utf-8")
        print(f"{name}: {len(lines)} in, {len(emitted)} out")


if __name__ == "__main__":
    main()
