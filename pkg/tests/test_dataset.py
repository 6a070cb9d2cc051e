import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acfgtrust.acfg import EDGES, compute_norm_stats
from acfgtrust.dataset import (
    DatasetConfig,
    build_negative_pairs,
    build_positive_pairs,
    dumps_dataset,
    kmeans,
    load_dataset,
    loads_dataset,
    save_dataset,
    select_similar,
    synthesize,
)
from acfgtrust.errors import CorruptFileError, UnsupportedVersionError
from acfgtrust.telemetry import SlotRecord, TrustedProfile, simulate_trusted_slot


def brute_force_two_partition_sse(X):
    """Optimal SSE over every split of X into two non-empty groups."""
    n = len(X)
    best = np.inf
    for mask in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + mask)
        if labels.all() or not labels.any():
            continue
        sse = sum(((X[labels == c] - X[labels == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
        best = min(best, sse)
    return best


def test_kmeans_single_cluster_is_mean():
    X = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]])
    assign, C, _ = kmeans(X, 1, seed=0)
    np.testing.assert_allclose(C[0], X.mean(axis=0))
    assert set(assign) == {0}


def test_kmeans_k_equals_n():
    X = np.array([[0.0], [3.0], [7.0], [9.5]])
    assign, C, hist = kmeans(X, 4, seed=1)
    assert sorted(C[:, 0]) == [0.0, 3.0, 7.0, 9.5]
    assert hist[-1] == 0.0


def test_kmeans_1d_example():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert brute_force_two_partition_sse(X) == 1.0
    best = min((kmeans(X, 2, seed=s) for s in range(10)), key=lambda r: r[2][-1])
    assign, C, hist = best
    assert sorted(C[:, 0]) == [0.5, 10.5]
    assert assign[0] == assign[1] != assign[2] == assign[3]
    assert hist[-1] == 1.0


def test_kmeans_errors():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans([[0.0, 1.0], [1.0]], 1)


@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 6))
def test_kmeans_sse_non_increasing(seed, n, k):
    k = min(k, n)
    X = np.random.default_rng(seed).normal(size=(n, 3))
    X[: n // 4] = X[0]  # duplicates encourage empty clusters
    _, _, hist = kmeans(X, k, max_iters=50, seed=seed)
    assert all(b <= a for a, b in zip(hist, hist[1:]))


@given(st.integers(0, 10_000), st.integers(3, 8), st.integers(0, 100))
def test_kmeans_never_beats_brute_force(seed, n, km_seed):
    X = np.random.default_rng(seed).normal(size=(n, 2))
    assert kmeans(X, 2, seed=km_seed)[2][-1] >= brute_force_two_partition_sse(X) * (1 - 1e-12)


def test_transfer_step_escapes_lloyd_local_optimum():
    # 2 of 6 initial centroid pairs reach the optimum under plain Lloyd; all 10 restarts do with transfers
    X = np.random.default_rng(95).normal(size=(6, 2))
    opt = brute_force_two_partition_sse(X)
    assert min(kmeans(X, 2, seed=s)[2][-1] for s in range(10)) == pytest.approx(opt, rel=1e-12)


def _records(n, seed):
    return [simulate_trusted_slot(TrustedProfile(seed=seed), i) for i in range(n)]


def test_select_all_and_none():
    recs = _records(20, 0)
    assert select_similar(recs, DatasetConfig(q_select=20, n_raw=20)) == recs
    assert select_similar(recs, DatasetConfig(q_select=0, n_raw=20)) == []
    with pytest.raises(ValueError):
        select_similar(recs[:5], DatasetConfig(q_select=6, n_raw=20))


def test_select_prefers_larger_cluster():
    # two tight groups 100 sigma apart; the bigger one must supply every selection
    big = [SlotRecord(i, 20.0 + 0.01 * (i % 7), 12, 0.30, 40.0, 1) for i in range(60)]
    small = [SlotRecord(100 + i, 2000.0 + 0.01 * (i % 5), 120, 0.95, 900.0, 1) for i in range(25)]
    recs = small + big
    picked = select_similar(recs, DatasetConfig(q_select=50, n_raw=len(recs), k=2))
    assert len(picked) == 50
    assert all(r.delay_ms < 100 for r in picked)
    # nearest-centroid check: every pick is closer to the big group's mean than the small one's
    mu_big, mu_small = np.mean([r.features() for r in big], 0), np.mean([r.features() for r in small], 0)
    for r in picked:
        f = np.array(r.features())
        assert np.linalg.norm(f - mu_big) < np.linalg.norm(f - mu_small)


def test_positive_pairs():
    recs = _records(10, 1)
    stats = compute_norm_stats(recs)
    assert build_positive_pairs(recs, 0, stats, 0) == []
    pairs = build_positive_pairs(recs, 200, stats, 3)
    assert len(pairs) == 200 and all(p.label == 1 for p in pairs)
    assert all(p.records[0] is not p.records[1] for p in pairs)
    with pytest.raises(ValueError):
        build_positive_pairs(recs[:1], 3, stats, 0)


def test_negative_pairs():
    trusted, bad = _records(5, 2), [SlotRecord(0, 90.0, 2, 0.95, 100.0, 0)]
    stats = compute_norm_stats(trusted + bad)
    pairs = build_negative_pairs(bad, trusted[:1], stats, 0)
    assert len(pairs) == 1 and pairs[0].label == -1 and pairs[0].records == (trusted[0], bad[0])
    with pytest.raises(ValueError):
        build_negative_pairs([], trusted, stats, 0)


def test_negative_pair_count_matches_anomalies():
    ds = synthesize(DatasetConfig(q_select=400, s_anomalies=1000, seed=4))
    assert ds.labels.count(-1) == 1000 and ds.labels.count(1) == 400


@pytest.mark.parametrize("q, s", [(100, 25), (37, 0), (10, 9)])
def test_label_balance(q, s):
    ds = synthesize(DatasetConfig(q_select=q, s_anomalies=s, seed=q + s))
    assert ds.labels.count(1) == q and ds.labels.count(-1) == s


def test_empty_dataset_refused():
    with pytest.raises(ValueError):
        synthesize(DatasetConfig(q_select=0, s_anomalies=0))


def test_dataset_round_trip(tmp_path):
    ds = synthesize(DatasetConfig(q_select=60, s_anomalies=20, seed=5))
    path = tmp_path / "d.jsonl"
    save_dataset(ds.pairs, ds.stats, path)
    back = load_dataset(path)
    assert back.stats == ds.stats
    assert back.pairs == ds.pairs
    assert dumps_dataset(back.pairs, back.stats) == path.read_text()
    for p in back.pairs:
        assert p.g_ref.edges == EDGES == p.g_slot.edges


def test_dataset_file_errors():
    ds = synthesize(DatasetConfig(q_select=10, s_anomalies=3, seed=6))
    text = dumps_dataset(ds.pairs, ds.stats)
    with pytest.raises(CorruptFileError):
        loads_dataset(text[:-20])
    header, rest = text.split("\n", 1)
    h = json.loads(header)
    h["format_version"] = 7
    with pytest.raises(UnsupportedVersionError):
        loads_dataset(json.dumps(h) + "\n" + rest)
    with pytest.raises(CorruptFileError):
        loads_dataset(header + "\n{\"label\": 1}\n")


def test_synthesize_is_deterministic():
    a = dumps_dataset(*vars(synthesize(DatasetConfig(q_select=50, s_anomalies=10, seed=3))).values())
    b = dumps_dataset(*vars(synthesize(DatasetConfig(q_select=50, s_anomalies=10, seed=3))).values())
    assert a == b
