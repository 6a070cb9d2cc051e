import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acfgtrust.acfg import Acfg, NormStats
from acfgtrust.embed import (
    ModelParams,
    dumps_model,
    forward,
    init_params,
    load_model,
    loads_model,
    save_model,
    sigma,
)
from acfgtrust.errors import CorruptFileError, ShapeMismatchError, UnsupportedVersionError

# oracle values from a scalar pure-Python run of the recursion (p = 1, all weights 1)
TANH1 = 0.7615941559557649
L1_TOTAL = 2.2847824678672946
L2_U2 = 0.9426807890983486
L2_U3 = 0.9872170297280632
L2_TOTAL = 2.691491974782177


def ones_model(L):
    return ModelParams(1, 2, L, 2, [[1.0, 0.0]], ([[1.0]], [[1.0]]), [[1.0]])


def loop_forward(params, feats):
    """Entry-by-entry reference implementation with plain Python lists."""
    p, nbrs = params.p, [[], [0], [0, 1]]
    W1, W2 = params.W1.tolist(), params.W2.tolist()
    P = [m.tolist() for m in params.P]

    def matvec(M, v):
        return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]

    def sig(x):
        h = matvec(P[-1], x)
        for M in reversed(P[:-1]):
            h = matvec(M, [max(0.0, z) for z in h])
        return h

    u = [[0.0] * p for _ in range(3)]
    for _ in range(params.L):
        new = []
        for k in range(3):
            agg = [sum(u[j][i] for j in nbrs[k]) for i in range(p)]
            s = sig(agg)
            w = matvec(W1, list(feats[k]))
            new.append([math.tanh(w[i] + s[i]) for i in range(p)])
        u = new
    pooled = [u[0][i] + u[1][i] + u[2][i] for i in range(p)]
    return matvec(W2, pooled), u


def test_sigma_zero_and_relu():
    m = ModelParams(3, 2, 1, 2, np.zeros((3, 2)), (np.eye(3), np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(sigma(m, np.zeros(3)), np.zeros(3))
    np.testing.assert_array_equal(sigma(m, [-1.0, 2.0, 0.5]), [0.0, 2.0, 0.5])


def test_sigma_three_layers_scalar():
    m = ModelParams(1, 2, 1, 3, [[0.0, 0.0]], ([[2.0]], [[-1.0]], [[3.0]]), [[1.0]])
    # 2 * relu(-1 * relu(3 * 1)) = 0
    assert sigma(m, [1.0])[0] == 0.0
    # 2 * relu(-1 * relu(3 * -1)) = 0; and a live path: P=(2,1,3) -> 2*relu(1*relu(3)) = 6
    m2 = ModelParams(1, 2, 1, 3, [[0.0, 0.0]], ([[2.0]], [[1.0]], [[3.0]]), [[1.0]])
    assert sigma(m2, [1.0])[0] == 6.0


def test_sigma_dimension_mismatch():
    with pytest.raises(ValueError):
        sigma(init_params(4, seed=0), np.zeros(3))


def test_zero_model_gives_zero_embedding():
    m = ModelParams(4, 2, 2, 2, np.zeros((4, 2)), (np.zeros((4, 4)),) * 2, np.zeros((4, 4)))
    emb = forward(m, Acfg(np.full((3, 2), 0.7)))
    np.testing.assert_array_equal(emb.vector, np.zeros(4))


def test_forward_hand_example_one_iteration():
    emb = forward(ones_model(1), Acfg([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
    np.testing.assert_allclose(emb.vertex_states[-1][:, 0], [TANH1] * 3, rtol=0, atol=1e-15)
    assert emb.vector[0] == pytest.approx(L1_TOTAL, abs=1e-14)


def test_forward_hand_example_two_iterations():
    emb = forward(ones_model(2), Acfg([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
    np.testing.assert_allclose(emb.vertex_states[-1][:, 0], [TANH1, L2_U2, L2_U3], atol=1e-15)
    assert emb.vector[0] == pytest.approx(L2_TOTAL, abs=1e-14)


@given(p=st.sampled_from([1, 2, 5]), L=st.integers(1, 3), H=st.integers(2, 4), seed=st.integers(0, 10_000))
def test_forward_matches_loop_oracle(p, L, H, seed):
    params = init_params(p, L=L, H=H, seed=seed)
    rng = np.random.default_rng(seed)
    # scale weights up so the relu/tanh paths are actually exercised
    params = params.with_arrays([a * 4 for a in params.arrays()])
    feats = rng.uniform(0, 1, size=(3, 2))
    expected, states = loop_forward(params, feats)
    emb = forward(params, Acfg(feats))
    np.testing.assert_allclose(emb.vector, expected, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(emb.vertex_states[-1], states, rtol=1e-12, atol=1e-12)


@given(seed=st.integers(0, 10_000), L=st.integers(1, 3))
def test_vertex_states_within_tanh_range_and_deterministic(seed, L):
    params = init_params(6, L=L, H=2, seed=seed).with_arrays([a * 10 for a in init_params(6, L=L, seed=seed).arrays()])
    g = Acfg(np.random.default_rng(seed).uniform(0, 1, (3, 2)))
    a, b = forward(params, g), forward(params, g)
    np.testing.assert_array_equal(a.vector, b.vector)
    assert np.all(np.abs(a.vertex_states) <= 1.0)


@given(seed=st.integers(0, 10_000))
def test_first_vertex_ignores_other_vertices(seed):
    rng = np.random.default_rng(seed)
    params = init_params(8, L=3, H=2, seed=seed)
    f = rng.uniform(0, 1, (3, 2))
    g = f.copy()
    g[1:] = rng.uniform(0, 1, (2, 2))
    np.testing.assert_array_equal(forward(params, Acfg(f)).vertex_states[-1][0], forward(params, Acfg(g)).vertex_states[-1][0])


def test_init_params_shapes_and_determinism():
    a, b = init_params(64, 2, 2, 2, seed=9), init_params(64, 2, 2, 2, seed=9)
    assert a == b
    assert dumps_model(a) == dumps_model(b)
    assert a.W1.size == 128 and all(m.size == 4096 for m in a.P) and a.W2.size == 4096
    bound = 1 / 8
    assert all(np.abs(x).max() <= bound for x in a.arrays())
    assert a != init_params(64, 2, 2, 2, seed=10)


@pytest.mark.parametrize("kwargs", [dict(H=1), dict(p=0), dict(L=0), dict(d=3)])
def test_init_params_rejects_bad_dims(kwargs):
    with pytest.raises(ValueError):
        init_params(**kwargs)


def test_model_round_trip(tmp_path):
    m = init_params(5, L=1, H=3, seed=2).with_norm_stats(NormStats((0.0, 1, 0, 3), (1.0, 5, 1, 9)))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back == m
    assert dumps_model(back) == (tmp_path / "m.json").read_text()


def test_model_file_errors(tmp_path):
    text = dumps_model(init_params(4, seed=0))
    with pytest.raises(CorruptFileError):
        loads_model(text[: len(text) // 2])
    obj = json.loads(text)
    obj["format_version"] = 2
    with pytest.raises(UnsupportedVersionError):
        loads_model(json.dumps(obj))
    obj = json.loads(text)
    obj["W2"] = obj["W2"][:-1]
    with pytest.raises(ShapeMismatchError):
        loads_model(json.dumps(obj))
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.json")
