import io

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from acfgtrust.acfg import Acfg
from acfgtrust.embed import ModelParams, dumps_model, forward, init_params
from acfgtrust.errors import DegenerateEmbedding
from acfgtrust.siamese import (
    PairExample,
    TrainConfig,
    cosine_similarity,
    grad_check,
    gradients,
    pair_loss,
    relu_margin,
    train,
    write_loss_csv,
)

vectors = arrays(np.float64, 6, elements=st.floats(-100, 100))


def random_acfg(rng):
    f = rng.uniform(0, 1, (3, 2))
    f[2] = [rng.integers(2), 0.0]
    return Acfg(f)


def zero_model(p=4):
    return ModelParams(p, 2, 2, 2, np.zeros((p, 2)), (np.zeros((p, p)),) * 2, np.zeros((p, p)))


def test_cosine_examples():
    x = np.array([0.3, -2.0, 5.0])
    assert cosine_similarity(x, x) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine_similarity([1.0, 2.0], [-1.0, -2.0]) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateEmbedding):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


@given(vectors, vectors, st.floats(1e-3, 1e3))
def test_cosine_scale_invariant(u, v, alpha):
    assume(np.linalg.norm(u) > 1e-3 and np.linalg.norm(v) > 1e-3)
    c = cosine_similarity(u, v)
    assert -1.0 <= c <= 1.0
    assert cosine_similarity(alpha * u, v) == pytest.approx(c, abs=1e-12)


def test_pair_loss_examples():
    rng = np.random.default_rng(0)
    params = init_params(8, seed=1)
    g = random_acfg(rng)
    assert pair_loss(params, PairExample(g, g, 1)) == pytest.approx(0.0, abs=1e-12)
    assert pair_loss(params, PairExample(g, g, -1)) == pytest.approx(4.0, abs=1e-12)


def test_pair_loss_orthogonal_embeddings():
    # L = 1 and W2 = I: U = sum_k tanh(W1 R_k), so features on different axes give orthogonal U
    params = ModelParams(2, 2, 1, 2, np.eye(2), (np.eye(2), np.eye(2)), np.eye(2))
    a = Acfg([[0.5, 0.0], [0.0, 0.0], [0.0, 0.0]])
    b = Acfg([[0.0, 0.5], [0.0, 0.0], [0.0, 0.0]])
    assert cosine_similarity(forward(params, a).vector, forward(params, b).vector) == 0.0
    assert pair_loss(params, PairExample(a, b, 1)) == 1.0


@given(seed=st.integers(0, 100_000), label=st.sampled_from([1, -1]))
def test_pair_loss_symmetric_and_bounded(seed, label):
    rng = np.random.default_rng(seed)
    params = init_params(4, L=2, H=2, seed=seed)
    a, b = random_acfg(rng), random_acfg(rng)
    forward_loss = pair_loss(params, PairExample(a, b, label))
    assert 0.0 <= forward_loss <= 4.0
    assert pair_loss(params, PairExample(b, a, label)) == pytest.approx(forward_loss, abs=1e-15)


def test_identical_positive_pair_has_zero_gradient():
    rng = np.random.default_rng(2)
    params = init_params(8, seed=2)
    g = random_acfg(rng)
    for arr in gradients(params, [PairExample(g, g, 1)]).arrays():
        assert np.abs(arr).max() <= 1e-9


def test_degenerate_model_is_flagged():
    g = Acfg(np.full((3, 2), 0.5))
    with pytest.raises(DegenerateEmbedding):
        pair_loss(zero_model(), PairExample(g, g, 1))
    with pytest.raises(DegenerateEmbedding):
        gradients(zero_model(), [PairExample(g, g, 1)])
    with pytest.raises(DegenerateEmbedding):
        grad_check(zero_model(), PairExample(g, g, 1))


def test_gradients_need_a_batch():
    with pytest.raises(ValueError):
        gradients(init_params(4), [])


def test_grad_check_rejects_zero_step():
    g = Acfg(np.full((3, 2), 0.5))
    with pytest.raises(ValueError):
        grad_check(init_params(4), PairExample(g, g, 1), step=0.0)


def _random_check_cases(count):
    """Yield (params, pair) over p, L, H grids, skipping draws that sit near a relu kink."""
    rng = np.random.default_rng(2024)
    grid = [(p, L, H) for p in (2, 4, 8) for L in (1, 2) for H in (2, 3)]
    produced = 0
    seed = 0
    while produced < count:
        p, L, H = grid[produced % len(grid)]
        seed += 1
        base = init_params(p, L=L, H=H, seed=seed)
        params = base.with_arrays([2.0 * a for a in base.arrays()])
        pair = PairExample(random_acfg(rng), random_acfg(rng), int(rng.choice([1, -1])))
        if relu_margin(params, pair) < 1e-6:
            continue
        produced += 1
        yield (p, L, H), params, pair


@pytest.mark.parametrize("case", list(_random_check_cases(24)), ids=lambda c: "p%d-L%d-H%d" % c[0])
def test_grad_check_random_configs(case):
    _, params, pair = case
    assert grad_check(params, pair, step=1e-5) <= 1e-4


def test_batch_gradient_is_mean_of_single_gradients():
    rng = np.random.default_rng(5)
    params = init_params(4, L=2, H=3, seed=5)
    batch = [PairExample(random_acfg(rng), random_acfg(rng), s) for s in (1, -1, 1)]
    together = gradients(params, batch).arrays()
    singles = [gradients(params, [b]).arrays() for b in batch]
    for i, arr in enumerate(together):
        np.testing.assert_allclose(arr, sum(s[i] for s in singles) / 3, rtol=1e-12, atol=1e-15)


def test_train_on_identical_pairs_starts_at_minimum():
    g = random_acfg(np.random.default_rng(8))
    _, history = train(init_params(8, seed=8), [PairExample(g, g, 1)] * 10, TrainConfig(epochs=2))
    assert history[0] <= 1e-6


def test_train_rejects_empty_data():
    with pytest.raises(ValueError):
        train(init_params(4), [], TrainConfig())


def test_train_is_deterministic():
    rng = np.random.default_rng(4)
    data = [PairExample(random_acfg(rng), random_acfg(rng), int(rng.choice([1, -1]))) for _ in range(40)]
    cfg = TrainConfig(learning_rate=0.01, batch_size=4, epochs=3, shuffle_seed=7)
    a, ha = train(init_params(8, seed=1), data, cfg)
    b, hb = train(init_params(8, seed=1), data, cfg)
    assert dumps_model(a) == dumps_model(b) and ha == hb
    c, _ = train(init_params(8, seed=1), data, TrainConfig(0.01, 4, 3, shuffle_seed=8))
    assert dumps_model(c) != dumps_model(a)


def test_train_reduces_loss_on_separable_toy():
    rng = np.random.default_rng(6)
    good = [Acfg([[0.5 + 0.1 * rng.random(), 0.5], [0.3, 0.4], [1.0, 0.0]]) for _ in range(30)]
    bad = [Acfg([[0.5, 0.5], [0.9 + 0.1 * rng.random(), 0.9], [0.0, 0.0]]) for _ in range(30)]
    data = [PairExample(good[i], good[(i + 1) % 30], 1) for i in range(30)]
    data += [PairExample(good[i], bad[i], -1) for i in range(30)]
    _, history = train(init_params(8, seed=0), data, TrainConfig(learning_rate=0.01, epochs=30))
    assert history[-1] < 0.1 * history[0]


def test_config_validation():
    for bad in (dict(learning_rate=0), dict(batch_size=0), dict(epochs=0), dict(degenerate_epsilon=-1)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_loss_csv_format():
    buf = io.StringIO()
    write_loss_csv([0.5, 0.25], buf)
    assert buf.getvalue() == "epoch,mean_loss\n1,0.5\n2,0.25\n"


def test_pair_label_validated():
    g = Acfg(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        PairExample(g, g, 0)
