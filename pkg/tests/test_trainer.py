import numpy as np
import pytest

from semsum.synthetic import PairedConfig, paired_data
from semsum.trainer import (
    AdamState,
    Branch,
    ResidualHead,
    TrainConfig,
    TripletBatch,
    adam_step,
    batch_loss,
    evaluate_dev,
    forward_embed,
    gradients,
    init_head,
    load_checkpoint,
    numerical_gradients,
    sample_negatives,
    save_checkpoint,
    train,
    triplet_loss,
    triplet_scores,
)

SMALL = PairedConfig(train_pairs=40, dev_pairs=10, latent_dim=3, feature_dim=6, embed_dim=4)


def max_rel_err(a, b, floor=1e-6):
    return max(float(np.max(np.abs(a[k] - b[k]) / np.maximum(np.maximum(np.abs(a[k]), np.abs(b[k])), floor)))
               for k in a)


def kink_free_batch(rng, data, head, B=4, K=3, m=0.2, gap=1e-3, tries=500):
    for _ in range(tries):
        anchors = rng.choice(len(data), size=B, replace=False)
        batch = TripletBatch.from_pairs(data, anchors, sample_negatives(rng, len(data), anchors, K))
        s_pos, s_neg = triplet_scores(head, batch)
        if np.abs(m - s_pos[:, None] + s_neg).min() >= gap:
            return batch
    raise RuntimeError("could not draw a batch away from the hinge kinks")


def zero_branch(i, o, alpha):
    return Branch(np.zeros((3, i)), np.zeros(3), np.zeros((o, 3)), np.zeros(o), alpha)


def test_forward_embed_examples(rng):
    h, vs = rng.standard_normal(5), rng.standard_normal(4)
    br = zero_branch(5, 4, 0.0)
    br.W1 = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(forward_embed(br, h, vs), np.zeros(4))
    np.testing.assert_array_equal(forward_embed(zero_branch(5, 4, 1.0), h, vs), vs)
    with pytest.raises(ValueError):
        forward_embed(br, h[:4], vs)


def test_forward_embed_scalar_reference(rng):
    head = init_head(rng, 5, 5, 4, 3)
    br = head.frame
    h, vs = rng.standard_normal(5), rng.standard_normal(4)
    out = []
    for o in range(4):
        acc = br.b2[o] + br.alpha * vs[o]
        for j in range(3):
            pre = br.b1[j] + sum(br.W1[j, i] * h[i] for i in range(5))
            acc += br.W2[o, j] * np.tanh(pre)
        out.append(acc)
    np.testing.assert_allclose(forward_embed(br, h, vs), out, atol=1e-12)


def test_init_ranges():
    head = init_head(np.random.default_rng(3), 16, 9, 4, 25)
    for br, fan in ((head.frame, 16), (head.sentence, 9)):
        assert 0.0 < br.alpha <= 0.1
        assert np.abs(br.W1).max() <= 1 / np.sqrt(fan)
        assert np.abs(br.W2).max() <= 1 / 5
        assert not br.b1.any() and not br.b2.any()


@pytest.mark.parametrize("s_pos,s_neg,m,expected", [(0.9, 0.5, 0.2, 0.0), (0.5, 0.45, 0.2, 0.15), (0.3, 0.3, 0.2, 0.2)])
def test_triplet_loss(s_pos, s_neg, m, expected):
    assert triplet_loss(s_pos, s_neg, m) == pytest.approx(expected, abs=1e-15)


def test_batch_loss_matches_per_triplet(rng):
    data, _ = paired_data(SMALL)
    head = init_head(rng, 6, 6, 4, 5)
    anchors = np.array([0, 3, 7])
    negs = sample_negatives(rng, len(data), anchors, 4)
    batch = TripletBatch.from_pairs(data, anchors, negs)
    terms = []
    for b, a in enumerate(anchors):
        u = forward_embed(head.sentence, data.sent_h[a], data.sent_vs[a])
        p = forward_embed(head.frame, data.frame_h[a], data.frame_vs[a])
        sp = u @ p / np.linalg.norm(u) / np.linalg.norm(p)
        for n in negs[b]:
            v = forward_embed(head.frame, data.frame_h[n], data.frame_vs[n])
            terms.append(triplet_loss(sp, u @ v / np.linalg.norm(u) / np.linalg.norm(v), 0.2))
    assert batch_loss(head, batch, 0.2) == pytest.approx(np.mean(terms), abs=1e-12)
    single = TripletBatch.from_pairs(data, anchors[:1], negs[:1, :1])
    assert batch_loss(head, single, 0.2) == pytest.approx(terms[0], abs=1e-12)


def test_inactive_hinges_give_zero_loss_and_gradient(rng):
    # zero residual and alpha = 1 make every embedding its source vector
    head = ResidualHead(zero_branch(6, 4, 1.0), zero_branch(6, 4, 1.0))
    e = np.eye(4)
    h = rng.standard_normal((2, 6))
    batch = TripletBatch(h, e[:2], h, e[:2], np.repeat(h[:, None], 3, axis=1),
                         -np.repeat(e[:2, None], 3, axis=1))
    s_pos, s_neg = triplet_scores(head, batch)
    np.testing.assert_allclose(s_pos, 1.0)
    np.testing.assert_allclose(s_neg, -1.0)
    assert batch_loss(head, batch, 0.2) == 0.0
    assert all(not g.any() for g in gradients(head, batch, 0.2).values())
    # a negative identical to the positive always sits exactly m above the kink
    same = TripletBatch(batch.anchor_h, batch.anchor_vs, batch.pos_h, batch.pos_vs,
                        batch.pos_h[:, None, :], batch.pos_vs[:, None, :])
    assert batch_loss(head, same, 0.2) == pytest.approx(0.2)


def test_loss_nonnegative(rng):
    data, _ = paired_data(SMALL)
    for seed in range(5):
        head = init_head(np.random.default_rng(seed), 6, 6, 4, 5)
        batch = TripletBatch.from_pairs(data, [1, 2, 3], sample_negatives(rng, len(data), [1, 2, 3], 5))
        assert batch_loss(head, batch, 0.2) >= 0.0


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        TripletBatch(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)),
                     np.zeros((0, 1, 2)), np.zeros((0, 1, 2)))


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    data, _ = paired_data(SMALL)
    head = init_head(rng, 6, 6, 4, 5)
    batch = kink_free_batch(rng, data, head)
    assert max_rel_err(gradients(head, batch, 0.2), numerical_gradients(head, batch, 0.2)) < 1e-4


def test_alpha_gradient_follows_source_scaling():
    rng = np.random.default_rng(11)
    data, _ = paired_data(SMALL)
    head = init_head(rng, 6, 6, 4, 5)
    batch = kink_free_batch(rng, data, head)
    for c in (0.5, 2.0):
        scaled = TripletBatch(batch.anchor_h, c * batch.anchor_vs, batch.pos_h, c * batch.pos_vs,
                              batch.neg_h, c * batch.neg_vs)
        s_pos, s_neg = triplet_scores(head, scaled)
        if np.abs(0.2 - s_pos[:, None] + s_neg).min() < 1e-3:
            continue
        g, n = gradients(head, scaled, 0.2), numerical_gradients(head, scaled, 0.2)
        for key in ("frame.alpha", "sentence.alpha"):
            assert abs(g[key] - n[key]) <= 1e-4 * max(abs(n[key]), 1e-6)


def test_source_inputs_get_no_parameters(rng):
    head = init_head(rng, 6, 6, 4, 5)
    assert sorted(head.params()) == sorted(
        f"{s}.{n}" for s in ("frame", "sentence") for n in ("W1", "b1", "W2", "b2", "alpha"))


def test_adam_first_step():
    p, s = adam_step({"x": np.array([0.0])}, {"x": np.array([1.0])}, AdamState(), lr=0.001)
    assert p["x"][0] == pytest.approx(-0.001 / (1 + 1e-8), abs=1e-15)
    assert s.t == 1


def test_adam_zero_gradient():
    params, state = {"x": np.array([1.5, -2.0])}, AdamState()
    for _ in range(20):
        params, state = adam_step(params, {"x": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["x"], [1.5, -2.0])


def test_adam_two_steps_on_quadratic():
    # minimise x^2 from x = 1, lr = 0.1, traced by hand in plain floats
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        g = 2 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    params, state = {"x": np.array([1.0])}, AdamState()
    for _ in range(2):
        params, state = adam_step(params, {"x": 2 * params["x"]}, state, lr=lr)
    assert params["x"][0] == pytest.approx(x, abs=1e-15)
    # x1 = 0.9, m2 = 0.36, v2 = 0.007236 -> x2 = 0.9 - 0.1 * (0.36 / 0.19) / sqrt(0.007236 / 0.001999)
    assert x == pytest.approx(0.8004122287, abs=1e-9)


def test_sample_negatives_excludes_anchor(rng):
    negs = sample_negatives(rng, 30, np.arange(30), 10)
    for a, row in enumerate(negs):
        assert a not in row and len(set(row.tolist())) == 10
    assert sample_negatives(rng, 4, [0], 50).shape == (1, 3)


def test_lr_zero_keeps_initialisation():
    data, _ = paired_data(SMALL)
    cfg = TrainConfig(epochs=2, lr=0.0, negatives=5, batch_size=10, hidden_dim=5, seed=4)
    best, history = train(data, data, cfg)
    init = init_head(np.random.default_rng(4), 6, 6, 4, 5)
    for k, v in init.params().items():
        np.testing.assert_array_equal(best.params()[k], v)
    assert [h["epoch"] for h in history] == [0, 1, 2]
    assert not any(h["improved"] for h in history[1:])


def test_training_is_deterministic():
    data, dev = paired_data(SMALL)
    cfg = TrainConfig(epochs=3, negatives=5, batch_size=8, hidden_dim=5, seed=9)
    a, ha = train(data, dev, cfg)
    b, hb = train(data, dev, cfg)
    assert ha == hb
    for k in a.params():
        np.testing.assert_array_equal(a.params()[k], b.params()[k])


def test_training_improves_dev():
    data, dev = paired_data(PairedConfig(train_pairs=300, dev_pairs=60))
    best, history = train(data, dev, TrainConfig(epochs=5, seed=1))
    assert evaluate_dev(best, dev)["r_at_1"] > history[0]["r_at_1"]


def test_empty_data_rejected():
    data, dev = paired_data(SMALL)
    with pytest.raises(ValueError):
        train(data.subset([0]), dev)
    with pytest.raises(ValueError):
        TrainConfig(margin=0.0)


def test_checkpoint_roundtrip(tmp_path, rng):
    head = init_head(rng, 6, 7, 4, 5)
    path = tmp_path / "ckpt.json"
    save_checkpoint(head, path, TrainConfig(seed=3))
    back = load_checkpoint(path)
    for k, v in head.params().items():
        np.testing.assert_array_equal(back.params()[k], v)
    assert isinstance(ResidualHead.from_params(back.params()), ResidualHead)
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(bad)
