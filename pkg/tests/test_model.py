import math

import numpy as np
import pytest

from chartsum.model import (
    Batch,
    DivergenceError,
    Model,
    compute_loss,
    log_softmax,
    pe_matrix,
    positional_encoding,
    softmax,
)
from util_models import random_batch, tiny_config, tiny_model


# -- positional encoding --------------------------------------------------------


def test_pe_position_zero_alternates():
    pe = positional_encoding(0, 10)
    assert np.allclose(pe[0::2], 0.0)
    assert np.allclose(pe[1::2], 1.0)


def test_pe_pythagorean_identity():
    for pos in (0, 1, 7, 100, 512):
        pe = positional_encoding(pos, 32)
        pairs = pe[0::2] ** 2 + pe[1::2] ** 2
        assert np.all(np.abs(pairs - 1.0) < 1e-12)


def test_pe_position3_d4_oracle():
    # pair i frequency 10000^(2i/4): i=0 -> 1, i=1 -> 100
    expected = np.array([math.sin(3), math.cos(3), math.sin(3 / 100), math.cos(3 / 100)])
    assert np.allclose(positional_encoding(3, 4), expected, atol=1e-15)


def test_pe_odd_dim_rejected():
    with pytest.raises(ValueError):
        positional_encoding(1, 7)


def test_pe_matrix_matches_single():
    mat = pe_matrix(5, 8)
    for pos in range(5):
        assert np.allclose(mat[pos], positional_encoding(pos, 8))


# -- forward ---------------------------------------------------------------------


def test_forward_shapes_and_softmax_normalization():
    model = tiny_model(seed=1)
    rng = np.random.default_rng(0)
    batch = random_batch(model, rng, b=3, r=4, t=6)
    logits, cs_probs, _ = model.forward(batch)
    assert logits.shape == (3, 5, model.vocab_size)
    assert cs_probs.shape == (3, 4)
    sums = softmax(logits).sum(axis=-1)
    assert np.all(np.abs(sums - 1.0) < 1e-6)
    assert np.all((cs_probs > 0) & (cs_probs < 1))


def test_forward_rejects_out_of_vocab():
    model = tiny_model(seed=1)
    rng = np.random.default_rng(0)
    batch = random_batch(model, rng)
    batch.tgt[0, 1] = model.vocab_size + 3
    with pytest.raises(ValueError):
        model.forward(batch)


def test_forward_rejects_length_overflow():
    model = tiny_model(seed=1, max_target_len=4)
    rng = np.random.default_rng(0)
    batch = random_batch(model, rng, t=6)
    with pytest.raises(ValueError):
        model.forward(batch)


def _permute_batch(batch: Batch, perm):
    return Batch(
        batch.header_ids[:, perm],
        batch.value_ids[:, perm],
        batch.col_ids[:, perm],
        batch.type_ids[:, perm],
        batch.rec_mask[:, perm],
        batch.rec_labels[:, perm],
        batch.tgt,
    )


def test_permutation_equivariance_without_positions():
    model = tiny_model(seed=2, use_positional_embeddings=False)
    rng = np.random.default_rng(1)
    batch = random_batch(model, rng, b=2, r=5, t=6)
    perm = [3, 0, 4, 1, 2]
    logits, cs, _ = model.forward(batch)
    logits_p, cs_p, _ = model.forward(_permute_batch(batch, perm))
    assert np.allclose(cs_p, cs[:, perm], atol=1e-6)
    assert np.allclose(logits_p, logits, atol=1e-6)


def test_permutation_sensitivity_with_positions():
    model = tiny_model(seed=2, use_positional_embeddings=True)
    rng = np.random.default_rng(1)
    batch = random_batch(model, rng, b=1, r=2, t=5)
    # make the two records differ so the swap is visible
    batch.header_ids[0] = [2, 3]
    batch.value_ids[0] = [2, 3]
    enc_a, _, _ = model._encode(batch)
    enc_b, _, _ = model._encode(_permute_batch(batch, [1, 0]))
    assert np.max(np.abs(enc_b - enc_a[:, [1, 0], :])) > 1e-6


def test_causal_masking():
    model = tiny_model(seed=3)
    rng = np.random.default_rng(2)
    batch = random_batch(model, rng, b=1, r=3, t=8)
    logits, _, _ = model.forward(batch)
    k = 4  # decoder input position; tokens strictly before it must be unaffected
    batch.tgt[0, k] = 5 if batch.tgt[0, k] != 5 else 6
    logits2, _, _ = model.forward(batch)
    assert np.allclose(logits2[:, :k, :], logits[:, :k, :])
    assert np.max(np.abs(logits2[:, k:, :] - logits[:, k:, :])) > 0


def _pad_batch(batch: Batch, pad_records: int, pad_tokens: int) -> Batch:
    def pad_cols(arr, n, value=0):
        extra = np.full((arr.shape[0], n), value, dtype=arr.dtype)
        return np.concatenate([arr, extra], axis=1)

    return Batch(
        pad_cols(batch.header_ids, pad_records),
        pad_cols(batch.value_ids, pad_records),
        pad_cols(batch.col_ids, pad_records),
        pad_cols(batch.type_ids, pad_records),
        pad_cols(batch.rec_mask, pad_records),
        pad_cols(batch.rec_labels, pad_records),
        pad_cols(batch.tgt, pad_tokens),
    )


def test_padding_invariance():
    model = tiny_model(seed=4)
    rng = np.random.default_rng(3)
    base = random_batch(model, rng, b=2, r=3, t=6)
    padded = _pad_batch(base, pad_records=2, pad_tokens=3)
    logits_a, cs_a, _ = model.forward(base)
    logits_b, cs_b, _ = model.forward(padded)
    assert np.allclose(logits_b[:, :5, :], logits_a, atol=1e-6)
    assert np.allclose(cs_b[:, :3], cs_a, atol=1e-6)


# -- loss -------------------------------------------------------------------------


def test_loss_zero_on_perfect_outputs():
    rng = np.random.default_rng(4)
    b, t, v, r = 2, 5, 9, 3
    tgt = np.zeros((b, t), dtype=np.int64)
    tgt[:, 0] = 1
    tgt[:, 1:-1] = rng.integers(4, v, (b, t - 2))
    tgt[:, -1] = 2
    logits = np.zeros((b, t - 1, v))
    for i in range(b):
        for j in range(t - 1):
            logits[i, j, tgt[i, j + 1]] = 60.0
    labels = (rng.random((b, r)) < 0.5).astype(float)
    loss = compute_loss(logits, labels.copy(), tgt, labels, cs_loss_weight=1.0)
    assert loss == pytest.approx(0.0, abs=1e-6)


def test_loss_uniform_logits_is_log_vocab():
    b, t, v, r = 2, 4, 11, 2
    tgt = np.zeros((b, t), dtype=np.int64)
    tgt[:, 0] = 1
    tgt[:, 1:-1] = 5
    tgt[:, -1] = 2
    logits = np.zeros((b, t - 1, v))
    labels = np.full((b, r), 0.5)
    loss = compute_loss(logits, labels.copy(), tgt, labels, cs_loss_weight=0.0)
    assert loss == pytest.approx(math.log(v), abs=1e-9)


def test_loss_matches_scalar_oracle():
    rng = np.random.default_rng(5)
    b, t, v, r = 2, 5, 7, 3
    tgt = np.zeros((b, t), dtype=np.int64)
    tgt[:, 0] = 1
    tgt[:, 1:-1] = rng.integers(4, v, (b, t - 2))
    tgt[:, -1] = 2
    logits = rng.normal(size=(b, t - 1, v))
    cs = rng.uniform(0.05, 0.95, (b, r))
    y = (rng.random((b, r)) < 0.5).astype(float)
    lam = 0.7

    # scalar re-computation, position by position
    ce_sum, n = 0.0, 0
    for i in range(b):
        for j in range(t - 1):
            gold = tgt[i, j + 1]
            if gold == 0:
                continue
            z = logits[i, j]
            ce_sum += -(z[gold] - math.log(sum(math.exp(x) for x in z)))
            n += 1
    bce_sum, m = 0.0, 0
    for i in range(b):
        for j in range(r):
            p = cs[i, j]
            bce_sum += -(y[i, j] * math.log(p) + (1 - y[i, j]) * math.log(1 - p))
            m += 1
    expected = ce_sum / n + lam * bce_sum / m
    assert compute_loss(logits, cs, tgt, y, lam) == pytest.approx(expected, abs=1e-6)


def test_loss_raises_on_nan():
    tgt = np.array([[1, 5, 2]])
    logits = np.full((1, 2, 8), np.nan)
    with pytest.raises(DivergenceError):
        compute_loss(logits, np.array([[0.5]]), tgt, np.array([[1.0]]), 1.0)


# -- gradients ---------------------------------------------------------------------


def test_cs_head_gradients_zero_when_lambda_zero():
    model = tiny_model(seed=6, cs_loss_weight=0.0)
    rng = np.random.default_rng(6)
    batch = random_batch(model, rng)
    _, _, grads = model.loss_and_grads(batch, train=False)
    assert np.all(grads["cs_w"] == 0.0)
    assert np.all(grads["cs_b"] == 0.0)
    assert np.any(grads["out_w"] != 0.0)


def test_duplicated_example_keeps_mean_gradient():
    model = tiny_model(seed=7)
    rng = np.random.default_rng(7)
    single = random_batch(model, rng, b=1, r=3, t=6)
    double = Batch(
        np.repeat(single.header_ids, 2, axis=0),
        np.repeat(single.value_ids, 2, axis=0),
        np.repeat(single.col_ids, 2, axis=0),
        np.repeat(single.type_ids, 2, axis=0),
        np.repeat(single.rec_mask, 2, axis=0),
        np.repeat(single.rec_labels, 2, axis=0),
        np.repeat(single.tgt, 2, axis=0),
    )
    _, _, g1 = model.loss_and_grads(single, train=False)
    _, _, g2 = model.loss_and_grads(double, train=False)
    for name in g1:
        assert np.allclose(g1[name], g2[name], rtol=1e-9, atol=1e-12), name


def max_relative_gradient_error(model, batch, samples_per_tensor=5, step=1e-4, seed=0):
    """Central finite differences against the analytic gradients."""
    _, _, grads = model.loss_and_grads(batch, train=False)

    def loss_at() -> float:
        logits, cs_probs, _ = model.forward(batch, train=False)
        total, _, _ = model.loss_parts(logits, cs_probs, batch)
        return total

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_name = None
    for name, param in model.params.items():
        flat = param.reshape(-1)
        n = flat.shape[0]
        picks = rng.choice(n, size=min(samples_per_tensor, n), replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_at()
            flat[idx] = orig - step
            down = loss_at()
            flat[idx] = orig
            fd = (up - down) / (2 * step)
            an = grads[name].reshape(-1)[idx]
            err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            if err > worst:
                worst, worst_name = err, name
    return worst, worst_name


def test_gradients_match_finite_differences():
    model = tiny_model(seed=8, dtype=np.float64)
    rng = np.random.default_rng(8)
    batch = random_batch(model, rng, b=2, r=3, t=6)
    worst, name = max_relative_gradient_error(model, batch)
    assert worst < 1e-3, f"worst relative error {worst} at {name}"


def test_gradients_cover_every_parameter():
    model = tiny_model(seed=9)
    rng = np.random.default_rng(9)
    batch = random_batch(model, rng)
    _, _, grads = model.loss_and_grads(batch, train=False)
    assert set(grads) == set(model.params)
    # every weight matrix that participates should receive signal
    for name in ("emb_header", "emb_tgt", "out_w", "cs_w", "enc0_attn_wq", "dec0_cross_wk"):
        assert np.any(grads[name] != 0.0), name
