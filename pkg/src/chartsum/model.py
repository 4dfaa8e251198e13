"""Transformer encoder-decoder over record tuples with a content-selection head.

Forward and backward passes are written out in numpy; every parameter's
analytic gradient is checked against central finite differences in the test
suite. The record embedding concatenates four feature embeddings (header,
value, column index, chart type) of width d_model/4 each; a sigmoid head over
the encoder output predicts per-record mention probabilities. Positional
embeddings on the encoder are a runtime toggle, the decoder always has them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import BOS, EOS, PAD, FeatureVocab, TrainingExample, record_feature_ids

NEG_INF = -1e9
LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


class DivergenceError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 2
    encoder_layers: int = 1
    decoder_layers: int = 2
    ff_dim: int = 128
    dropout: float = 0.1
    use_positional_embeddings: bool = True
    max_records: int = 256
    max_target_len: int = 128
    beam_size: int = 4
    cs_loss_weight: float = 1.0

    def validate(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 4 != 0:
            raise ValueError("d_model must be divisible by 4 (four record features)")
        for name in ("d_model", "n_heads", "encoder_layers", "decoder_layers",
                     "ff_dim", "max_records", "max_target_len", "beam_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.cs_loss_weight < 0:
            raise ValueError("cs_loss_weight must be >= 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


# Paper-scale profile: 512-dim, 1 encoder / 6 decoder layers, beam 4.
PAPER_MODEL = ModelConfig(
    d_model=512, n_heads=8, encoder_layers=1, decoder_layers=6, ff_dim=2048,
    dropout=0.1, max_records=512, max_target_len=256, beam_size=4,
)


@dataclass
class TrainConfig:
    epochs: int = 8
    updates_per_epoch: int = 250
    batch_size: int = 8
    learning_rate: float = 1e-3
    grad_clip: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs", "updates_per_epoch", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate must be >= 0 and grad_clip > 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def positional_encoding(position: int, d_model: int) -> np.ndarray:
    """Sinusoidal encoding of one position: pair (2i, 2i+1) carries
    (sin, cos)(position / 10000^(2i/d_model))."""
    if d_model % 2 != 0:
        raise ValueError("d_model must be even for sinusoidal encodings")
    i = np.arange(d_model // 2, dtype=np.float64)
    angle = position / np.power(10000.0, 2.0 * i / d_model)
    pe = np.empty(d_model, dtype=np.float64)
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle)
    return pe


def pe_matrix(n_positions: int, d_model: int) -> np.ndarray:
    if d_model % 2 != 0:
        raise ValueError("d_model must be even for sinusoidal encodings")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    pe = np.empty((n_positions, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def _gelu(x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad(x):
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)


def _linear(x, w):
    return x.reshape(-1, x.shape[-1]) @ w


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_std
    return g * xhat + b, (xhat, inv_std, g)


def _ln_backward(dy, cache):
    xhat, inv_std, g = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _attn_forward(xq, xkv, p, prefix, mask, n_heads):
    wq, wk, wv, wo = (p[prefix + "_wq"], p[prefix + "_wk"], p[prefix + "_wv"], p[prefix + "_wo"])
    b, tq, d = xq.shape
    tk = xkv.shape[1]
    q = _linear(xq, wq).reshape(b, tq, d)
    k = _linear(xkv, wk).reshape(b, tk, d)
    v = _linear(xkv, wv).reshape(b, tk, d)
    qh, kh, vh = (_split_heads(z, n_heads) for z in (q, k, v))
    scale = 1.0 / math.sqrt(d // n_heads)
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale + mask
    probs = softmax(scores)
    ctx = _merge_heads(probs @ vh)
    out = _linear(ctx, wo).reshape(b, tq, d)
    cache = (xq, xkv, qh, kh, vh, probs, ctx, scale)
    return out, cache


def _attn_backward(dout, p, prefix, cache, grads, n_heads):
    xq, xkv, qh, kh, vh, probs, ctx, scale = cache
    wq, wk, wv, wo = (p[prefix + "_wq"], p[prefix + "_wk"], p[prefix + "_wv"], p[prefix + "_wo"])
    b, tq, d = xq.shape
    tk = xkv.shape[1]

    grads[prefix + "_wo"] += ctx.reshape(-1, d).T @ dout.reshape(-1, d)
    dctx = _split_heads((dout.reshape(-1, d) @ wo.T).reshape(b, tq, d), n_heads)

    dprobs = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh * scale
    dkh = dscores.transpose(0, 1, 3, 2) @ qh * scale

    dq, dk, dv = (_merge_heads(z) for z in (dqh, dkh, dvh))
    grads[prefix + "_wq"] += xq.reshape(-1, d).T @ dq.reshape(-1, d)
    grads[prefix + "_wk"] += xkv.reshape(-1, d).T @ dk.reshape(-1, d)
    grads[prefix + "_wv"] += xkv.reshape(-1, d).T @ dv.reshape(-1, d)
    dxq = (dq.reshape(-1, d) @ wq.T).reshape(b, tq, d)
    dxkv = (dk.reshape(-1, d) @ wk.T).reshape(b, tk, d)
    dxkv += (dv.reshape(-1, d) @ wv.T).reshape(b, tk, d)
    return dxq, dxkv


def _ff_forward(x, p, prefix):
    h1 = _linear(x, p[prefix + "_w1"]).reshape(*x.shape[:-1], -1) + p[prefix + "_b1"]
    g = _gelu(h1)
    out = _linear(g, p[prefix + "_w2"]).reshape(*x.shape[:-1], x.shape[-1]) + p[prefix + "_b2"]
    return out, (x, h1, g)


def _ff_backward(dout, p, prefix, cache, grads):
    x, h1, g = cache
    d, ff = p[prefix + "_w1"].shape
    grads[prefix + "_w2"] += g.reshape(-1, ff).T @ dout.reshape(-1, d)
    grads[prefix + "_b2"] += dout.reshape(-1, d).sum(axis=0)
    dg = (dout.reshape(-1, d) @ p[prefix + "_w2"].T).reshape(h1.shape)
    dh1 = dg * _gelu_grad(h1)
    grads[prefix + "_w1"] += x.reshape(-1, d).T @ dh1.reshape(-1, ff)
    grads[prefix + "_b1"] += dh1.reshape(-1, ff).sum(axis=0)
    return (dh1.reshape(-1, ff) @ p[prefix + "_w1"].T).reshape(x.shape)


@dataclass
class Batch:
    header_ids: np.ndarray  # (B, R) int
    value_ids: np.ndarray
    col_ids: np.ndarray
    type_ids: np.ndarray
    rec_mask: np.ndarray    # (B, R) 1.0 at real records
    rec_labels: np.ndarray  # (B, R)
    tgt: np.ndarray         # (B, T) full target ids: BOS ... EOS PAD...

    @property
    def size(self) -> int:
        return self.header_ids.shape[0]


def collate(
    examples: list[TrainingExample],
    header_vocab: FeatureVocab,
    value_vocab: FeatureVocab,
    dtype=np.float32,
) -> Batch:
    b = len(examples)
    r_max = max(len(ex.records) for ex in examples)
    t_max = max(len(ex.target_ids) for ex in examples)
    header_ids = np.zeros((b, r_max), dtype=np.int64)
    value_ids = np.zeros((b, r_max), dtype=np.int64)
    col_ids = np.zeros((b, r_max), dtype=np.int64)
    type_ids = np.zeros((b, r_max), dtype=np.int64)
    rec_mask = np.zeros((b, r_max), dtype=dtype)
    rec_labels = np.zeros((b, r_max), dtype=dtype)
    tgt = np.full((b, t_max), PAD, dtype=np.int64)
    for i, ex in enumerate(examples):
        for j, rec in enumerate(ex.records):
            h, v, c, t = record_feature_ids(rec, header_vocab, value_vocab)
            header_ids[i, j] = h
            value_ids[i, j] = v
            col_ids[i, j] = c
            type_ids[i, j] = t
        rec_mask[i, : len(ex.records)] = 1.0
        rec_labels[i, : len(ex.records)] = ex.record_labels
        tgt[i, : len(ex.target_ids)] = ex.target_ids
    return Batch(header_ids, value_ids, col_ids, type_ids, rec_mask, rec_labels, tgt)


class Model:
    """Parameter container plus forward/backward passes."""

    def __init__(
        self,
        config: ModelConfig,
        vocab_size: int,
        n_header_features: int,
        n_value_features: int,
        seed: int = 0,
        dtype=np.float32,
    ):
        config.validate()
        self.config = config
        self.vocab_size = vocab_size
        self.n_header_features = n_header_features
        self.n_value_features = n_value_features
        self.dtype = dtype
        self.params: dict[str, np.ndarray] = {}
        self._init_params(np.random.default_rng(seed))
        n_pe = max(config.max_records, config.max_target_len) + 1
        self.pe = pe_matrix(n_pe, config.d_model).astype(dtype)

    # -- construction -----------------------------------------------------

    def _init_params(self, rng) -> None:
        cfg = self.config
        d, ff = cfg.d_model, cfg.ff_dim
        dq = d // 4

        def table(name, n, width):
            self.params[name] = rng.normal(0.0, d ** -0.5, (n, width)).astype(self.dtype)

        def linear(name, fan_in, fan_out):
            std = math.sqrt(2.0 / (fan_in + fan_out))
            self.params[name] = rng.normal(0.0, std, (fan_in, fan_out)).astype(self.dtype)

        def zeros(name, shape):
            self.params[name] = np.zeros(shape, dtype=self.dtype)

        def ones(name, shape):
            self.params[name] = np.ones(shape, dtype=self.dtype)

        table("emb_header", self.n_header_features, dq)
        table("emb_value", self.n_value_features, dq)
        table("emb_col", cfg.max_records, dq)
        table("emb_ctype", 5, dq)
        for l in range(cfg.encoder_layers):
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"enc{l}_attn_{w}", d, d)
            ones(f"enc{l}_ln1_g", d)
            zeros(f"enc{l}_ln1_b", d)
            linear(f"enc{l}_ff_w1", d, ff)
            zeros(f"enc{l}_ff_b1", ff)
            linear(f"enc{l}_ff_w2", ff, d)
            zeros(f"enc{l}_ff_b2", d)
            ones(f"enc{l}_ln2_g", d)
            zeros(f"enc{l}_ln2_b", d)
        linear("cs_w", d, 1)
        zeros("cs_b", (1,))
        table("emb_tgt", self.vocab_size, d)
        for l in range(cfg.decoder_layers):
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"dec{l}_self_{w}", d, d)
            ones(f"dec{l}_ln1_g", d)
            zeros(f"dec{l}_ln1_b", d)
            for w in ("wq", "wk", "wv", "wo"):
                linear(f"dec{l}_cross_{w}", d, d)
            ones(f"dec{l}_ln2_g", d)
            zeros(f"dec{l}_ln2_b", d)
            linear(f"dec{l}_ff_w1", d, ff)
            zeros(f"dec{l}_ff_b1", ff)
            linear(f"dec{l}_ff_w2", ff, d)
            zeros(f"dec{l}_ff_b2", d)
            ones(f"dec{l}_ln3_g", d)
            zeros(f"dec{l}_ln3_b", d)
        linear("out_w", d, self.vocab_size)
        zeros("out_b", self.vocab_size)

    def check_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise DivergenceError(f"parameter {name} contains NaN/Inf")

    # -- validation --------------------------------------------------------

    def _validate_batch(self, batch: Batch) -> None:
        cfg = self.config
        if batch.header_ids.shape[1] > cfg.max_records:
            raise ValueError(
                f"{batch.header_ids.shape[1]} records exceed max_records {cfg.max_records}"
            )
        if batch.tgt.shape[1] > cfg.max_target_len:
            raise ValueError(
                f"target length {batch.tgt.shape[1]} exceeds max_target_len {cfg.max_target_len}"
            )
        if batch.tgt.max() >= self.vocab_size or batch.tgt.min() < 0:
            raise ValueError("target id out of vocabulary range")
        if batch.header_ids.max() >= self.n_header_features:
            raise ValueError("header feature id out of range")
        if batch.value_ids.max() >= self.n_value_features:
            raise ValueError("value feature id out of range")
        if batch.col_ids.max() >= cfg.max_records:
            raise ValueError("column index out of range")

    # -- dropout -----------------------------------------------------------

    def _dropout(self, x, train, rng, cache_list):
        p = self.config.dropout
        if not train or p <= 0.0:
            cache_list.append(None)
            return x
        keep = 1.0 - p
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        cache_list.append(mask)
        return x * mask

    # -- forward -----------------------------------------------------------

    def _encode(self, batch: Batch, train=False, rng=None):
        cfg = self.config
        p = self.params
        d = cfg.d_model
        b, r = batch.header_ids.shape
        emb = np.concatenate(
            [
                p["emb_header"][batch.header_ids],
                p["emb_value"][batch.value_ids],
                p["emb_col"][batch.col_ids],
                p["emb_ctype"][batch.type_ids],
            ],
            axis=-1,
        ) * math.sqrt(d)
        x = emb + self.pe[:r][None] if cfg.use_positional_embeddings else emb
        key_mask = ((1.0 - batch.rec_mask) * NEG_INF)[:, None, None, :]

        drops: list = []
        layers = []
        for l in range(cfg.encoder_layers):
            a, a_cache = _attn_forward(x, x, p, f"enc{l}_attn", key_mask, cfg.n_heads)
            a = self._dropout(a, train, rng, drops)
            y1, ln1 = _ln_forward(x + a, p[f"enc{l}_ln1_g"], p[f"enc{l}_ln1_b"])
            f, f_cache = _ff_forward(y1, p, f"enc{l}_ff")
            f = self._dropout(f, train, rng, drops)
            y2, ln2 = _ln_forward(y1 + f, p[f"enc{l}_ln2_g"], p[f"enc{l}_ln2_b"])
            layers.append((a_cache, ln1, f_cache, ln2))
            x = y2
        cs_logits = (x.reshape(-1, d) @ p["cs_w"]).reshape(b, r) + p["cs_b"]
        cache = {"layers": layers, "drops": drops, "enc_out": x, "key_mask": key_mask}
        return x, cs_logits, cache

    def _decode(self, enc_out, rec_mask, tgt_in, train=False, rng=None):
        cfg = self.config
        p = self.params
        d = cfg.d_model
        b, t = tgt_in.shape
        x = p["emb_tgt"][tgt_in] * math.sqrt(d) + self.pe[:t][None]
        causal = np.triu(np.full((t, t), NEG_INF, dtype=self.dtype), k=1)[None, None]
        tgt_pad = ((tgt_in == PAD).astype(self.dtype) * NEG_INF)[:, None, None, :]
        self_mask = causal + tgt_pad
        cross_mask = ((1.0 - rec_mask) * NEG_INF)[:, None, None, :]

        drops: list = []
        layers = []
        for l in range(cfg.decoder_layers):
            a, a_cache = _attn_forward(x, x, p, f"dec{l}_self", self_mask, cfg.n_heads)
            a = self._dropout(a, train, rng, drops)
            y1, ln1 = _ln_forward(x + a, p[f"dec{l}_ln1_g"], p[f"dec{l}_ln1_b"])
            c, c_cache = _attn_forward(y1, enc_out, p, f"dec{l}_cross", cross_mask, cfg.n_heads)
            c = self._dropout(c, train, rng, drops)
            y2, ln2 = _ln_forward(y1 + c, p[f"dec{l}_ln2_g"], p[f"dec{l}_ln2_b"])
            f, f_cache = _ff_forward(y2, p, f"dec{l}_ff")
            f = self._dropout(f, train, rng, drops)
            y3, ln3 = _ln_forward(y2 + f, p[f"dec{l}_ln3_g"], p[f"dec{l}_ln3_b"])
            layers.append((a_cache, ln1, c_cache, ln2, f_cache, ln3))
            x = y3
        logits = (x.reshape(-1, d) @ p["out_w"]).reshape(b, t, -1) + p["out_b"]
        cache = {"layers": layers, "drops": drops, "dec_out": x, "tgt_in": tgt_in}
        return logits, cache

    def forward(self, batch: Batch, train: bool = False, rng=None):
        """Returns (vocab logits per target position, content-selection
        probabilities per record). Teacher forcing: logits at position t score
        the token at t+1."""
        self._validate_batch(batch)
        enc_out, cs_logits, enc_cache = self._encode(batch, train, rng)
        tgt_in = batch.tgt[:, :-1]
        logits, dec_cache = self._decode(enc_out, batch.rec_mask, tgt_in, train, rng)
        cs_probs = 1.0 / (1.0 + np.exp(-cs_logits))
        cache = {"enc": enc_cache, "dec": dec_cache, "cs_logits": cs_logits, "batch": batch}
        return logits, cs_probs, cache

    # -- loss --------------------------------------------------------------

    def loss_parts(self, logits, cs_probs, batch: Batch):
        labels = batch.tgt[:, 1:]
        lmask = (labels != PAD).astype(logits.dtype)
        logp = log_softmax(logits)
        gold = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
        n_tok = lmask.sum()
        ce = -(gold * lmask).sum() / n_tok
        p = np.clip(cs_probs, 1e-12, 1.0 - 1e-12)
        y = batch.rec_labels
        bce_all = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        n_rec = batch.rec_mask.sum()
        bce = (bce_all * batch.rec_mask).sum() / n_rec
        total = float(ce + self.config.cs_loss_weight * bce)
        if not math.isfinite(total):
            raise DivergenceError("loss is not finite")
        return total, float(ce), float(bce)

    # -- backward ----------------------------------------------------------

    def loss_and_grads(self, batch: Batch, train: bool = True, rng=None):
        cfg = self.config
        p = self.params
        d = cfg.d_model
        logits, cs_probs, cache = self.forward(batch, train=train, rng=rng)
        total, ce, bce = self.loss_parts(logits, cs_probs, batch)

        grads = {name: np.zeros_like(arr) for name, arr in p.items()}
        labels = batch.tgt[:, 1:]
        lmask = (labels != PAD).astype(logits.dtype)
        n_tok = lmask.sum()
        probs = softmax(logits)
        onehot_grad = probs
        np.put_along_axis(
            onehot_grad, labels[..., None],
            np.take_along_axis(onehot_grad, labels[..., None], axis=-1) - 1.0, axis=-1,
        )
        dlogits = onehot_grad * (lmask[..., None] / n_tok)

        n_rec = batch.rec_mask.sum()
        dz = (cfg.cs_loss_weight * (cs_probs - batch.rec_labels) * batch.rec_mask / n_rec).astype(self.dtype)

        d_enc_out = self._decoder_backward(dlogits, cache["dec"], cache["enc"]["enc_out"], grads)

        enc_out = cache["enc"]["enc_out"]
        b, r = dz.shape
        grads["cs_w"] += enc_out.reshape(-1, d).T @ dz.reshape(-1, 1)
        grads["cs_b"] += np.array([dz.sum()], dtype=self.dtype)
        d_enc_out += (dz.reshape(-1, 1) @ p["cs_w"].T).reshape(b, r, d)

        self._encoder_backward(d_enc_out, cache["enc"], batch, grads)
        return total, (ce, bce), grads

    def _decoder_backward(self, dlogits, dec_cache, enc_out, grads):
        cfg = self.config
        p = self.params
        d = cfg.d_model
        dec_out = dec_cache["dec_out"]
        b, t, _ = dec_out.shape

        grads["out_w"] += dec_out.reshape(-1, d).T @ dlogits.reshape(-1, self.vocab_size)
        grads["out_b"] += dlogits.reshape(-1, self.vocab_size).sum(axis=0)
        dx = (dlogits.reshape(-1, self.vocab_size) @ p["out_w"].T).reshape(b, t, d)

        d_enc_out = np.zeros_like(enc_out)
        drops = dec_cache["drops"]
        for l in reversed(range(cfg.decoder_layers)):
            a_cache, ln1, c_cache, ln2, f_cache, ln3 = dec_cache["layers"][l]
            drop_a, drop_c, drop_f = drops[3 * l], drops[3 * l + 1], drops[3 * l + 2]

            dr3, dg, db = _ln_backward(dx, ln3)
            grads[f"dec{l}_ln3_g"] += dg
            grads[f"dec{l}_ln3_b"] += db
            df = dr3 if drop_f is None else dr3 * drop_f
            dy2 = dr3 + _ff_backward(df, p, f"dec{l}_ff", f_cache, grads)

            dr2, dg, db = _ln_backward(dy2, ln2)
            grads[f"dec{l}_ln2_g"] += dg
            grads[f"dec{l}_ln2_b"] += db
            dc = dr2 if drop_c is None else dr2 * drop_c
            dxq, dxkv = _attn_backward(dc, p, f"dec{l}_cross", c_cache, grads, cfg.n_heads)
            d_enc_out += dxkv
            dy1 = dr2 + dxq

            dr1, dg, db = _ln_backward(dy1, ln1)
            grads[f"dec{l}_ln1_g"] += dg
            grads[f"dec{l}_ln1_b"] += db
            da = dr1 if drop_a is None else dr1 * drop_a
            dxq, dxkv = _attn_backward(da, p, f"dec{l}_self", a_cache, grads, cfg.n_heads)
            dx = dr1 + dxq + dxkv

        demb = dx * math.sqrt(d)
        np.add.at(grads["emb_tgt"], dec_cache["tgt_in"], demb)
        return d_enc_out

    def _encoder_backward(self, d_enc_out, enc_cache, batch: Batch, grads):
        cfg = self.config
        p = self.params
        d = cfg.d_model
        dx = d_enc_out
        drops = enc_cache["drops"]
        for l in reversed(range(cfg.encoder_layers)):
            a_cache, ln1, f_cache, ln2 = enc_cache["layers"][l]
            drop_a, drop_f = drops[2 * l], drops[2 * l + 1]

            dr2, dg, db = _ln_backward(dx, ln2)
            grads[f"enc{l}_ln2_g"] += dg
            grads[f"enc{l}_ln2_b"] += db
            df = dr2 if drop_f is None else dr2 * drop_f
            dy1 = dr2 + _ff_backward(df, p, f"enc{l}_ff", f_cache, grads)

            dr1, dg, db = _ln_backward(dy1, ln1)
            grads[f"enc{l}_ln1_g"] += dg
            grads[f"enc{l}_ln1_b"] += db
            da = dr1 if drop_a is None else dr1 * drop_a
            dxq, dxkv = _attn_backward(da, p, f"enc{l}_attn", a_cache, grads, cfg.n_heads)
            dx = dr1 + dxq + dxkv

        demb = dx * math.sqrt(d)
        q = d // 4
        np.add.at(grads["emb_header"], batch.header_ids, demb[..., 0:q])
        np.add.at(grads["emb_value"], batch.value_ids, demb[..., q:2 * q])
        np.add.at(grads["emb_col"], batch.col_ids, demb[..., 2 * q:3 * q])
        np.add.at(grads["emb_ctype"], batch.type_ids, demb[..., 3 * q:4 * q])


def compute_loss(logits, cs_probs, target_ids, record_labels, cs_loss_weight,
                 rec_mask=None) -> float:
    """Joint objective on raw outputs: mean next-token cross-entropy plus
    weighted mean binary cross-entropy over records."""
    logits = np.asarray(logits, dtype=np.float64)
    cs_probs = np.asarray(cs_probs, dtype=np.float64)
    target_ids = np.asarray(target_ids)
    record_labels = np.asarray(record_labels, dtype=np.float64)
    labels = target_ids[:, 1:]
    lmask = (labels != PAD).astype(np.float64)
    logp = log_softmax(logits)
    gold = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    ce = -(gold * lmask).sum() / lmask.sum()
    if rec_mask is None:
        rec_mask = np.ones_like(record_labels)
    p = np.clip(cs_probs, 1e-12, 1.0 - 1e-12)
    bce_all = -(record_labels * np.log(p) + (1.0 - record_labels) * np.log(1.0 - p))
    bce = (bce_all * rec_mask).sum() / rec_mask.sum()
    total = float(ce + cs_loss_weight * bce)
    if not math.isfinite(total):
        raise DivergenceError("loss is not finite")
    return total
