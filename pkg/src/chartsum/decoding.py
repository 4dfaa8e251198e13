"""Greedy and length-normalized beam search decoding.

Hypotheses are scored by mean log-probability over generated tokens
(including EOS when produced). Ties break lexicographically on the token id
sequence, so decoding is fully deterministic. PAD and BOS are never proposed
as continuations.
"""

from __future__ import annotations

import numpy as np

from .encoding import BOS, EOS, PAD
from .model import Batch, Model, log_softmax


def _encode_single(model: Model, batch: Batch):
    enc_out, cs_logits, _ = model._encode(batch, train=False)
    return enc_out, batch.rec_mask


def _step_logprobs(model: Model, enc_out, rec_mask, prefixes: np.ndarray) -> np.ndarray:
    """Log-probabilities of the next token for each prefix row."""
    n = prefixes.shape[0]
    enc_rep = np.repeat(enc_out, n, axis=0) if enc_out.shape[0] == 1 else enc_out
    mask_rep = np.repeat(rec_mask, n, axis=0) if rec_mask.shape[0] == 1 else rec_mask
    logits, _ = model._decode(enc_rep, mask_rep, prefixes, train=False)
    return log_softmax(logits[:, -1, :].astype(np.float64))


def greedy_decode(model: Model, batch: Batch, max_len: int) -> list[int]:
    """Argmax decoding of a single sample; returns generated ids, including
    the terminating EOS when produced."""
    enc_out, rec_mask = _encode_single(model, batch)
    prefix = [BOS]
    out: list[int] = []
    for _ in range(max_len):
        lp = _step_logprobs(model, enc_out, rec_mask, np.array([prefix], dtype=np.int64))[0]
        lp[PAD] = -np.inf
        lp[BOS] = -np.inf
        token = int(np.argmax(lp))
        out.append(token)
        if token == EOS:
            break
        prefix.append(token)
    return out


def beam_decode(model: Model, batch: Batch, beam_size: int, max_len: int) -> list[int]:
    """Top hypothesis under length-normalized beam search from BOS until EOS
    or max_len."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    enc_out, rec_mask = _encode_single(model, batch)

    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]  # (generated ids, sum logp)
    finished: list[tuple[float, tuple[int, ...]]] = []       # (mean logp, ids)

    for _ in range(max_len):
        prefixes = np.array([(BOS,) + ids for ids, _ in live], dtype=np.int64)
        lp = _step_logprobs(model, enc_out, rec_mask, prefixes)
        lp[:, PAD] = -np.inf
        lp[:, BOS] = -np.inf
        candidates: list[tuple[float, tuple[int, ...], float]] = []
        for (ids, score), row in zip(live, lp):
            new_len = len(ids) + 1
            for tok in range(model.vocab_size):
                if not np.isfinite(row[tok]):
                    continue
                total = score + float(row[tok])
                candidates.append((total / new_len, ids + (tok,), total))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for mean, ids, total in candidates[:beam_size]:
            if ids[-1] == EOS:
                finished.append((mean, ids))
            else:
                live.append((ids, total))
        if not live:
            break

    for ids, total in live:
        finished.append((total / len(ids), ids))
    finished.sort(key=lambda f: (-f[0], f[1]))
    return list(finished[0][1])


def strip_specials(ids: list[int]) -> list[int]:
    return [i for i in ids if i not in (PAD, BOS, EOS)]
