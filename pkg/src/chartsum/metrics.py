"""Automatic evaluation: sentence BLEU and the content-selection metric.

BLEU is sentence-level BLEU-4 with add-one smoothing on the n >= 2
precisions; candidates shorter than four tokens use only the available
orders. Content selection is the percentage of data cells mentioned in the
generated text that are also mentioned in the gold summary, both computed on
final surface text with the same number-normalized matcher.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import ChartSample
from .text import normalize_number, tokenize


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: list[str], reference: list[str], max_n: int = 4) -> float:
    """Geometric mean of modified n-gram precisions times the brevity
    penalty. Empty candidates score 0."""
    if not reference:
        raise ValueError("reference must be non-empty")
    if not candidate:
        return 0.0
    orders = min(max_n, len(candidate))
    log_sum = 0.0
    for n in range(1, orders + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        matched = sum(min(count, ref[g]) for g, count in cand.items())
        total = sum(cand.values())
        if n >= 2:
            matched += 1
            total += 1
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total)
    bp = 1.0 if len(candidate) >= len(reference) else math.exp(1.0 - len(reference) / len(candidate))
    return bp * math.exp(log_sum / orders)


def cell_mentions(text: str, chart: ChartSample) -> set:
    """Data cells mentioned in surface text: exact token-sequence match
    (case-insensitive) or single-token number-normalized value match.
    Returns (column, data_row) pairs with data rows counted from 0."""
    tokens = [t.lower() for t in tokenize(text)]
    norms = {normalize_number(t) for t in tokens} - {None}
    mentioned = set()
    for col in range(chart.table.n_columns):
        for row in range(chart.table.n_data_rows):
            cell = chart.table.rows[row][col]
            norm = normalize_number(cell.raw)
            if norm is not None and norm in norms:
                mentioned.add((col, row))
                continue
            seq = [t.lower() for t in tokenize(cell.raw)]
            k = len(seq)
            if k and any(tokens[i:i + k] == seq for i in range(len(tokens) - k + 1)):
                mentioned.add((col, row))
    return mentioned


@dataclass
class CsResult:
    percentage: float
    mentions_gen: int
    overlap: int
    flagged: bool  # generated text mentioned no cell at all


def content_selection(generated: str, gold: str, chart: ChartSample) -> CsResult:
    """100 * |G intersect R| / |G| where G and R are the cell-mention sets of
    the generated and gold texts; 0 (flagged) when G is empty."""
    gen = cell_mentions(generated, chart)
    ref = cell_mentions(gold, chart)
    if not gen:
        return CsResult(0.0, 0, 0, flagged=True)
    overlap = len(gen & ref)
    return CsResult(100.0 * overlap / len(gen), len(gen), overlap, flagged=False)


@dataclass
class SampleScore:
    id: str
    bleu: float
    cs: float
    mentions_gen: int
    overlap: int
    flagged: bool


@dataclass
class EvalReport:
    samples: list[SampleScore]
    bleu_mean: float
    bleu_std: float
    cs_mean: float
    cs_std: float
    flagged: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "samples": [
                {
                    "id": s.id,
                    "bleu": s.bleu,
                    "cs": s.cs,
                    "mentions_gen": s.mentions_gen,
                    "overlap": s.overlap,
                }
                for s in self.samples
            ],
            "bleu_mean": self.bleu_mean,
            "bleu_std": self.bleu_std,
            "cs_mean": self.cs_mean,
            "cs_std": self.cs_std,
            "flagged_zero_mention": self.flagged,
            "config": self.config,
        }

    def to_text_table(self) -> str:
        lines = [
            f"{'id':<24}{'BLEU':>10}{'CS %':>10}{'ment':>6}{'ovl':>6}",
        ]
        for s in self.samples:
            flag = " *" if s.flagged else ""
            lines.append(
                f"{s.id:<24}{s.bleu:>10.4f}{s.cs:>10.2f}{s.mentions_gen:>6}{s.overlap:>6}{flag}"
            )
        lines.append("-" * 56)
        lines.append(
            f"{'mean (std)':<24}{self.bleu_mean:>10.4f}{self.cs_mean:>10.2f}"
            f"   bleu_std={self.bleu_std:.4f} cs_std={self.cs_std:.2f}"
        )
        if self.flagged:
            lines.append(f"* {self.flagged} sample(s) mentioned no cell and scored 0")
        return "\n".join(lines)


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def evaluate_corpus(
    outputs: list[tuple[str, str, ChartSample]], config: dict | None = None
) -> EvalReport:
    """Per-sample BLEU and content selection plus corpus means and population
    standard deviations. `outputs` holds (generated, gold, chart) triples."""
    if not outputs:
        raise ValueError("no outputs to evaluate")
    scores = []
    for generated, gold, chart in outputs:
        b = bleu(tokenize(generated), tokenize(gold))
        cs = content_selection(generated, gold, chart)
        scores.append(
            SampleScore(
                id=chart.id, bleu=b, cs=cs.percentage,
                mentions_gen=cs.mentions_gen, overlap=cs.overlap, flagged=cs.flagged,
            )
        )
    bleu_mean, bleu_std = _mean_std([s.bleu for s in scores])
    cs_mean, cs_std = _mean_std([s.cs for s in scores])
    return EvalReport(
        samples=scores,
        bleu_mean=bleu_mean,
        bleu_std=bleu_std,
        cs_mean=cs_mean,
        cs_std=cs_std,
        flagged=sum(1 for s in scores if s.flagged),
        config=config or {"bleu": "sentence-mean, add-one smoothing n>=2", "max_n": 4},
    )
