"""Model-facing representation: record tuples, vocabulary, training labels.

Records are per data cell (row-major over data rows), carrying the four
input features: column header, cell value, column index, chart type. The
target vocabulary always contains every grammar variable token within the
configured index bounds, so variable tokens can never fall to UNK.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .corpus import CHART_TYPES, ChartSample
from .lexicons import DEFAULT_LEXICONS, Lexicons
from .template_engine import (
    Category,
    TemplatedSummary,
    TemplateVar,
    resolve_var,
)
from .text import normalize_number, numbers_match, tokenize

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

CHART_TYPE_IDS = {ct: i + 1 for i, ct in enumerate(CHART_TYPES)}  # 0 reserved for pad


class EncodingBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class RecordTuple:
    header: str
    value: str
    column_index: int
    chart_type: str


@dataclass(frozen=True)
class VarBounds:
    """Index bounds of the variable-token vocabulary. Charts exceeding them
    are rejected at encoding time."""

    columns: int = 16
    rows: int = 64
    title_tokens: int = 32
    subjects: int = 8

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "rows": self.rows,
            "title_tokens": self.title_tokens,
            "subjects": self.subjects,
        }

    @staticmethod
    def from_dict(d: dict) -> "VarBounds":
        return VarBounds(**d)


def variable_tokens(bounds: VarBounds, lexicons: Lexicons = DEFAULT_LEXICONS) -> list[str]:
    """All grammar variable tokens within the bounds, in a fixed order."""
    tokens = ["templateXLabel", "templateYLabel"]
    tokens += [f"templateSubject[{i}]" for i in range(bounds.subjects)]
    tokens += [f"templateTitle[{i}]" for i in range(bounds.title_tokens)]
    tokens += [f"templateLabel[{c}][0]" for c in range(bounds.columns)]
    tokens += [
        f"templateValue[{c}][{r}]"
        for c in range(bounds.columns)
        for r in range(1, bounds.rows + 1)
    ]
    tokens += [
        f"templateDate[{c}][{r}]"
        for c in range(bounds.columns)
        for r in range(bounds.rows + 1)
    ]
    tokens += [f"templatePos[{k}]" for k in range(len(lexicons.trend_up))]
    tokens += [f"templateNeg[{k}]" for k in range(len(lexicons.trend_down))]
    tokens += [f"templateScale[{k}]" for k in range(len(lexicons.scale))]
    return tokens


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    token_to_id: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def ids(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def to_json(self) -> str:
        return json.dumps(list(self.tokens), ensure_ascii=False)

    @staticmethod
    def from_json(text: str) -> "Vocab":
        return Vocab(tokens=tuple(json.loads(text)))


def build_vocab(
    texts: list[str],
    min_freq: int = 1,
    bounds: VarBounds = VarBounds(),
    lexicons: Lexicons = DEFAULT_LEXICONS,
) -> Vocab:
    """Vocabulary over templated texts (whitespace-tokenized): specials at
    fixed ids, then tokens ordered by frequency descending / lexicographic,
    with all in-bound grammar tokens always present."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    freq = Counter()
    for text in texts:
        freq.update(text.split())
    keep = {t for t, n in freq.items() if n >= min_freq}
    keep.update(variable_tokens(bounds, lexicons))
    keep.difference_update(SPECIALS)
    ordered = sorted(keep, key=lambda t: (-freq.get(t, 0), t))
    return Vocab(tokens=tuple(SPECIALS) + tuple(ordered))


def encode_records(chart: ChartSample) -> list[RecordTuple]:
    """One record per data cell, row-major, preserving table order."""
    table = chart.table
    return [
        RecordTuple(
            header=table.headers[c],
            value=table.rows[r][c].raw,
            column_index=c,
            chart_type=chart.chart_type,
        )
        for r in range(table.n_data_rows)
        for c in range(table.n_columns)
    ]


def _var_is_record_ref(var: TemplateVar, n_cols: int, n_rows: int) -> int | None:
    """Row-major record index referenced by a cell/date variable, if any."""
    if var.category in (Category.CELL, Category.DATE):
        col, row = var.payload
        if 0 <= col < n_cols and 1 <= row <= n_rows:
            return (row - 1) * n_cols + col
    return None


def label_records(records: list[RecordTuple], ts: TemplatedSummary, chart: ChartSample) -> list[int]:
    """1 for each record referenced by a variable of the summary, directly
    (matching column/row) or by number-normalized value equality."""
    n_cols = chart.table.n_columns
    n_rows = chart.table.n_data_rows
    labels = [0] * len(records)
    surfaces = []
    for var in ts.vars():
        k = _var_is_record_ref(var, n_cols, n_rows)
        if k is not None and k < len(labels):
            labels[k] = 1
        text = resolve_var(var, chart)
        if text is not None:
            surfaces.append(text)
    for i, rec in enumerate(records):
        if labels[i]:
            continue
        if any(numbers_match(s, rec.value) for s in surfaces):
            labels[i] = 1
    return labels


def _surface_matches_record(text: str, records: list[RecordTuple]) -> bool:
    lowered = text.lower()
    norm = normalize_number(text)
    for rec in records:
        if lowered == rec.value.lower() or lowered == rec.header.lower():
            return True
        if norm is not None and norm == normalize_number(rec.value):
            return True
    return False


def label_tokens(ts: TemplatedSummary, records: list[RecordTuple], chart: ChartSample) -> list[int]:
    """1 for each summary token present in some record: a variable that
    references a record, or any token whose surface equals a record value or
    header (case-insensitive, number-normalized)."""
    n_cols = chart.table.n_columns
    n_rows = chart.table.n_data_rows
    labels = []
    for tok in ts.tokens:
        if isinstance(tok, TemplateVar):
            if _var_is_record_ref(tok, n_cols, n_rows) is not None:
                labels.append(1)
                continue
            surface = resolve_var(tok, chart)
        else:
            surface = tok
        labels.append(1 if surface is not None and _surface_matches_record(surface, records) else 0)
    return labels


@dataclass
class TrainingExample:
    id: str
    records: list[RecordTuple]
    record_labels: list[int]
    target_ids: list[int]
    token_labels: list[int]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "records": [[r.header, r.value, r.column_index, r.chart_type] for r in self.records],
            "record_labels": self.record_labels,
            "target_ids": self.target_ids,
            "token_labels": self.token_labels,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingExample":
        return TrainingExample(
            id=d["id"],
            records=[RecordTuple(h, v, c, t) for h, v, c, t in d["records"]],
            record_labels=list(d["record_labels"]),
            target_ids=list(d["target_ids"]),
            token_labels=list(d["token_labels"]),
        )


def check_bounds(chart: ChartSample, ts: TemplatedSummary, bounds: VarBounds) -> None:
    table = chart.table
    if table.n_columns > bounds.columns:
        raise EncodingBoundsError(
            f"sample {chart.id}: {table.n_columns} columns exceed the bound {bounds.columns}"
        )
    if table.n_data_rows > bounds.rows:
        raise EncodingBoundsError(
            f"sample {chart.id}: {table.n_data_rows} rows exceed the bound {bounds.rows}"
        )
    n_title = len(tokenize(chart.title))
    if n_title > bounds.title_tokens:
        raise EncodingBoundsError(
            f"sample {chart.id}: {n_title} title tokens exceed the bound {bounds.title_tokens}"
        )
    for var in ts.vars():
        if var.category == Category.SUBJECT and var.payload[0] >= bounds.subjects:
            raise EncodingBoundsError(
                f"sample {chart.id}: subject index {var.payload[0]} exceeds the bound {bounds.subjects}"
            )


def target_tokens(ts: TemplatedSummary) -> list[str]:
    return ts.to_text().split()


def make_training_example(
    chart: ChartSample,
    ts: TemplatedSummary,
    vocab: Vocab,
    bounds: VarBounds = VarBounds(),
    target_text: str | None = None,
) -> TrainingExample:
    """Assemble one example; `target_text` overrides the templated text to
    train a raw-token model with the same supervision labels."""
    check_bounds(chart, ts, bounds)
    records = encode_records(chart)
    rec_labels = label_records(records, ts, chart)
    tokens = target_text.split() if target_text is not None else target_tokens(ts)
    ids = [BOS] + vocab.ids(tokens) + [EOS]
    tok_labels = label_tokens(ts, records, chart)
    if target_text is not None:
        tok_labels = [
            1 if _surface_matches_record(t, records) else 0 for t in tokens
        ]
    return TrainingExample(
        id=chart.id,
        records=records,
        record_labels=rec_labels,
        target_ids=ids,
        token_labels=[0] + tok_labels + [0],
    )


@dataclass(frozen=True)
class FeatureVocab:
    """String-feature lookup for record headers and values; 0 = pad, 1 = unk."""

    tokens: tuple[str, ...]
    token_to_id: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "token_to_id", {t: i + 2 for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens) + 2

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, 1)

    @staticmethod
    def build(values: list[str]) -> "FeatureVocab":
        return FeatureVocab(tokens=tuple(sorted(set(values))))


def build_feature_vocabs(examples: list[TrainingExample]) -> tuple[FeatureVocab, FeatureVocab]:
    headers: list[str] = []
    values: list[str] = []
    for ex in examples:
        for rec in ex.records:
            headers.append(rec.header)
            norm = normalize_number(rec.value)
            values.append(norm if norm is not None else rec.value)
    return FeatureVocab.build(headers), FeatureVocab.build(values)


def record_feature_ids(
    rec: RecordTuple, header_vocab: FeatureVocab, value_vocab: FeatureVocab
) -> tuple[int, int, int, int]:
    norm = normalize_number(rec.value)
    return (
        header_vocab.id(rec.header),
        value_vocab.id(norm if norm is not None else rec.value),
        rec.column_index,
        CHART_TYPE_IDS[rec.chart_type],
    )
