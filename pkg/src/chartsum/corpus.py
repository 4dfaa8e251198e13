"""Chart corpus schema: loading, validation, splits, label recovery, statistics.

On-disk format is JSON Lines, one chart sample per line:

    {"id": ..., "image_ref": ..., "title": ..., "x_label": ..., "y_label": ...,
     "chart_type": "simple-bar" | "complex-bar" | "simple-line" | "complex-line",
     "table": {"headers": [...], "rows": [[...], ...]}, "summary": ...}

Cells may be strings or numbers; numbers are stored back as canonical text.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .lexicons import DEFAULT_LEXICONS, Lexicons
from .text import format_number, normalize_number, parse_number, sentence_count, tokenize

CHART_TYPES = ("simple-bar", "complex-bar", "simple-line", "complex-line")

_UNIT_RE = re.compile(r"^\s*([+-]?[\d.,]+)\s+(%|[A-Za-z][A-Za-z .%/-]{0,24})\s*$")


class CorpusError(ValueError):
    """Raised when a corpus file fails validation; carries every violation."""

    def __init__(self, errors: list[str]):
        super().__init__(errors[0] if errors else "invalid corpus")
        self.errors = list(errors)


@dataclass(frozen=True)
class Cell:
    raw: str
    value: float | None = None
    unit: str | None = None

    @staticmethod
    def from_raw(raw: str) -> "Cell":
        value = parse_number(raw)
        if value is not None:
            return Cell(raw=raw, value=value)
        m = _UNIT_RE.match(raw)
        if m:
            v = parse_number(m.group(1))
            if v is not None:
                return Cell(raw=raw, value=v, unit=m.group(2).strip())
        return Cell(raw=raw)


@dataclass(frozen=True)
class DataTable:
    headers: tuple[str, ...]
    rows: tuple[tuple[Cell, ...], ...]

    @property
    def n_columns(self) -> int:
        return len(self.headers)

    @property
    def n_data_rows(self) -> int:
        return len(self.rows)

    def text_at(self, col: int, row: int) -> str | None:
        """Table text in grid coordinates: row 0 is the header row, data rows
        count from 1. None when out of range."""
        if not (0 <= col < self.n_columns and 0 <= row <= self.n_data_rows):
            return None
        if row == 0:
            return self.headers[col]
        return self.rows[row - 1][col].raw

    def cell(self, col: int, data_row: int) -> Cell:
        return self.rows[data_row][col]


@dataclass(frozen=True)
class ChartSample:
    id: str
    table: DataTable
    title: str
    x_label: str
    y_label: str
    chart_type: str
    summary: str
    image_ref: str | None = None


@dataclass(frozen=True)
class Corpus:
    samples: tuple[ChartSample, ...]
    split_tag: str | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


@dataclass
class StatsReport:
    n_samples: int
    chart_type_counts: dict[str, int]
    mean_token_count: float
    mean_sentence_count: float
    vocab_size: int
    total_tokens: int
    mean_data_cells: float

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "chart_type_counts": dict(self.chart_type_counts),
            "mean_token_count": self.mean_token_count,
            "mean_sentence_count": self.mean_sentence_count,
            "vocab_size": self.vocab_size,
            "total_tokens": self.total_tokens,
            "mean_data_cells": self.mean_data_cells,
        }

    def to_text_table(self) -> str:
        c = self.chart_type_counts
        simple = c["simple-line"] + c["simple-bar"]
        complex_ = c["complex-line"] + c["complex-bar"]
        lines = [
            "Chart type distribution",
            f"{'':<10}{'Line':>8}{'Bar':>8}{'Total':>8}",
            f"{'Simple':<10}{c['simple-line']:>8}{c['simple-bar']:>8}{simple:>8}",
            f"{'Complex':<10}{c['complex-line']:>8}{c['complex-bar']:>8}{complex_:>8}",
            f"{'Total':<10}{c['simple-line'] + c['complex-line']:>8}"
            f"{c['simple-bar'] + c['complex-bar']:>8}{self.n_samples:>8}",
            "",
            "Dataset statistics",
            f"{'Mean Token Count':<22}{self.mean_token_count:>10.1f}",
            f"{'Mean Sentence Count':<22}{self.mean_sentence_count:>10.1f}",
            f"{'Vocab Size':<22}{self.vocab_size:>10}",
            f"{'Total Tokens':<22}{self.total_tokens:>10}",
            f"{'Mean Data Cells':<22}{self.mean_data_cells:>10.1f}",
        ]
        return "\n".join(lines)


def _cell_from_json(value) -> Cell | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return Cell(raw=format_number(value), value=float(value))
    if isinstance(value, str):
        return Cell.from_raw(value)
    return None


def _sample_from_record(rec: dict, line_no: int, errors: list[str]) -> ChartSample | None:
    where = f"line {line_no}"
    if not isinstance(rec, dict):
        errors.append(f"{where}: record is not a JSON object")
        return None
    sid = rec.get("id")
    if not isinstance(sid, str) or not sid:
        errors.append(f"{where}: field 'id' missing or empty")
        return None
    where = f"line {line_no} (sample {sid})"

    problems = len(errors)
    for field_name in ("title", "x_label", "y_label", "chart_type", "summary"):
        v = rec.get(field_name)
        if not isinstance(v, str):
            errors.append(f"{where}: field '{field_name}' missing or not text")
    if isinstance(rec.get("title"), str) and not rec["title"].strip():
        errors.append(f"{where}: field 'title' is empty")
    if isinstance(rec.get("summary"), str) and not rec["summary"].strip():
        errors.append(f"{where}: field 'summary' is empty")
    if rec.get("chart_type") not in CHART_TYPES:
        errors.append(f"{where}: field 'chart_type' must be one of {CHART_TYPES}")

    table = rec.get("table")
    headers: list[str] = []
    rows: list[tuple[Cell, ...]] = []
    if not isinstance(table, dict):
        errors.append(f"{where}: field 'table' missing or not an object")
    else:
        headers = table.get("headers") or []
        raw_rows = table.get("rows") or []
        if not (isinstance(headers, list) and len(headers) >= 2
                and all(isinstance(h, str) for h in headers)):
            errors.append(f"{where}: field 'table.headers' needs >= 2 text columns")
        if not (isinstance(raw_rows, list) and len(raw_rows) >= 1):
            errors.append(f"{where}: field 'table.rows' needs >= 1 row")
        else:
            for r_i, raw_row in enumerate(raw_rows):
                if not isinstance(raw_row, list) or len(raw_row) != len(headers):
                    errors.append(
                        f"{where}: field 'table.rows[{r_i}]' has "
                        f"{len(raw_row) if isinstance(raw_row, list) else 'invalid'} cells, "
                        f"expected {len(headers)}"
                    )
                    continue
                cells = []
                for c_i, v in enumerate(raw_row):
                    cell = _cell_from_json(v)
                    if cell is None:
                        errors.append(f"{where}: field 'table.rows[{r_i}][{c_i}]' is not text or number")
                        break
                    cells.append(cell)
                else:
                    rows.append(tuple(cells))

    image_ref = rec.get("image_ref")
    if image_ref is not None and not isinstance(image_ref, str):
        errors.append(f"{where}: field 'image_ref' must be text or null")

    if len(errors) > problems:
        return None
    return ChartSample(
        id=sid,
        table=DataTable(headers=tuple(headers), rows=tuple(rows)),
        title=rec["title"],
        x_label=rec["x_label"],
        y_label=rec["y_label"],
        chart_type=rec["chart_type"],
        summary=rec["summary"],
        image_ref=image_ref,
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load a JSON Lines corpus from a file, or every *.jsonl under a
    directory. Raises CorpusError listing every violation found."""
    path = Path(path)
    if not path.exists():
        raise CorpusError([f"corpus path does not exist: {path}"])
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    if not files:
        raise CorpusError([f"no .jsonl files under directory: {path}"])

    samples: list[ChartSample] = []
    errors: list[str] = []
    seen_ids: set[str] = set()
    for f in files:
        for line_no, line in enumerate(f.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                errors.append(f"line {line_no}: invalid JSON ({e.msg})")
                continue
            sample = _sample_from_record(rec, line_no, errors)
            if sample is None:
                continue
            if sample.id in seen_ids:
                errors.append(f"line {line_no}: duplicate sample id '{sample.id}'")
                continue
            seen_ids.add(sample.id)
            samples.append(sample)
    if errors:
        raise CorpusError(errors)
    return Corpus(samples=tuple(samples))


def sample_to_record(sample: ChartSample) -> dict:
    return {
        "id": sample.id,
        "image_ref": sample.image_ref,
        "title": sample.title,
        "x_label": sample.x_label,
        "y_label": sample.y_label,
        "chart_type": sample.chart_type,
        "table": {
            "headers": list(sample.table.headers),
            "rows": [[cell.raw for cell in row] for row in sample.table.rows],
        },
        "summary": sample.summary,
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for sample in corpus:
            f.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + "\n")


def split_corpus(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic train/validation/test partition.

    Sizes come from cumulative floors of the ratios, so the fractional
    residue lands in the last slice (8305 @ 0.70/0.15/0.15 -> 5813/1246/1246).
    """
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    n = len(corpus)
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    b1 = math.floor(n * ratios[0])
    b2 = math.floor(n * (ratios[0] + ratios[1]))
    parts = (sorted(idx[:b1]), sorted(idx[b1:b2]), sorted(idx[b2:]))
    tags = ("train", "validation", "test")
    return tuple(
        Corpus(samples=tuple(corpus.samples[i] for i in part), split_tag=tag)
        for part, tag in zip(parts, tags)
    )


def recover_axis_label(table: DataTable, lexicons: Lexicons = DEFAULT_LEXICONS) -> str | None:
    """Recover a temporal x-axis label from the first column, if at least 80%
    of its cells look like dates."""
    year_votes = 0
    month_votes = 0
    n = table.n_data_rows
    if n == 0:
        return None
    for row in table.rows:
        kind = lexicons.date_kind(tuple(tokenize(row[0].raw)))
        if kind == "year":
            year_votes += 1
        elif kind in ("month", "month-year"):
            month_votes += 1
    if (year_votes + month_votes) / n < 0.8:
        return None
    return "Year" if year_votes >= month_votes else "Month"


def corpus_stats(corpus: Corpus) -> StatsReport:
    if len(corpus) == 0:
        raise ValueError("cannot compute statistics of an empty corpus")
    counts = {ct: 0 for ct in CHART_TYPES}
    total_tokens = 0
    total_sentences = 0
    total_cells = 0
    vocab: set[str] = set()
    for sample in corpus:
        counts[sample.chart_type] += 1
        toks = tokenize(sample.summary)
        total_tokens += len(toks)
        vocab.update(toks)
        total_sentences += sentence_count(sample.summary)
        total_cells += sample.table.n_columns * sample.table.n_data_rows
    n = len(corpus)
    return StatsReport(
        n_samples=n,
        chart_type_counts=counts,
        mean_token_count=total_tokens / n,
        mean_sentence_count=total_sentences / n,
        vocab_size=len(vocab),
        total_tokens=total_tokens,
        mean_data_cells=total_cells / n,
    )
