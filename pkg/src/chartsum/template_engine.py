"""Data-variable substitution: rewrite summaries against a chart and back.

Seven matcher categories in priority order (subjects, dates, axis labels,
titles, table cells, trends, scales). Templatize scans tokens left to right,
longest span first; detemplatize resolves variable tokens back to chart text
and never aborts on a bad index - it emits the "[UNK-REF]" sentinel and
records the failure so incorrect-index predictions stay observable.

Variable surface grammar:

    templateSubject[i]            title entity i
    templateDate[c][r]            date grounded at table column c, row r (row 0 = header)
    templateXLabel / templateYLabel
    templateTitle[i]              title token i
    templateLabel[c][0]           header of column c
    templateValue[c][r]           data cell, r counts data rows from 1
    templatePos[k] / templateNeg[k]  trend lexeme k
    templateScale[k]              scale lexeme k
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum

from .corpus import ChartSample
from .lexicons import DEFAULT_LEXICONS, Lexicons
from .text import normalize_number, tokenize

UNK_REF = "[UNK-REF]"

_FUNCTION_WORDS = frozenset(
    "the a an of in on for by to and or with at from vs versus per as is are was were".split()
)


class Category(IntEnum):
    """Matcher categories; smaller value = higher priority."""

    SUBJECT = 0
    DATE = 1
    AXIS_LABEL = 2
    TITLE = 3
    CELL = 4
    TREND = 5
    SCALE = 6


@dataclass(frozen=True, order=True)
class TemplateVar:
    category: Category
    payload: tuple

    def render(self) -> str:
        c = self.category
        p = self.payload
        if c == Category.SUBJECT:
            return f"templateSubject[{p[0]}]"
        if c == Category.DATE:
            return f"templateDate[{p[0]}][{p[1]}]"
        if c == Category.AXIS_LABEL:
            return "templateXLabel" if p[0] == "x" else "templateYLabel"
        if c == Category.TITLE:
            return f"templateTitle[{p[0]}]"
        if c == Category.CELL:
            col, row = p
            if row == 0:
                return f"templateLabel[{col}][0]"
            return f"templateValue[{col}][{row}]"
        if c == Category.TREND:
            name = "templatePos" if p[0] == "up" else "templateNeg"
            return f"{name}[{p[1]}]"
        return f"templateScale[{p[0]}]"


_VAR_PATTERNS = (
    (re.compile(r"^templateSubject\[(\d+)\]$"),
     lambda m: TemplateVar(Category.SUBJECT, (int(m.group(1)),))),
    (re.compile(r"^templateDate\[(\d+)\]\[(\d+)\]$"),
     lambda m: TemplateVar(Category.DATE, (int(m.group(1)), int(m.group(2))))),
    (re.compile(r"^templateXLabel$"),
     lambda m: TemplateVar(Category.AXIS_LABEL, ("x",))),
    (re.compile(r"^templateYLabel$"),
     lambda m: TemplateVar(Category.AXIS_LABEL, ("y",))),
    (re.compile(r"^templateTitle\[(\d+)\]$"),
     lambda m: TemplateVar(Category.TITLE, (int(m.group(1)),))),
    (re.compile(r"^templateLabel\[(\d+)\]\[(\d+)\]$"),
     lambda m: TemplateVar(Category.CELL, (int(m.group(1)), int(m.group(2))))),
    (re.compile(r"^templateValue\[(\d+)\]\[(\d+)\]$"),
     lambda m: TemplateVar(Category.CELL, (int(m.group(1)), int(m.group(2))))),
    (re.compile(r"^templatePos\[(\d+)\]$"),
     lambda m: TemplateVar(Category.TREND, ("up", int(m.group(1))))),
    (re.compile(r"^templateNeg\[(\d+)\]$"),
     lambda m: TemplateVar(Category.TREND, ("down", int(m.group(1))))),
    (re.compile(r"^templateScale\[(\d+)\]$"),
     lambda m: TemplateVar(Category.SCALE, (int(m.group(1)),))),
)


def parse_var(token: str) -> TemplateVar | None:
    """Parse one grammar token; None for literals (including malformed
    template-prefixed strings, which stay literal)."""
    for pattern, build in _VAR_PATTERNS:
        m = pattern.match(token)
        if m:
            return build(m)
    return None


SummaryToken = "str | TemplateVar"  # tokens are either literal text or a variable


@dataclass(frozen=True)
class TemplatedSummary:
    tokens: tuple
    alignments: tuple  # per token: (start, end) source span for vars, None for literals

    def to_text(self) -> str:
        return " ".join(
            t.render() if isinstance(t, TemplateVar) else t for t in self.tokens
        )

    def vars(self) -> list[TemplateVar]:
        return [t for t in self.tokens if isinstance(t, TemplateVar)]


@dataclass
class DetempReport:
    unresolved: list  # (position, rendered grammar token, reason)

    @property
    def count(self) -> int:
        return len(self.unresolved)

    @property
    def ok(self) -> bool:
        return not self.unresolved


def parse_templated_tokens(text: str) -> list:
    """Whitespace-split a templated text into literal/variable tokens."""
    return [parse_var(t) or t for t in text.split()]


def detect_subjects(chart: ChartSample) -> list[str]:
    """Entities from the title: maximal runs of capitalized tokens
    (initial-uppercase or all-caps, function words excluded). A run that is
    just the title's first token is dropped - its capitalization is
    positional, not semantic."""
    tokens = tokenize(chart.title)
    subjects: list[str] = []
    run: list[str] = []
    run_start = 0
    for i, tok in enumerate(tokens + [""]):
        is_cap = bool(tok) and tok[0].isupper() and tok.lower() not in _FUNCTION_WORDS
        if is_cap:
            if not run:
                run_start = i
            run.append(tok)
        elif run:
            if not (run_start == 0 and len(run) == 1):
                surface = " ".join(run)
                if surface not in subjects:
                    subjects.append(surface)
            run = []
    return subjects


class _Grounding:
    """Per-chart match index mapping token spans to template variables."""

    def __init__(self, chart: ChartSample, lexicons: Lexicons):
        self.chart = chart
        self.lexicons = lexicons
        self.subjects = detect_subjects(chart)
        self.title_tokens = tokenize(chart.title)
        self.span_map: dict[tuple, TemplateVar] = {}
        self.numeric_map: dict[str, TemplateVar] = {}
        self.max_span = 1
        self._build()

    def _add(self, tokens: tuple, var: TemplateVar) -> None:
        if not tokens:
            return
        existing = self.span_map.get(tokens)
        if existing is None or var < existing:
            self.span_map[tokens] = var
        self.max_span = max(self.max_span, len(tokens))

    def _build(self) -> None:
        table = self.chart.table
        # Subjects (priority 0), then grounded dates (1), axis labels (2),
        # title tokens (3), cells and headers (4). The _add priority rule
        # keeps the best category per span; within a category the first
        # insertion wins, which realizes the column-major (col, row)
        # tie-break for duplicated cell values.
        for i, surface in enumerate(self.subjects):
            self._add(tuple(tokenize(surface)), TemplateVar(Category.SUBJECT, (i,)))

        for col in range(table.n_columns):
            for row in range(table.n_data_rows + 1):
                toks = tuple(tokenize(table.text_at(col, row)))
                if self.lexicons.date_kind(toks) is not None:
                    self._add(toks, TemplateVar(Category.DATE, (col, row)))

        self._add(tuple(tokenize(self.chart.x_label)), TemplateVar(Category.AXIS_LABEL, ("x",)))
        self._add(tuple(tokenize(self.chart.y_label)), TemplateVar(Category.AXIS_LABEL, ("y",)))

        for i, tok in enumerate(self.title_tokens):
            self._add((tok,), TemplateVar(Category.TITLE, (i,)))

        for col in range(table.n_columns):
            for row in range(table.n_data_rows + 1):
                var = TemplateVar(Category.CELL, (col, row))
                self._add(tuple(tokenize(table.text_at(col, row))), var)
                if row > 0:
                    norm = normalize_number(table.text_at(col, row))
                    if norm is not None and norm not in self.numeric_map:
                        self.numeric_map[norm] = var

    def match(self, span: tuple) -> TemplateVar | None:
        var = self.span_map.get(span)
        if var is not None:
            return var
        if len(span) == 1:
            token = span[0]
            norm = normalize_number(token)
            if norm is not None and norm in self.numeric_map:
                return self.numeric_map[norm]
            trend = self.lexicons.trend_index(token)
            # Only substitute when resolving the variable reproduces the span
            # exactly, so the templatize/detemplatize roundtrip stays lossless.
            if trend is not None:
                direction, k = trend
                lexeme = (self.lexicons.trend_up if direction == "up" else self.lexicons.trend_down)[k]
                if lexeme == token:
                    return TemplateVar(Category.TREND, (direction, k))
            k = self.lexicons.scale_index(token)
            if k is not None and self.lexicons.scale[k] == token:
                return TemplateVar(Category.SCALE, (k,))
        return None


def match_category(
    span: list[str] | tuple, chart: ChartSample, lexicons: Lexicons = DEFAULT_LEXICONS
) -> TemplateVar | None:
    """Highest-priority variable accepting the span, or None."""
    if not span:
        raise ValueError("span must be non-empty")
    return _Grounding(chart, lexicons).match(tuple(span))


def templatize(
    summary: str, chart: ChartSample, lexicons: Lexicons = DEFAULT_LEXICONS
) -> TemplatedSummary:
    """Rewrite a summary into data-variable form against its chart.

    Left-to-right scan; at each position the longest matching span is
    substituted, ties on length resolve to the highest-priority category.
    Unmatched tokens pass through as literals.
    """
    grounding = _Grounding(chart, lexicons)
    tokens = tokenize(summary)
    out: list = []
    alignments: list = []
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for length in range(min(grounding.max_span, n - i), 0, -1):
            var = grounding.match(tuple(tokens[i:i + length]))
            if var is not None:
                out.append(var)
                alignments.append((i, i + length))
                i += length
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            alignments.append(None)
            i += 1
    return TemplatedSummary(tokens=tuple(out), alignments=tuple(alignments))


def resolve_var(
    var: TemplateVar, chart: ChartSample, lexicons: Lexicons = DEFAULT_LEXICONS,
    subjects: list[str] | None = None,
) -> str | None:
    """Referenced chart text for a variable, or None when out of range."""
    c, p = var.category, var.payload
    if c == Category.SUBJECT:
        subs = detect_subjects(chart) if subjects is None else subjects
        return subs[p[0]] if 0 <= p[0] < len(subs) else None
    if c in (Category.DATE, Category.CELL):
        return chart.table.text_at(p[0], p[1])
    if c == Category.AXIS_LABEL:
        return chart.x_label if p[0] == "x" else chart.y_label
    if c == Category.TITLE:
        toks = tokenize(chart.title)
        return toks[p[0]] if 0 <= p[0] < len(toks) else None
    if c == Category.TREND:
        words = lexicons.trend_up if p[0] == "up" else lexicons.trend_down
        return words[p[1]] if 0 <= p[1] < len(words) else None
    if c == Category.SCALE:
        return lexicons.scale[p[0]] if 0 <= p[0] < len(lexicons.scale) else None
    return None


def detemplatize(
    tokens, chart: ChartSample, lexicons: Lexicons = DEFAULT_LEXICONS
) -> tuple[str, DetempReport]:
    """Resolve a literal/variable token stream to surface text.

    Out-of-range variables render as the "[UNK-REF]" sentinel and are listed
    in the report instead of aborting.
    """
    subjects = detect_subjects(chart)
    out: list[str] = []
    unresolved: list = []
    for pos, tok in enumerate(tokens):
        if isinstance(tok, TemplateVar):
            text = resolve_var(tok, chart, lexicons, subjects=subjects)
            if text is None:
                out.append(UNK_REF)
                unresolved.append((pos, tok.render(), "index out of range"))
            else:
                out.extend(tokenize(text))
        else:
            out.append(tok)
    return " ".join(out), DetempReport(unresolved=unresolved)
