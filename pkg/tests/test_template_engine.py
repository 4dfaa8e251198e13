import json

import pytest

from chartsum.corpus import Cell, ChartSample, DataTable
from chartsum.lexicons import DEFAULT_LEXICONS
from chartsum.synth import SynthSpec, generate_synthetic_corpus
from chartsum.template_engine import (
    UNK_REF,
    Category,
    TemplateVar,
    detect_subjects,
    detemplatize,
    match_category,
    parse_templated_tokens,
    parse_var,
    templatize,
)
from chartsum.text import tokenize


def make_chart(headers, rows, title, x_label="Year", y_label="Value",
               chart_type="simple-line", summary="placeholder text"):
    return ChartSample(
        id="t0",
        table=DataTable(
            headers=tuple(headers),
            rows=tuple(tuple(Cell.from_raw(c) for c in row) for row in rows),
        ),
        title=title,
        x_label=x_label,
        y_label=y_label,
        chart_type=chart_type,
        summary=summary,
    )


SALES_CHART = make_chart(
    headers=("Year", "Sales"),
    rows=(("2015", "800"), ("2016", "950"), ("2017", "1,200")),
    title="Sales of Acme Corp from 2015 to 2017",
    y_label="Sales in million euros",
)


# -- independent oracle -------------------------------------------------------


def oracle_matches(span, chart, lexicons=DEFAULT_LEXICONS):
    """Brute-force re-derivation of every category accepting a span, written
    without the grounding-index machinery. Returns a list of (priority,
    TemplateVar) candidates."""
    out = []
    text = " ".join(span)
    for i, subject in enumerate(detect_subjects(chart)):
        if text == subject:
            out.append(TemplateVar(Category.SUBJECT, (i,)))
    kind = lexicons.date_kind(tuple(span))
    if kind is not None:
        hits = []
        for col in range(chart.table.n_columns):
            for row in range(chart.table.n_data_rows + 1):
                if tuple(tokenize(chart.table.text_at(col, row))) == tuple(span):
                    hits.append((col, row))
        if hits:
            out.append(TemplateVar(Category.DATE, min(hits)))
    if tuple(tokenize(chart.x_label)) == tuple(span):
        out.append(TemplateVar(Category.AXIS_LABEL, ("x",)))
    elif tuple(tokenize(chart.y_label)) == tuple(span):
        out.append(TemplateVar(Category.AXIS_LABEL, ("y",)))
    title_toks = tokenize(chart.title)
    if len(span) == 1 and span[0] in title_toks:
        out.append(TemplateVar(Category.TITLE, (title_toks.index(span[0]),)))
    cell_hits = []
    for col in range(chart.table.n_columns):
        for row in range(chart.table.n_data_rows + 1):
            raw = chart.table.text_at(col, row)
            if tuple(tokenize(raw)) == tuple(span):
                cell_hits.append((col, row))
            elif len(span) == 1 and row > 0:
                from chartsum.text import normalize_number

                a, b = normalize_number(span[0]), normalize_number(raw)
                if a is not None and a == b:
                    cell_hits.append((col, row))
    if cell_hits:
        out.append(TemplateVar(Category.CELL, min(cell_hits)))
    if len(span) == 1:
        trend = lexicons.trend_index(span[0])
        if trend is not None:
            direction, k = trend
            words = lexicons.trend_up if direction == "up" else lexicons.trend_down
            if words[k] == span[0]:
                out.append(TemplateVar(Category.TREND, (direction, k)))
        k = lexicons.scale_index(span[0])
        if k is not None and lexicons.scale[k] == span[0]:
            out.append(TemplateVar(Category.SCALE, (k,)))
    return sorted(out)


def oracle_templatize(summary, chart):
    """Longest-match/priority scan re-implemented over the brute-force
    matcher."""
    tokens = tokenize(summary)
    out = []
    i = 0
    while i < len(tokens):
        best = None
        for length in range(len(tokens) - i, 0, -1):
            cands = oracle_matches(tokens[i:i + length], chart)
            if cands:
                best = (length, cands[0])
                break
        if best is None:
            out.append(tokens[i])
            i += 1
        else:
            out.append(best[1])
            i += best[0]
    return out


# -- matcher examples ---------------------------------------------------------


def test_match_year_grounded_in_table():
    var = match_category(["2017"], SALES_CHART)
    assert var == TemplateVar(Category.DATE, (0, 3))
    assert var.render() == "templateDate[0][3]"


def test_match_scale_and_trend():
    var = match_category(["percentage"], SALES_CHART)
    assert var.category == Category.SCALE
    assert DEFAULT_LEXICONS.scale[var.payload[0]] == "percentage"
    var = match_category(["growing"], SALES_CHART)
    assert var.category == Category.TREND
    assert var.payload[0] == "up"


def test_match_agrees_with_oracle_on_selected_spans():
    spans = [
        ["2017"], ["2015"], ["1,200"], ["800"], ["Sales"], ["Acme", "Corp"],
        ["growing"], ["declining"], ["million"], ["%"], ["Year"], ["the"],
        ["Acme"], ["from"],
    ]
    for span in spans:
        expected = oracle_matches(span, SALES_CHART)
        got = match_category(span, SALES_CHART)
        if expected:
            assert got == expected[0], f"span {span}"
        else:
            assert got is None, f"span {span}"


def test_templatize_worked_example_against_oracle():
    summary = "Sales peaked at 1,200 million in 2017"
    ts = templatize(summary, SALES_CHART)
    assert list(ts.tokens) == oracle_templatize(summary, SALES_CHART)
    rendered = ts.to_text().split()
    # "Sales" is both a title token and a header; the title has priority.
    assert rendered[0].startswith("templateTitle[")
    assert "templateValue[1][3]" in rendered  # 1,200
    assert any(t.startswith("templateScale[") for t in rendered)  # million
    assert "templateDate[0][3]" in rendered  # 2017
    assert rendered[1] == "peaked"  # not a lexicon word, stays literal


def test_templatize_liverpool_header(liverpool):
    ts = templatize("Broadcasting is the largest source of revenue for Liverpool FC", liverpool)
    rendered = ts.to_text().split()
    assert rendered[0] == "templateLabel[2][0]"
    assert rendered[-1] == "templateSubject[0]"
    # "of" is also a title token so it templatizes; lowercase "revenue" does
    # not match the capitalized title token and stays literal.
    assert rendered[1:7] == ["is", "the", "largest", "source", "templateTitle[1]", "revenue"]


def test_templatize_no_matches_all_literal():
    ts = templatize("the the the", SALES_CHART)
    assert list(ts.tokens) == ["the", "the", "the"]
    assert all(a is None for a in ts.alignments)


def test_alignments_cover_source_spans():
    summary = "Sales of Acme Corp grew to 1,200 million in 2017 ."
    ts = templatize(summary, SALES_CHART)
    spans = [a for a in ts.alignments if a is not None]
    # no two var alignments overlap and they are increasing
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        assert e1 <= s2
    toks = tokenize(summary)
    subj = [t for t, a in zip(ts.tokens, ts.alignments) if isinstance(t, TemplateVar)
            and t.category == Category.SUBJECT]
    assert subj, "Acme Corp should match as a subject"
    subj_span = [a for t, a in zip(ts.tokens, ts.alignments) if isinstance(t, TemplateVar)
                 and t.category == Category.SUBJECT][0]
    assert toks[subj_span[0]:subj_span[1]] == ["Acme", "Corp"]


# -- priority and longest match ----------------------------------------------


def test_priority_title_over_cell():
    # "Sales" is title token 0 and also the header of column 1.
    var = match_category(["Sales"], SALES_CHART)
    assert var.category == Category.TITLE


def test_priority_date_over_title_and_cell():
    # "2015" appears in the title AND as a table cell; Date must win.
    var = match_category(["2015"], SALES_CHART)
    assert var.category == Category.DATE


def test_priority_subject_over_everything():
    chart = make_chart(
        headers=("Year", "Acme Corp"),
        rows=(("2015", "10"), ("2016", "20")),
        title="Acme Corp results",
    )
    var = match_category(["Acme", "Corp"], chart)
    assert var.category == Category.SUBJECT


def test_longest_match_wins():
    chart = make_chart(
        headers=("Country", "Total"),
        rows=(("United States", "10"), ("United Kingdom", "20")),
        title="Exports by country",
        x_label="Country",
        chart_type="simple-bar",
    )
    ts = templatize("United States exports grew", chart)
    assert isinstance(ts.tokens[0], TemplateVar)
    assert ts.tokens[0] == TemplateVar(Category.CELL, (0, 1))
    assert ts.alignments[0] == (0, 2)


def test_ambiguous_cell_binds_column_major():
    chart = make_chart(
        headers=("Year", "A", "B"),
        rows=(("2015", "7", "7"),),
        title="Duplicates",
    )
    var = match_category(["7"], chart)
    assert var == TemplateVar(Category.CELL, (1, 1))


# -- subjects ------------------------------------------------------------------


def test_detect_subjects_examples():
    assert detect_subjects(make_chart(
        headers=("A", "B"), rows=(("1", "2"),),
        title="Revenue of Liverpool FC by stream")) == ["Liverpool FC"]
    assert detect_subjects(make_chart(
        headers=("A", "B"), rows=(("1", "2"),),
        title="annual revenue by year")) == []
    assert detect_subjects(make_chart(
        headers=("A", "B"), rows=(("1", "2"),),
        title="Facebook Fans of NFL Teams")) == ["Facebook Fans", "NFL Teams"]


def test_detect_subjects_dedup_and_order():
    subs = detect_subjects(make_chart(
        headers=("A", "B"), rows=(("1", "2"),),
        title="Tesla sales versus Tesla output in Norway"))
    assert subs == ["Tesla", "Norway"]


# -- detemplatize --------------------------------------------------------------


def test_roundtrip_simple():
    summary = "Sales of Acme Corp grew to 1,200 million in 2017 ."
    ts = templatize(summary, SALES_CHART)
    text, report = detemplatize(ts.tokens, SALES_CHART)
    assert text == summary
    assert report.ok


def test_roundtrip_synthetic_corpus():
    corpus = generate_synthetic_corpus(SynthSpec(n_samples=60, seed=9))
    for sample in corpus:
        ts = templatize(sample.summary, sample)
        text, report = detemplatize(ts.tokens, sample)
        assert report.ok, sample.id
        assert text == sample.summary, sample.id


def test_out_of_range_var_is_reported_not_fatal():
    bad = TemplateVar(Category.CELL, (99, 1))
    text, report = detemplatize([bad], SALES_CHART)
    assert text == UNK_REF
    assert report.count == 1
    assert report.unresolved[0][1] == "templateValue[99][1]"


def test_unk_ref_count_matches_output():
    tokens = [
        TemplateVar(Category.CELL, (99, 1)),
        "and",
        TemplateVar(Category.TITLE, (50,)),
        TemplateVar(Category.DATE, (0, 1)),
    ]
    text, report = detemplatize(tokens, SALES_CHART)
    assert text.split().count(UNK_REF) == report.count == 2


def test_detemplatize_hand_templated_fixture(liverpool):
    stream = ("templateLabel[2][0] is the largest source of revenue for "
              "templateSubject[0] . In templateValue[0][4] the club generated "
              "templateValue[2][4] templateScale[4] GBP from broadcasting , "
              "templatePos[21] from templateValue[2][3] templateScale[4] GBP a season earlier .")
    text, report = detemplatize(parse_templated_tokens(stream), liverpool)
    assert report.ok
    assert text == liverpool.summary


def test_parse_var_grammar():
    assert parse_var("templateLabel[2][0]") == TemplateVar(Category.CELL, (2, 0))
    assert parse_var("templateValue[1][3]") == TemplateVar(Category.CELL, (1, 3))
    assert parse_var("templateXLabel") == TemplateVar(Category.AXIS_LABEL, ("x",))
    assert parse_var("templatePos[2]") == TemplateVar(Category.TREND, ("up", 2))
    assert parse_var("templateSubject[0]") == TemplateVar(Category.SUBJECT, (0,))
    assert parse_var("not-a-var") is None
    assert parse_var("templateValue[1]") is None  # malformed stays literal


def test_determinism():
    summary = "Sales of Acme Corp grew to 1,200 million in 2017 ."
    a = templatize(summary, SALES_CHART)
    b = templatize(summary, SALES_CHART)
    assert a == b
