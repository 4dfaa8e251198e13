import pytest

from chartsum.corpus import Cell, ChartSample, DataTable
from chartsum.encoding import (
    BOS,
    EOS,
    PAD,
    UNK,
    EncodingBoundsError,
    VarBounds,
    Vocab,
    build_feature_vocabs,
    build_vocab,
    encode_records,
    label_records,
    label_tokens,
    make_training_example,
    variable_tokens,
)
from chartsum.synth import SynthSpec, generate_synthetic_corpus
from chartsum.template_engine import Category, TemplatedSummary, TemplateVar, templatize


def make_chart(headers, rows, **kw):
    defaults = dict(title="Acme Corp figures", x_label="Year", y_label="Value",
                    chart_type="simple-line", summary="text")
    defaults.update(kw)
    return ChartSample(
        id="e0",
        table=DataTable(
            headers=tuple(headers),
            rows=tuple(tuple(Cell.from_raw(c) for c in row) for row in rows),
        ),
        **defaults,
    )


CHART = make_chart(
    ("Year", "Sales", "Costs"),
    (("2015", "800", "300"), ("2016", "950", "410"), ("2017", "1,200", "520"),
     ("2018", "700", "615")),
)


def ts_of(*tokens):
    return TemplatedSummary(tokens=tuple(tokens), alignments=tuple(None for _ in tokens))


def test_encode_records_shape_and_order():
    records = encode_records(CHART)
    assert len(records) == 12  # 3 columns x 4 data rows
    assert records[0].header == "Year"
    assert records[0].value == "2015"
    assert records[0].column_index == 0
    assert records[0].chart_type == "simple-line"
    assert records[1].header == "Sales"
    # row-major: record k = row * n_cols + col
    assert records[5].value == "410"


def test_encode_records_liverpool(liverpool):
    records = encode_records(liverpool)
    broadcasting = [r for r in records if r.header == "Broadcasting"]
    assert broadcasting and all(r.column_index == 2 for r in broadcasting)


def test_label_records_direct_reference():
    records = encode_records(CHART)
    ts = ts_of(TemplateVar(Category.CELL, (2, 1)))  # column 2, data row 1
    labels = label_records(records, ts, CHART)
    assert labels[2] == 1
    assert sum(labels) == 1


def test_label_records_all_literal_is_zero():
    records = encode_records(CHART)
    labels = label_records(records, ts_of("just", "words"), CHART)
    assert sum(labels) == 0


def test_label_records_max_min_exactly_two():
    records = encode_records(CHART)
    # Sales column: max 1,200 at row 3, min 700 at row 4 (grid rows).
    ts = ts_of(TemplateVar(Category.CELL, (1, 3)), "and", TemplateVar(Category.CELL, (1, 4)))
    labels = label_records(records, ts, CHART)
    oracle = [0] * 12
    oracle[2 * 3 + 1] = 1  # (row 3) -> record (3-1)*3+1
    oracle[3 * 3 + 1] = 1
    assert labels == oracle
    assert sum(labels) == 2


def test_label_records_permutation_equivariance():
    import random

    records = encode_records(CHART)
    ts = ts_of(TemplateVar(Category.CELL, (1, 3)), TemplateVar(Category.DATE, (0, 1)))
    labels = label_records(records, ts, CHART)
    rng = random.Random(0)
    perm = list(range(len(records)))
    rng.shuffle(perm)
    permuted = [records[i] for i in perm]
    # labels are attached per record identity, so permuting records permutes labels
    base = {id(r): l for r, l in zip(records, labels)}
    permuted_labels = label_records_permuted(permuted, records, labels)
    assert permuted_labels == [base[id(r)] for r in permuted]


def label_records_permuted(permuted, records, labels):
    lookup = {i: l for i, l in enumerate(labels)}
    index_of = {id(r): i for i, r in enumerate(records)}
    return [lookup[index_of[id(r)]] for r in permuted]


def test_label_tokens():
    records = encode_records(CHART)
    ts = ts_of(
        TemplateVar(Category.CELL, (1, 3)),   # references a record -> 1
        "the",                                 # function word -> 0
        "Sales",                               # equals a header -> 1
        "1200",                                # number-normalized value match -> 1
        TemplateVar(Category.TREND, ("up", 0)),  # lexicon word, no record -> 0
    )
    assert label_tokens(ts, records, CHART) == [1, 0, 1, 1, 0]


def test_label_tokens_liverpool_header(liverpool):
    records = encode_records(liverpool)
    ts = ts_of("Broadcasting")
    assert label_tokens(ts, records, liverpool) == [1]


def test_vocab_specials_fixed():
    v = build_vocab(["a a b"], min_freq=2, bounds=VarBounds(columns=1, rows=1, title_tokens=1, subjects=1))
    assert v.id("<pad>") == PAD == 0
    assert v.id("<bos>") == BOS == 1
    assert v.id("<eos>") == EOS == 2
    assert v.id("<unk>") == UNK == 3
    assert "a" in v.tokens
    assert "b" not in v.tokens
    assert v.id("b") == UNK


def test_vocab_contains_grammar_tokens():
    bounds = VarBounds(columns=2, rows=3, title_tokens=2, subjects=1)
    v = build_vocab([], min_freq=1, bounds=bounds)
    for tok in variable_tokens(bounds):
        assert v.id(tok) != UNK, tok
    assert "templateValue[1][3]" in v.tokens
    assert "templateValue[1][4]" not in v.tokens  # beyond row bound


def test_vocab_roundtrip_json():
    v = build_vocab(["x y z z"], min_freq=1,
                    bounds=VarBounds(columns=1, rows=1, title_tokens=1, subjects=1))
    again = Vocab.from_json(v.to_json())
    assert again.tokens == v.tokens


def test_vocab_deterministic_order():
    texts = ["b a a", "c c c b"]
    bounds = VarBounds(columns=1, rows=1, title_tokens=1, subjects=1)
    v1 = build_vocab(texts, 1, bounds)
    v2 = build_vocab(list(texts), 1, bounds)
    assert v1.tokens == v2.tokens
    # frequency desc then lexicographic: c(3), a(2), b(2) -> a before b
    content = [t for t in v1.tokens if t in ("a", "b", "c")]
    assert content == ["c", "a", "b"]


def test_synthetic_corpus_encodes_without_unk():
    corpus = generate_synthetic_corpus(SynthSpec(n_samples=100, seed=13))
    bounds = VarBounds(columns=8, rows=16, title_tokens=16, subjects=8)
    tss = [templatize(s.summary, s) for s in corpus]
    texts = [ts.to_text() for ts in tss]
    vocab = build_vocab(texts, min_freq=1, bounds=bounds)
    for sample, ts in zip(corpus, tss):
        ex = make_training_example(sample, ts, vocab, bounds)
        assert UNK not in ex.target_ids, sample.id
        decoded = vocab.decode(ex.target_ids[1:-1])
        assert " ".join(decoded) == ts.to_text()


def test_training_example_roundtrip_json():
    corpus = generate_synthetic_corpus(SynthSpec(n_samples=3, seed=14))
    bounds = VarBounds(columns=8, rows=16, title_tokens=16, subjects=8)
    sample = corpus.samples[0]
    ts = templatize(sample.summary, sample)
    vocab = build_vocab([ts.to_text()], 1, bounds)
    ex = make_training_example(sample, ts, vocab, bounds)
    assert ex.target_ids[0] == BOS and ex.target_ids[-1] == EOS
    assert len(ex.token_labels) == len(ex.target_ids)
    assert len(ex.record_labels) == len(ex.records)
    from chartsum.encoding import TrainingExample

    again = TrainingExample.from_dict(ex.to_dict())
    assert again == ex


def test_bounds_rejection():
    wide = make_chart(
        tuple(f"h{i}" for i in range(5)),
        ((tuple(str(i) for i in range(5))),),
    )
    ts = ts_of("x")
    vocab = build_vocab(["x"], 1, VarBounds(columns=4, rows=4, title_tokens=8, subjects=2))
    with pytest.raises(EncodingBoundsError) as err:
        make_training_example(wide, ts, vocab, VarBounds(columns=4, rows=4, title_tokens=8, subjects=2))
    assert "e0" in str(err.value)


def test_feature_vocabs():
    corpus = generate_synthetic_corpus(SynthSpec(n_samples=5, seed=15))
    bounds = VarBounds(columns=8, rows=16, title_tokens=16, subjects=8)
    tss = [templatize(s.summary, s) for s in corpus]
    vocab = build_vocab([t.to_text() for t in tss], 1, bounds)
    exs = [make_training_example(s, t, vocab, bounds) for s, t in zip(corpus, tss)]
    hv, vv = build_feature_vocabs(exs)
    assert hv.id(exs[0].records[0].header) >= 2
    assert hv.id("never-seen-header") == 1  # unk
