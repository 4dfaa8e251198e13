"""Chart-to-text summarization pipeline.

Ingests chart data tables with gold summaries, rewrites summaries into
data-variable form, trains a small transformer encoder-decoder with a binary
content-selection head, decodes via beam search, resolves variables back to
surface text, and scores outputs with BLEU and a content-selection metric.
"""

__version__ = "0.1.0"

from .corpus import (
    ChartSample,
    Corpus,
    CorpusError,
    DataTable,
    corpus_stats,
    load_corpus,
    recover_axis_label,
    save_corpus,
    split_corpus,
)
from .synth import SynthSpec, generate_synthetic_corpus
from .template_engine import (
    TemplatedSummary,
    TemplateVar,
    detect_subjects,
    detemplatize,
    match_category,
    templatize,
)
from .encoding import RecordTuple, Vocab, build_vocab, encode_records, label_records, label_tokens
from .model import Model, ModelConfig, TrainConfig, positional_encoding
from .metrics import bleu, content_selection, evaluate_corpus
