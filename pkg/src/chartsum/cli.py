"""chartsum command line: ingest, synth, templatize, train, generate, evaluate, stats.

Exit codes: 0 success, 1 validation failure, 2 runtime/divergence, 3 usage.
Logs go to stderr; artifacts go to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .corpus import CorpusError, corpus_stats, load_corpus, recover_axis_label, save_corpus
from .encoding import EncodingBoundsError, Vocab
from .metrics import evaluate_corpus
from .model import DivergenceError
from .pipeline import (
    GenResult,
    RunSettings,
    generate_for_corpus,
    make_manifest,
    run_training,
    write_sidecar_manifest,
)
from .report import write_eval_outputs, write_history_outputs, write_json, write_stats_outputs
from .synth import SynthSpec, generate_synthetic_corpus
from .template_engine import detemplatize, parse_templated_tokens, templatize

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 3


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        log(f"error: {message}")
        sys.exit(EXIT_USAGE)


def _cmd_ingest(args) -> int:
    try:
        corpus = load_corpus(args.input)
    except CorpusError as e:
        print(f"validation FAILED: {len(e.errors)} violation(s)")
        for err in e.errors:
            print(f"  {err}")
        return EXIT_VALIDATION
    recovered = sum(
        1 for s in corpus if not s.x_label and recover_axis_label(s.table) is not None
    )
    print(f"validation OK: {len(corpus)} sample(s)")
    if recovered:
        print(f"{recovered} sample(s) missing x_label have a recoverable temporal label")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SynthSpec(n_samples=args.n, seed=args.seed)
    corpus = generate_synthetic_corpus(spec)
    out = Path(args.out)
    save_corpus(corpus, out)
    write_sidecar_manifest(out, make_manifest("synth", args.seed, {"n_samples": args.n}))
    log(f"wrote {len(corpus)} samples to {out}")
    return EXIT_OK


def _cmd_templatize(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not args.reverse:
        corpus = load_corpus(args.input)
        from .corpus import sample_to_record

        with out.open("w", encoding="utf-8") as f:
            for sample in corpus:
                rec = sample_to_record(sample)
                rec["templated"] = templatize(sample.summary, sample).to_text()
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
        write_sidecar_manifest(out, make_manifest("templatize", 0, {"input": str(args.input)}))
        log(f"templatized {len(corpus)} samples to {out}")
        return EXIT_OK

    corpus = load_corpus(args.input)  # validates the embedded chart fields
    templated_by_id = {}
    for line in Path(args.input).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            templated_by_id[rec["id"]] = rec.get("templated")
    missing = [s.id for s in corpus if templated_by_id.get(s.id) is None]
    if missing:
        print(f"missing 'templated' field for ids: {', '.join(missing[:10])}")
        return EXIT_VALIDATION
    total_unresolved = 0
    with out.open("w", encoding="utf-8") as f:
        for sample in corpus:
            tokens = parse_templated_tokens(templated_by_id[sample.id])
            text, report = detemplatize(tokens, sample)
            total_unresolved += report.count
            f.write(json.dumps(
                {"id": sample.id, "text": text, "unresolved": report.count,
                 "report": [{"position": p, "token": t, "reason": r} for p, t, r in report.unresolved]},
                ensure_ascii=False) + "\n")
    write_sidecar_manifest(out, make_manifest("detemplatize", 0, {"input": str(args.input)}))
    log(f"detemplatized {len(corpus)} samples to {out} ({total_unresolved} unresolved reference(s))")
    return EXIT_OK


def _cmd_train(args) -> int:
    overrides = {"corpus": args.corpus, "out_dir": args.out_dir, "seed": args.seed}
    settings = RunSettings.from_file(args.config, overrides)
    corpus = load_corpus(settings.corpus)
    out_dir = Path(settings.out_dir)
    artifacts = run_training(settings, corpus, out_dir, log=log)
    manifest = make_manifest("train", settings.seed, settings.to_dict())
    write_json(manifest, out_dir / "manifest.json")
    write_history_outputs(artifacts.history, out_dir, manifest)
    log(f"checkpoint: {artifacts.checkpoint_path}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    vocab = Vocab.from_json(Path(args.vocab).read_text(encoding="utf-8"))
    corpus = load_corpus(args.input)
    results = generate_for_corpus(
        ckpt, vocab, corpus,
        beam_size=args.beam_size, max_len=args.max_len, greedy=args.greedy, log=log,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        for r in results:
            f.write(json.dumps(
                {"id": r.id, "text": r.text, "tokens": " ".join(r.tokens),
                 "unresolved": r.n_unresolved,
                 "report": [{"position": p, "token": t, "reason": rr} for p, t, rr in r.unresolved]},
                ensure_ascii=False) + "\n")
    write_sidecar_manifest(out, make_manifest(
        "generate", ckpt.extra.get("seed", 0),
        {"checkpoint": str(args.checkpoint), "beam_size": args.beam_size, "greedy": args.greedy},
    ))
    log(f"wrote {len(results)} generations to {out}")
    return EXIT_OK


def _load_text_by_id(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        text = rec.get("text", rec.get("summary"))
        if "id" not in rec or text is None:
            raise CorpusError([f"{path}: records need 'id' and 'text' (or 'summary') fields"])
        out[rec["id"]] = text
    return out


def _cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus)
    generated = _load_text_by_id(Path(args.generated))
    gold = _load_text_by_id(Path(args.gold)) if args.gold else {s.id: s.summary for s in corpus}
    ids = [s.id for s in corpus]
    missing_gen = [i for i in ids if i not in generated]
    missing_gold = [i for i in ids if i not in gold]
    if missing_gen or missing_gold:
        for name, missing in (("generated", missing_gen), ("gold", missing_gold)):
            if missing:
                print(f"missing {name} text for ids: {', '.join(missing[:10])}"
                      + (" ..." if len(missing) > 10 else ""))
        return EXIT_VALIDATION
    outputs = [(generated[s.id], gold[s.id], s) for s in corpus]
    report = evaluate_corpus(outputs, config={"ablation": args.tag, "bleu": "sentence-mean, add-one smoothing n>=2"})
    paths = write_eval_outputs(report, Path(args.out), make_manifest("evaluate", 0, {"tag": args.tag}))
    log("wrote " + ", ".join(str(p) for p in paths))
    print(f"bleu_mean={report.bleu_mean:.4f} cs_mean={report.cs_mean:.2f} cs_std={report.cs_std:.2f}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    corpus = load_corpus(args.input)
    stats = corpus_stats(corpus)
    paths = write_stats_outputs(stats, Path(args.out), make_manifest("stats", 0, {"input": str(args.input)}))
    print(stats.to_text_table())
    log("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="chartsum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--validate", action="store_true", help="accepted for interface compatibility")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("templatize", help="rewrite summaries into variable form (or back)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reverse", action="store_true")
    p.set_defaults(func=_cmd_templatize)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", default=None, help="override the config corpus path")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="decode summaries with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam-size", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--greedy", action="store_true")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="score generated summaries against gold")
    p.add_argument("--generated", required=True)
    p.add_argument("--gold", default=None, help="JSONL with id/text; defaults to corpus summaries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="templated")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "n", None) is not None and args.n < 1:
        parser.error("--n must be >= 1")
    try:
        return args.func(args)
    except CorpusError as e:
        for err in e.errors:
            print(err)
        return EXIT_VALIDATION
    except (DivergenceError, CheckpointError, EncodingBoundsError, OSError) as e:
        log(f"error: {e}")
        return EXIT_RUNTIME
    except ValueError as e:
        log(f"error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
