"""Report rendering: JSON, aligned text tables, CSV, and matplotlib figures.

Every report path writes the figure next to the delimited output so a run
directory is self-describing.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .corpus import StatsReport
from .metrics import EvalReport
from .training import TrainHistory


def write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_stats_outputs(stats: StatsReport, out_dir: Path, manifest: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "stats.json"
    write_json({"stats": stats.to_dict(), "manifest": manifest}, json_path)
    txt_path = out_dir / "stats.txt"
    txt_path.write_text(stats.to_text_table() + "\n", encoding="utf-8")

    fig_path = out_dir / "stats.png"
    counts = stats.chart_type_counts
    names = list(counts)
    values = [counts[n] for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, values, color=["#4C72B0", "#DD8452", "#55A868", "#C44E52"])
    ax.set_ylabel("samples")
    ax.set_title("Chart type distribution")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [json_path, txt_path, fig_path]


def write_eval_outputs(report: EvalReport, out_dir: Path, manifest: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["manifest"] = manifest
    json_path = out_dir / "eval.json"
    write_json(payload, json_path)
    txt_path = out_dir / "eval.txt"
    txt_path.write_text(report.to_text_table() + "\n", encoding="utf-8")

    csv_path = out_dir / "eval.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "bleu", "cs", "mentions_gen", "overlap", "flagged"])
        for s in report.samples:
            writer.writerow([s.id, f"{s.bleu:.6f}", f"{s.cs:.4f}", s.mentions_gen, s.overlap, int(s.flagged)])

    fig_path = out_dir / "eval.png"
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].hist([s.bleu for s in report.samples], bins=20, color="#4C72B0")
    axes[0].set_title(f"BLEU (mean {report.bleu_mean:.3f})")
    axes[0].set_xlabel("BLEU")
    axes[1].hist([s.cs for s in report.samples], bins=20, color="#55A868")
    axes[1].set_title(f"Content selection (mean {report.cs_mean:.1f})")
    axes[1].set_xlabel("CS %")
    for ax in axes:
        ax.set_ylabel("samples")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [json_path, txt_path, csv_path, fig_path]


def write_history_outputs(history: TrainHistory, out_dir: Path, manifest: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "history.json"
    write_json({"history": history.to_dict(), "manifest": manifest}, json_path)

    fig_path = out_dir / "history.png"
    epochs = [e.epoch for e in history.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [e.train_loss for e in history.epochs], label="train", marker="o", ms=3)
    if any(e.val_loss is not None for e in history.epochs):
        ax.plot(
            [e.epoch for e in history.epochs if e.val_loss is not None],
            [e.val_loss for e in history.epochs if e.val_loss is not None],
            label="validation", marker="s", ms=3,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Training loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [json_path, fig_path]
