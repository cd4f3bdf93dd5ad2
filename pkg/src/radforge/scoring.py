"""Score generated reports against references: corpus and per-report NLG
scores, optional clinical-efficacy labeling, and a rendered score report
(JSON + CSV + figures) on disk.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .corpus import tokenize
from .errors import SchemaError
from .metrics import (
    OBSERVATIONS,
    NlgScoreSet,
    bleu,
    ce_scores,
    keyword_label,
    label_via_service,
    meteor,
    rouge_l,
    score_corpus,
)

LABELER_MODES = ("keyword", "service", "none")


def load_text_jsonl(path) -> dict[str, str]:
    """Read {"id", "text"} JSONL (corpus files with "report_text" also
    work); returns id -> text preserving no particular order."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if "id" not in obj:
                raise SchemaError(f"{path}:{lineno}: missing 'id'")
            text = obj.get("text", obj.get("report_text"))
            if text is None:
                raise SchemaError(f"{path}:{lineno}: missing 'text' (or 'report_text')")
            if obj["id"] in out:
                raise SchemaError(f"{path}:{lineno}: duplicate id {obj['id']!r}")
            out[str(obj["id"])] = str(text)
    return out


def align_by_id(predictions: dict[str, str], references: dict[str, str]) -> list[str]:
    """Shared id order (reference order is canonical); any id on one side
    only is a hard error listing the first offenders."""
    missing_refs = [i for i in predictions if i not in references]
    missing_preds = [i for i in references if i not in predictions]
    offenders = missing_refs + missing_preds
    if offenders:
        raise SchemaError(
            f"{len(offenders)} unmatched id(s) between predictions and references, "
            f"first 5: {offenders[:5]}"
        )
    return list(references)


def pair_scores(hyp_tokens: list[str], ref_tokens: list[str]) -> NlgScoreSet:
    return NlgScoreSet(
        bleu_1=bleu([hyp_tokens], [ref_tokens], 1),
        bleu_4=bleu([hyp_tokens], [ref_tokens], 4),
        meteor=meteor(hyp_tokens, ref_tokens),
        rouge_l=rouge_l(hyp_tokens, ref_tokens)[2],
    )


def ce_per_observation(predicted, gold) -> dict[str, dict[str, int]]:
    counts = {obs: {"tp": 0, "fp": 0, "fn": 0} for obs in OBSERVATIONS}
    for pred, ref in zip(predicted, gold):
        for obs, p, g in zip(OBSERVATIONS, pred.values, ref.values):
            p_pos = p == "positive"
            g_pos = g == "positive"
            if p_pos and g_pos:
                counts[obs]["tp"] += 1
            elif p_pos:
                counts[obs]["fp"] += 1
            elif g_pos:
                counts[obs]["fn"] += 1
    return counts


def score_files(
    predictions_path,
    references_path,
    labeler: str = "keyword",
    service_url: str | None = None,
    uncertain_as: str = "negative",
) -> dict:
    """Compute the full score report as a JSON-ready dict."""
    if labeler not in LABELER_MODES:
        raise SchemaError(f"labeler must be one of {LABELER_MODES}, got {labeler!r}")
    predictions = load_text_jsonl(predictions_path)
    references = load_text_jsonl(references_path)
    ids = align_by_id(predictions, references)
    if not ids:
        raise SchemaError("no report pairs to score")
    hyp_tokens = [tokenize(predictions[i]) for i in ids]
    ref_tokens = [tokenize(references[i]) for i in ids]
    corpus_scores = score_corpus(hyp_tokens, ref_tokens)
    per_report = [
        {"id": i, **pair_scores(h, r).as_dict()}
        for i, h, r in zip(ids, hyp_tokens, ref_tokens)
    ]
    report: dict = {
        "nlg": corpus_scores.as_dict(),
        "labeler": labeler,
        "ce": None,
        "ce_per_observation": None,
        "report_count": len(ids),
        "per_report": per_report,
    }
    if labeler != "none":
        if labeler == "keyword":
            pred_labels = [keyword_label(predictions[i]) for i in ids]
            gold_labels = [keyword_label(references[i]) for i in ids]
        else:
            if not service_url:
                raise SchemaError("labeler 'service' requires a service URL")
            pred_labels = label_via_service([predictions[i] for i in ids], service_url)
            gold_labels = label_via_service([references[i] for i in ids], service_url)
        ce = ce_scores(pred_labels, gold_labels, uncertain_as=uncertain_as)
        report["ce"] = ce.as_dict()
        report["ce_per_observation"] = ce_per_observation(pred_labels, gold_labels)
    return report


def _render_nlg_figure(per_report: list[dict], path: Path) -> None:
    metrics = ("bleu_1", "bleu_4", "meteor", "rouge_l")
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for ax, metric in zip(axes.flat, metrics):
        ax.hist([row[metric] for row in per_report], bins=20, range=(0, 1), color="#4878a8")
        ax.set_title(metric)
        ax.set_xlabel("score")
        ax.set_ylabel("reports")
    fig.suptitle("Per-report NLG score distributions")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_ce_figure(ce_counts: dict[str, dict[str, int]], path: Path) -> None:
    observations = list(ce_counts)
    x = range(len(observations))
    width = 0.28
    fig, ax = plt.subplots(figsize=(11, 5))
    for offset, (key, color) in enumerate(
        (("tp", "#3a923a"), ("fp", "#c44e52"), ("fn", "#dd8452"))
    ):
        ax.bar(
            [i + (offset - 1) * width for i in x],
            [ce_counts[obs][key] for obs in observations],
            width=width,
            label=key,
            color=color,
        )
    ax.set_xticks(list(x))
    ax.set_xticklabels(observations, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("cells")
    ax.set_title("Clinical-efficacy counts per observation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_score_report(report: dict, out_dir) -> dict[str, Path]:
    """Persist scores.json, the per-report CSV, and the figures; returns
    the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["scores"] = out_dir / "scores.json"
    paths["scores"].write_text(
        json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    paths["per_report"] = out_dir / "per_report.csv"
    with open(paths["per_report"], "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["id", "bleu_1", "bleu_4", "meteor", "rouge_l"])
        writer.writeheader()
        writer.writerows(report["per_report"])

    paths["nlg_figure"] = out_dir / "nlg_distributions.png"
    _render_nlg_figure(report["per_report"], paths["nlg_figure"])
    if report.get("ce_per_observation"):
        paths["ce_figure"] = out_dir / "ce_observations.png"
        _render_ce_figure(report["ce_per_observation"], paths["ce_figure"])
    return paths
