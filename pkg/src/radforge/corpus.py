"""Corpus ingest, sentence segmentation, tokenization, splits, and sampling.

Reports enter as JSONL, one object per line:
    {"id": str, "image_refs": [str, ...], "report_text": str,
     "source": str, "split": str?}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from random import Random

from .errors import SchemaError

SPLITS = ("train", "validation", "test", "unassigned")
SOURCES = ("iu_xray", "mimic_cxr", "other")

# Periods ending these tokens never terminate a sentence.
ABBREVIATIONS = frozenset({"e.g.", "i.e.", "vs.", "dr.", "no.", "fig."})

_TERMINALS = ".!?"


@dataclass(frozen=True)
class Sentence:
    report_id: str
    index: int
    text: str


@dataclass(frozen=True)
class Report:
    id: str
    image_refs: tuple[str, ...]
    report_text: str
    split: str = "unassigned"
    source: str = "other"

    def __post_init__(self):
        if not self.id:
            raise SchemaError("report id must be non-empty")
        if not self.image_refs:
            raise SchemaError(f"report {self.id!r}: image_refs must be non-empty")
        if not self.report_text.strip():
            raise SchemaError(f"report {self.id!r}: report_text is empty")
        if self.split not in SPLITS:
            raise SchemaError(f"report {self.id!r}: unknown split {self.split!r}")
        if self.source not in SOURCES:
            raise SchemaError(f"report {self.id!r}: unknown source {self.source!r}")


@dataclass(frozen=True)
class SplitSpec:
    kind: str  # "ratio" | "official_file"
    ratios: tuple[Fraction, Fraction, Fraction] | None = None
    file_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "ratio":
            if self.ratios is None:
                raise SchemaError("ratio split requires ratios")
            if sum(self.ratios, Fraction(0)) != 1:
                raise SchemaError(f"split ratios must sum to 1, got {self.ratios}")
            if any(r < 0 for r in self.ratios):
                raise SchemaError("split ratios must be non-negative")
        elif self.kind == "official_file":
            if not self.file_path:
                raise SchemaError("official_file split requires file_path")
        else:
            raise SchemaError(f"unknown split kind {self.kind!r}")

    @classmethod
    def from_ratio_string(cls, text: str, seed: int) -> "SplitSpec":
        """Parse "7:1:2"-style ratio strings into exact fractions of the total."""
        parts = [Fraction(p.strip()) for p in text.split(":")]
        if len(parts) != 3:
            raise SchemaError(f"expected three ratio parts, got {text!r}")
        total = sum(parts, Fraction(0))
        if total == 0:
            raise SchemaError("ratio parts sum to zero")
        return cls(kind="ratio", ratios=tuple(p / total for p in parts), seed=seed)


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def _token_ending_at(text: str, pos: int) -> str:
    """The whitespace-delimited token whose last character sits at pos,
    with leading punctuation (e.g. an opening paren) stripped."""
    start = pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start : pos + 1]
    while token and not token[0].isalnum():
        token = token[1:]
    return token


def segment_sentences(report_text: str, report_id: str = "") -> list[Sentence]:
    """Split a report into sentences.

    Boundaries sit after '.', '!' or '?' followed by whitespace or
    end-of-text, except periods that close a known abbreviation. Terminal
    punctuation stays on its sentence; joining the results with single
    spaces reproduces the whitespace-normalized input.
    """
    text = normalize_whitespace(report_text)
    if not text:
        return []
    sentences: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch not in _TERMINALS:
            continue
        at_end = i == len(text) - 1
        if not at_end and not text[i + 1].isspace():
            continue
        if ch == "." and _token_ending_at(text, i).lower() in ABBREVIATIONS:
            continue
        sentences.append(text[start : i + 1])
        start = i + 2  # skip the single space after the boundary
    if start < len(text):
        sentences.append(text[start:])
    return [Sentence(report_id, i, s) for i, s in enumerate(sentences)]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and isolate every punctuation
    character as its own token."""
    tokens: list[str] = []
    for chunk in text.lower().split():
        run = ""
        for ch in chunk:
            if ch.isalnum():
                run += ch
            else:
                if run:
                    tokens.append(run)
                    run = ""
                tokens.append(ch)
        if run:
            tokens.append(run)
    return tokens


def load_corpus(path: str | Path) -> list[Report]:
    """Read a corpus JSONL file, enforcing the Report schema and id uniqueness."""
    reports: list[Report] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {e}") from e
            try:
                report = Report(
                    id=str(obj["id"]),
                    image_refs=tuple(obj["image_refs"]),
                    report_text=str(obj["report_text"]),
                    split=obj.get("split", "unassigned"),
                    source=obj.get("source", "other"),
                )
            except KeyError as e:
                raise SchemaError(f"{path}:{lineno}: missing field {e}") from e
            if report.id in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate report id {report.id!r}")
            seen.add(report.id)
            reports.append(report)
    return reports


def write_corpus(reports: list[Report], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in reports:
            f.write(
                json.dumps(
                    {
                        "id": r.id,
                        "image_refs": list(r.image_refs),
                        "report_text": r.report_text,
                        "source": r.source,
                        "split": r.split,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def assign_splits(corpus: list[Report], spec: SplitSpec) -> list[Report]:
    """Fill the split field of every report.

    ratio kind: seeded shuffle, then floor-count partition with the
    remainder going to train. official_file kind: copy the listing.
    """
    if spec.kind == "ratio":
        shuffled = list(corpus)
        Random(spec.seed).shuffle(shuffled)
        n = len(shuffled)
        counts = [int(n * r) for r in spec.ratios]  # Fraction * int floors exactly
        counts[0] += n - sum(counts)
        out: list[Report] = []
        pos = 0
        for split_name, count in zip(("train", "validation", "test"), counts):
            out.extend(replace(r, split=split_name) for r in shuffled[pos : pos + count])
            pos += count
        return out

    with open(spec.file_path, encoding="utf-8") as f:
        listing = json.load(f)
    by_id = {r.id: r for r in corpus}
    assigned: dict[str, str] = {}
    for split_name in ("train", "validation", "test"):
        for rid in listing.get(split_name, []):
            if rid not in by_id:
                raise SchemaError(
                    f"official split file {spec.file_path} references unknown id {rid!r}"
                )
            assigned[rid] = split_name
    return [replace(r, split=assigned.get(r.id, r.split)) for r in corpus]


def split_sizes(n: int, ratios: tuple[Fraction, Fraction, Fraction]) -> tuple[int, int, int]:
    """Exact (train, validation, test) sizes for a corpus of n reports."""
    counts = [int(n * r) for r in ratios]
    counts[0] += n - sum(counts)
    return tuple(counts)


def draw_construction_sample(
    corpus_iu: list[Report],
    corpus_mimic: list[Report],
    n_iu: int,
    n_mimic: int,
    seed: int,
) -> list[Report]:
    """Seeded sample without replacement from the train splits of both
    corpora; output is the IU block followed by the MIMIC block, each in
    seeded-shuffle order."""
    out: list[Report] = []
    for name, corpus_part, count in (("iu", corpus_iu, n_iu), ("mimic", corpus_mimic, n_mimic)):
        train = [r for r in corpus_part if r.split == "train"]
        if count > len(train):
            raise SchemaError(
                f"requested {count} {name} reports but only {len(train)} in its train split"
            )
        Random(f"{seed}:{name}").shuffle(train)
        out.extend(train[:count])
    return out
