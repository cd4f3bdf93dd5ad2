"""NLG metrics (corpus BLEU-n, ROUGE-L, METEOR) and clinical-efficacy
scoring over 14-observation label vectors, plus a keyword fallback labeler.

All scorers operate on token lists (see corpus.tokenize) and are pure.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import requests

from .corpus import segment_sentences
from .errors import AgentTransportError, SchemaError

BLEU4_EPSILON = 1e-9
ROUGE_BETA = 1.2

# CheXbert-convention observation list; index order is part of the contract.
OBSERVATIONS = (
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
)

LABEL_VALUES = ("positive", "negative", "uncertain", "absent")


@dataclass(frozen=True)
class NlgScoreSet:
    bleu_1: float
    bleu_4: float
    meteor: float
    rouge_l: float

    def as_dict(self) -> dict[str, float]:
        return {
            "bleu_1": self.bleu_1,
            "bleu_4": self.bleu_4,
            "meteor": self.meteor,
            "rouge_l": self.rouge_l,
        }


@dataclass(frozen=True)
class ObservationLabels:
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(OBSERVATIONS):
            raise SchemaError(
                f"expected {len(OBSERVATIONS)} observation labels, got {len(self.values)}"
            )
        for v in self.values:
            if v not in LABEL_VALUES:
                raise SchemaError(f"unknown observation label value {v!r}")

    def __getitem__(self, observation: str) -> str:
        return self.values[OBSERVATIONS.index(observation)]


@dataclass(frozen=True)
class CeScoreSet:
    precision: float
    recall: float
    f_score: float
    tp: int
    fp: int
    fn: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[list[str]], references: list[list[str]], n: int) -> float:
    """Corpus-level BLEU with uniform weights over orders 1..n.

    No smoothing for n=1; for n>1 zero-match orders get epsilon smoothing
    so single-report gating does not collapse on one missing n-gram.
    """
    if len(hypotheses) != len(references):
        raise SchemaError(
            f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise SchemaError("bleu requires a non-empty corpus")
    c = sum(len(h) for h in hypotheses)
    r = sum(len(ref) for ref in references)
    if c == 0:
        return 0.0
    log_precision_sum = 0.0
    for order in range(1, n + 1):
        matches = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hyp_counts = _ngram_counts(hyp, order)
            ref_counts = _ngram_counts(ref, order)
            matches += sum(min(count, ref_counts[g]) for g, count in hyp_counts.items())
            total += max(len(hyp) - order + 1, 0)
        if matches == 0 or total == 0:
            if n == 1:
                return 0.0
            precision = BLEU4_EPSILON
        else:
            precision = matches / total
        log_precision_sum += math.log(precision)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * math.exp(log_precision_sum / n)


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[len(b)]


def rouge_l(hypothesis: list[str], reference: list[str]) -> tuple[float, float, float]:
    """LCS-based (precision, recall, F) with beta=1.2."""
    if not reference:
        raise SchemaError("rouge_l requires a non-empty reference")
    if not hypothesis:
        return (0.0, 0.0, 0.0)
    lcs = _lcs_length(hypothesis, reference)
    precision = lcs / len(hypothesis)
    recall = lcs / len(reference)
    denom = recall + ROUGE_BETA**2 * precision
    if denom == 0:
        return (precision, recall, 0.0)
    f = (1 + ROUGE_BETA**2) * recall * precision / denom
    return (precision, recall, f)


def rouge_l_corpus(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    if len(hypotheses) != len(references) or not hypotheses:
        raise SchemaError("rouge_l_corpus requires equal-length non-empty corpora")
    return sum(rouge_l(h, r)[2] for h, r in zip(hypotheses, references)) / len(hypotheses)


# Alignment spaces larger than this are aligned with the greedy
# longest-block heuristic instead of the exact search.
_EXACT_ALIGNMENT_CAP = 50_000


def _max_matches(hyp: list[str], ref: list[str]) -> int:
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    return sum(min(count, ref_counts[t]) for t, count in hyp_counts.items())


def _alignment_space(hyp: list[str], ref: list[str]) -> float:
    """Rough count of distinct maximum matchings, used to pick the chunk
    algorithm."""
    hyp_counts = Counter(hyp)
    ref_counts = Counter(ref)
    space = 1.0
    for token, h in hyp_counts.items():
        r = ref_counts.get(token, 0)
        m = min(h, r)
        if m == 0:
            continue
        space *= math.comb(h, m) * math.perm(r, m)
        if space > _EXACT_ALIGNMENT_CAP * 10:
            break
    return space


def _count_chunks(pairs: list[tuple[int, int]]) -> int:
    aligned = set(pairs)
    return sum(1 for i, j in pairs if (i - 1, j - 1) not in aligned)


def _min_chunks_exact(hyp: list[str], ref: list[str], m: int) -> int:
    """Minimum chunk count over all maximum matchings, via memoized search
    over hypothesis positions with a used-reference bitmask."""
    ref_positions: dict[str, list[int]] = {}
    for j, t in enumerate(ref):
        ref_positions.setdefault(t, []).append(j)

    # suffix_max[i] = max matches obtainable from hyp[i:] ignoring usage,
    # a cheap admissible bound for pruning.
    suffix_max = [0] * (len(hyp) + 1)
    for i in range(len(hyp) - 1, -1, -1):
        suffix_max[i] = suffix_max[i + 1] + (1 if hyp[i] in ref_positions else 0)

    @lru_cache(maxsize=None)
    def search(i: int, used: int, prev_j: int, matched: int) -> int:
        if matched + suffix_max[i] < m:
            return 10**9
        if i == len(hyp):
            return 0 if matched == m else 10**9
        best = search(i + 1, used, -2, matched)
        for j in ref_positions.get(hyp[i], ()):
            if used & (1 << j):
                continue
            start_new = 0 if j == prev_j + 1 else 1
            rest = search(i + 1, used | (1 << j), j, matched + 1)
            if start_new + rest < best:
                best = start_new + rest
        return best

    result = search(0, 0, -2, 0)
    search.cache_clear()
    return result


def _min_chunks_greedy(hyp: list[str], ref: list[str]) -> int:
    """Longest-common-block-first alignment; approximate for large inputs."""
    hyp_used = [False] * len(hyp)
    ref_used = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    while True:
        best_len = 0
        best = None
        for i in range(len(hyp)):
            if hyp_used[i]:
                continue
            for j in range(len(ref)):
                if ref_used[j] or hyp[i] != ref[j]:
                    continue
                length = 0
                while (
                    i + length < len(hyp)
                    and j + length < len(ref)
                    and not hyp_used[i + length]
                    and not ref_used[j + length]
                    and hyp[i + length] == ref[j + length]
                ):
                    length += 1
                if length > best_len:
                    best_len = length
                    best = (i, j)
        if best is None:
            break
        i, j = best
        for k in range(best_len):
            hyp_used[i + k] = True
            ref_used[j + k] = True
            pairs.append((i + k, j + k))
    return _count_chunks(pairs)


def meteor(hypothesis: list[str], reference: list[str]) -> float:
    """Exact-match METEOR: unigram alignment maximizing matches then
    minimizing chunks, harmonic mean weighted toward recall, cubed
    fragmentation penalty."""
    m = _max_matches(hypothesis, reference)
    if m == 0:
        return 0.0
    if len(reference) <= 20 and _alignment_space(hypothesis, reference) <= _EXACT_ALIGNMENT_CAP:
        chunks = _min_chunks_exact(hypothesis, reference, m)
    else:
        chunks = _min_chunks_greedy(hypothesis, reference)
    precision = m / len(hypothesis)
    recall = m / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


def meteor_corpus(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    if len(hypotheses) != len(references) or not hypotheses:
        raise SchemaError("meteor_corpus requires equal-length non-empty corpora")
    return sum(meteor(h, r) for h, r in zip(hypotheses, references)) / len(hypotheses)


def score_corpus(hypotheses: list[list[str]], references: list[list[str]]) -> NlgScoreSet:
    """All four NLG scores for aligned token-list corpora."""
    return NlgScoreSet(
        bleu_1=bleu(hypotheses, references, 1),
        bleu_4=bleu(hypotheses, references, 4),
        meteor=meteor_corpus(hypotheses, references),
        rouge_l=rouge_l_corpus(hypotheses, references),
    )


def ce_scores(
    predicted: list[ObservationLabels],
    gold: list[ObservationLabels],
    uncertain_as: str = "negative",
) -> CeScoreSet:
    """Micro-averaged precision/recall/F over all (report, observation)
    cells. `positive` is the positive class; by default uncertain counts as
    negative (set uncertain_as="positive" for the lenient convention)."""
    if uncertain_as not in ("negative", "positive"):
        raise SchemaError(f"uncertain_as must be 'negative' or 'positive', got {uncertain_as!r}")
    if len(predicted) != len(gold):
        raise SchemaError(
            f"predicted/gold length mismatch: {len(predicted)} vs {len(gold)}"
        )
    positive_values = {"positive"} if uncertain_as == "negative" else {"positive", "uncertain"}
    tp = fp = fn = 0
    for pred, ref in zip(predicted, gold):
        for p, g in zip(pred.values, ref.values):
            p_pos = p in positive_values
            g_pos = g in positive_values
            if p_pos and g_pos:
                tp += 1
            elif p_pos:
                fp += 1
            elif g_pos:
                fn += 1
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return CeScoreSet(precision, recall, f, tp, fp, fn)


# Keyword fallback labeler. A rule-table approximation used when no
# external labeler service is configured; never claimed equivalent to a
# learned annotator.
_OBSERVATION_KEYWORDS: dict[str, tuple[str, ...]] = {
    "Enlarged Cardiomediastinum": (
        "enlarged cardiomediastinum",
        "widened mediastinum",
        "mediastinal widening",
        "cardiomediastinal silhouette is widened",
    ),
    "Cardiomegaly": ("cardiomegaly", "enlarged heart", "heart is enlarged", "cardiac enlargement"),
    "Lung Opacity": ("lung opacity", "opacity", "opacities", "opacification"),
    "Lung Lesion": ("lung lesion", "nodule", "mass"),
    "Edema": ("edema",),
    "Consolidation": ("consolidation",),
    "Pneumonia": ("pneumonia",),
    "Atelectasis": ("atelectasis",),
    "Pneumothorax": ("pneumothorax",),
    "Pleural Effusion": ("pleural effusion", "effusion"),
    "Pleural Other": ("pleural thickening", "pleural scarring", "pleural plaque"),
    "Fracture": ("fracture", "fractures"),
    "Support Devices": (
        "support devices",
        "support device",
        "endotracheal tube",
        "nasogastric tube",
        "chest tube",
        "catheter",
        "pacemaker",
        "picc",
        "sternotomy wires",
    ),
}

_NEGATION_CUES = (
    "no",
    "not",
    "without",
    "clear of",
    "free of",
    "negative for",
    "absence of",
)


def keyword_label(report_text: str) -> ObservationLabels:
    """Label one report with the rule table. Positive mentions win over
    negated ones; observations never mentioned stay absent. `No Finding`
    is positive only when nothing else is."""
    values = {obs: "absent" for obs in OBSERVATIONS}
    for sentence in segment_sentences(report_text):
        body = "".join(ch if ch.isalnum() or ch.isspace() else " " for ch in sentence.text.lower())
        padded = f" {' '.join(body.split())} "
        for obs, keywords in _OBSERVATION_KEYWORDS.items():
            for keyword in keywords:
                pos = padded.find(f" {keyword} ")
                if pos < 0:
                    continue
                before = padded[: pos + 1]
                negated = any(f" {cue} " in before for cue in _NEGATION_CUES)
                if negated:
                    if values[obs] == "absent":
                        values[obs] = "negative"
                else:
                    values[obs] = "positive"
                break
    if report_text.strip() and not any(
        values[obs] == "positive" for obs in OBSERVATIONS if obs != "No Finding"
    ):
        values["No Finding"] = "positive"
    return ObservationLabels(tuple(values[obs] for obs in OBSERVATIONS))


def label_via_service(reports: list[str], endpoint: str, timeout: float = 60.0) -> list[ObservationLabels]:
    """Fetch 14-observation labels from an external labeler service.

    Wire: request {"reports": [str, ...]}, reply {"labels": [[14 values], ...]}.
    """
    if not reports:
        return []
    try:
        resp = requests.post(endpoint, json={"reports": reports}, timeout=timeout)
        resp.raise_for_status()
    except requests.RequestException as e:
        status = getattr(getattr(e, "response", None), "status_code", None)
        raise AgentTransportError(f"labeler service failed: {e}", status=status, attempts=1) from e
    try:
        payload = resp.json()
        labels = payload["labels"]
    except (ValueError, KeyError) as e:
        raise SchemaError(f"labeler reply is not {{'labels': [...]}}: {e}") from e
    if len(labels) != len(reports):
        raise SchemaError(
            f"labeler returned {len(labels)} label vectors for {len(reports)} reports"
        )
    return [ObservationLabels(tuple(vec)) for vec in labels]
