"""Turn verified reasoning samples into reflection samples: corrupt one
organ description, insert an inline correction, and add a self-check
sentence before the final report.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from random import Random

from .agents import AgentGateway
from .corpus import normalize_whitespace
from .errors import AgentTransportError, SchemaError
from .reasoning import OrganBlock, ReasoningSample, render_transcript

log = logging.getLogger("radforge.reflection")

# Inserted between the wrong description and its correction.
MID_REFLECTIONS = (
    "Wait, on re-examining the image this description does not hold; let me correct it.",
    "Hold on, that description conflicts with the image; I will restate it.",
    "Actually, a second look shows that description is wrong; correcting it now.",
    "On reflection, the image does not support that description; here is the correction.",
    "That cannot be right; checking the image again and revising the description.",
    "Something is off with that description; let me look once more and fix it.",
)

# Inserted before the final report.
FINAL_REFLECTIONS = (
    "Before finalizing, I will re-check each finding against the image.",
    "Let me verify every finding once more before writing the report.",
    "A final self-check of all findings against the image comes first.",
    "Before the report, I confirm each finding holds up on review.",
    "I pause to double-check the findings before committing to the report.",
    "One last verification pass over the findings, then the report.",
)

NORMAL_FALLBACK = "No abnormality of the {organ} is seen."
ABNORMAL_FALLBACK = "An acute abnormality of the {organ} is clearly seen."
_NORMAL_MARKERS = ("no ", "normal", "clear", "unremarkable", "intact", "patent", "without")


@dataclass(frozen=True)
class ReflectionSample:
    report_id: str
    image_refs: tuple[str, ...]
    corrupted_organ: str
    wrong_description: str
    reflection_1: str
    reflection_2: str
    transcript: str
    final_report: str


def pick_corruption_target(sample: ReasoningSample, seed: int) -> str:
    """Seeded uniform choice among the sample's organ blocks."""
    if not sample.organ_blocks:
        raise SchemaError(f"sample {sample.report_id} has no organ blocks")
    rng = Random(f"{seed}:{sample.report_id}:target")
    return sample.organ_blocks[rng.randrange(len(sample.organ_blocks))].organ_label


def _looks_normal(description: str) -> bool:
    lowered = f"{description.lower()} "
    return any(marker in lowered for marker in _NORMAL_MARKERS)


def corrupt_description(agent: AgentGateway, organ_block: OrganBlock) -> str:
    """Agent-written contradiction of the organ description. An echo of
    the input is re-requested once; a second echo falls back to a template
    corruption flipped against the original's polarity."""
    original = normalize_whitespace(organ_block.description)
    for attempt in (1, 2):
        reply = normalize_whitespace(
            agent.ask(
                "corrupt_description",
                {
                    "attempt": str(attempt),
                    "organ": organ_block.organ_label,
                    "description": original,
                },
            )
        )
        if reply and reply.lower() != original.lower():
            return reply
    template = ABNORMAL_FALLBACK if _looks_normal(original) else NORMAL_FALLBACK
    return template.format(organ=organ_block.organ_label)


def build_reflection_sample(
    sample: ReasoningSample, organ: str, wrong_text: str, seed: int
) -> ReflectionSample:
    """Rebuild the transcript with the corruption and both reflection
    sentences; the final report is untouched."""
    if sample.verified != "passed":
        raise SchemaError(
            f"sample {sample.report_id} is not verified (state: {sample.verified})"
        )
    block = next((b for b in sample.organ_blocks if b.organ_label == organ), None)
    if block is None:
        raise SchemaError(f"sample {sample.report_id} has no organ {organ!r}")
    if normalize_whitespace(wrong_text).lower() == normalize_whitespace(block.description).lower():
        raise SchemaError(f"corrupted description equals the original for organ {organ!r}")
    reflection_1 = MID_REFLECTIONS[
        Random(f"{seed}:{sample.report_id}:reflect1").randrange(len(MID_REFLECTIONS))
    ]
    reflection_2 = FINAL_REFLECTIONS[
        Random(f"{seed}:{sample.report_id}:reflect2").randrange(len(FINAL_REFLECTIONS))
    ]
    transcript = render_transcript(
        sample, corruption=(organ, wrong_text, reflection_1, reflection_2)
    )
    return ReflectionSample(
        report_id=sample.report_id,
        image_refs=sample.image_refs,
        corrupted_organ=organ,
        wrong_description=wrong_text,
        reflection_1=reflection_1,
        reflection_2=reflection_2,
        transcript=transcript,
        final_report=sample.final_report,
    )


def reflect_one(
    sample: ReasoningSample, agent: AgentGateway, seed: int
) -> ReflectionSample | None:
    """Full augmentation for one verified sample; returns None (logged)
    when the corruption agent is unreachable."""
    organ = pick_corruption_target(sample, seed)
    block = next(b for b in sample.organ_blocks if b.organ_label == organ)
    try:
        wrong_text = corrupt_description(agent, block)
    except AgentTransportError as e:
        log.warning("skipping reflection for %s: %s", sample.report_id, e)
        return None
    return build_reflection_sample(sample, organ, wrong_text, seed)


def reflection_to_obj(sample: ReflectionSample) -> dict:
    return {
        "report_id": sample.report_id,
        "image_refs": list(sample.image_refs),
        "corrupted_organ": sample.corrupted_organ,
        "wrong_description": sample.wrong_description,
        "reflection_1": sample.reflection_1,
        "reflection_2": sample.reflection_2,
        "transcript": sample.transcript,
        "final_report": sample.final_report,
    }


def reflection_from_obj(obj: dict) -> ReflectionSample:
    try:
        return ReflectionSample(
            report_id=obj["report_id"],
            image_refs=tuple(obj["image_refs"]),
            corrupted_organ=obj["corrupted_organ"],
            wrong_description=obj["wrong_description"],
            reflection_1=obj["reflection_1"],
            reflection_2=obj["reflection_2"],
            transcript=obj["transcript"],
            final_report=obj["final_report"],
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"bad reflection sample record: {e}") from e


def write_reflections(samples: list[ReflectionSample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(reflection_to_obj(sample), ensure_ascii=False, sort_keys=True) + "\n")


def read_reflections(path) -> list[ReflectionSample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(reflection_from_obj(json.loads(line)))
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {e}") from e
    return out
