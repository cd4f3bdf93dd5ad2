"""Export compiled samples as conversation-format JSONL ready for common
fine-tuning harnesses.

One record per sample:
    {"id": str, "images": [path, ...],
     "conversations": [{"role": "user", "content": instruction with one
     image token per attached image}, {"role": "assistant", "content":
     transcript}]}
"""
from __future__ import annotations

import json

from jsonschema import Draft202012Validator

from .errors import SchemaError
from .reasoning import ReasoningSample, render_transcript
from .reflection import ReflectionSample

IMAGE_TOKEN = "<image>"
INSTRUCTION = (
    "Review the attached chest X-ray study. Reason through each organ with its "
    "diagnostic checks, state a finding for every condition, then give the final report."
)

COMPOSITIONS = ("reasoning_only", "reasoning_plus_reflection")

RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["id", "images", "conversations"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "images": {"type": "array", "minItems": 1, "items": {"type": "string", "minLength": 1}},
        "conversations": {
            "type": "array",
            "minItems": 2,
            "maxItems": 2,
            "prefixItems": [
                {
                    "type": "object",
                    "required": ["role", "content"],
                    "additionalProperties": False,
                    "properties": {
                        "role": {"const": "user"},
                        "content": {"type": "string", "minLength": 1},
                    },
                },
                {
                    "type": "object",
                    "required": ["role", "content"],
                    "additionalProperties": False,
                    "properties": {
                        "role": {"const": "assistant"},
                        "content": {"type": "string", "minLength": 1},
                    },
                },
            ],
        },
    },
}
_VALIDATOR = Draft202012Validator(RECORD_SCHEMA)


def _record(record_id: str, images: tuple[str, ...], transcript: str) -> dict:
    user_content = "".join(f"{IMAGE_TOKEN}\n" for _ in images) + INSTRUCTION
    return {
        "id": record_id,
        "images": list(images),
        "conversations": [
            {"role": "user", "content": user_content},
            {"role": "assistant", "content": transcript},
        ],
    }


def reasoning_record(sample: ReasoningSample) -> dict:
    return _record(sample.report_id, sample.image_refs, render_transcript(sample))


def reflection_record(sample: ReflectionSample) -> dict:
    return _record(f"{sample.report_id}::reflection", sample.image_refs, sample.transcript)


def build_export_records(
    samples: list[ReasoningSample],
    reflections: list[ReflectionSample],
    composition: str,
) -> list[dict]:
    if composition not in COMPOSITIONS:
        raise SchemaError(f"unknown composition {composition!r}; expected one of {COMPOSITIONS}")
    records = [reasoning_record(s) for s in samples]
    if composition == "reasoning_plus_reflection":
        records.extend(reflection_record(r) for r in reflections)
    return records


def write_export(records: list[dict], path) -> None:
    for i, record in enumerate(records):
        errors = sorted(_VALIDATOR.iter_errors(record), key=str)
        if errors:
            raise SchemaError(f"export record {i} invalid: {errors[0].message}")
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def validate_export_file(path) -> int:
    """Validate every line of an exported file; returns the record count."""
    count = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {e}") from e
            errors = sorted(_VALIDATOR.iter_errors(record), key=str)
            if errors:
                raise SchemaError(f"{path}:{lineno}: {errors[0].message}")
            count += 1
    return count


def export_manifest(
    composition: str, base_count: int, reflection_count: int, record_count: int
) -> dict:
    """Deterministic run summary; the fine-tuning settings the datasets are
    prepared for are recorded for provenance only, nothing here trains."""
    return {
        "composition": composition,
        "base_count": base_count,
        "reflection_count": reflection_count,
        "record_count": record_count,
        "intended_finetune": {"method": "lora", "learning_rate": 1e-5, "epochs": 3},
    }
