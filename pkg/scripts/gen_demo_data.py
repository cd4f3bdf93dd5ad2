#!/usr/bin/env python3
"""Regenerate the checked-in demo corpora under demo/.

Deterministic synthetic chest X-ray reports: every sentence names a
perception-tree category (so the offline echo backend can classify it)
and every organ is mentioned by name (so echo descriptions stay
non-trivial).
"""
from __future__ import annotations

import json
import random
from pathlib import Path

HEART = (
    "The heart is normal in size without cardiomegaly.",
    "The heart is enlarged with moderate cardiomegaly.",
    "The heart shows stable mild cardiomegaly.",
)
MEDIASTINUM = (
    "The mediastinum is unremarkable without enlarged cardiomediastinum.",
    "There is widening of the mediastinum with enlarged cardiomediastinum.",
)
LUNGS_PRIMARY = (
    "The lungs are clear without consolidation or edema.",
    "The lungs show mild interstitial edema.",
    "The lungs demonstrate patchy consolidation in the lower lobes.",
    "The lungs are hyperexpanded with diffuse lung opacity.",
)
LUNGS_EXTRA = (
    "There is atelectasis at the left lung base.",
    "A focal lung lesion is noted in the right upper zone.",
    "No pneumonia is seen.",
    "No atelectasis or lung lesion is identified.",
)
PLEURA = (
    "No pleural effusion or pneumothorax.",
    "Small left pleural effusion is present.",
    "There is a trace apical pneumothorax along the pleural surface.",
)
BONES = (
    "The visualized bones are intact without fracture.",
    "The bones show an old healed right rib fracture.",
)
AIRWAYS = (
    "The airways are patent.",
    "The central airways are clear.",
)
DEVICES = (
    "No support devices are present.",
    "Support devices are in standard position.",
)


def make_report(rng: random.Random, report_id: str, source: str) -> dict:
    sentences = [
        rng.choice(HEART),
        rng.choice(MEDIASTINUM),
        rng.choice(LUNGS_PRIMARY),
    ]
    if rng.random() < 0.6:
        sentences.append(rng.choice(LUNGS_EXTRA))
    sentences.extend(
        [
            rng.choice(PLEURA),
            rng.choice(BONES),
            rng.choice(AIRWAYS),
            rng.choice(DEVICES),
        ]
    )
    images = [f"images/{report_id}_frontal.png"]
    if rng.random() < 0.5:
        images.append(f"images/{report_id}_lateral.png")
    return {
        "id": report_id,
        "image_refs": images,
        "report_text": " ".join(sentences),
        "source": source,
    }


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "demo"
    out.mkdir(exist_ok=True)

    rng = random.Random(20240601)
    iu = [make_report(rng, f"iu-{i:04d}", "iu_xray") for i in range(1, 51)]
    mimic = [make_report(rng, f"mimic-{i:04d}", "mimic_cxr") for i in range(1, 31)]

    for name, reports in (("corpus_iu.jsonl", iu), ("corpus_mimic.jsonl", mimic)):
        with open(out / name, "w", encoding="utf-8") as f:
            for report in reports:
                f.write(json.dumps(report, ensure_ascii=False) + "\n")

    mimic_ids = [r["id"] for r in mimic]
    split = {
        "train": mimic_ids[:21],
        "validation": mimic_ids[21:24],
        "test": mimic_ids[24:],
    }
    (out / "mimic_split.json").write_text(json.dumps(split, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(iu)} IU and {len(mimic)} MIMIC demo reports to {out}")


if __name__ == "__main__":
    main()
