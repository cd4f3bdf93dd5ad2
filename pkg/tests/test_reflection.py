from __future__ import annotations

from dataclasses import replace

import pytest

from radforge.errors import SchemaError
from radforge.reasoning import Finding, OrganBlock, ReasoningSample, pick_connectors
from radforge.reflection import (
    ABNORMAL_FALLBACK,
    NORMAL_FALLBACK,
    build_reflection_sample,
    corrupt_description,
    pick_corruption_target,
    read_reflections,
    reflect_one,
    write_reflections,
)

from .conftest import make_gateway


def verified_sample(n_organs: int = 2, report_id: str = "r1") -> ReasoningSample:
    organs = ["heart", "lungs", "pleura", "bones"][:n_organs]
    blocks = tuple(
        OrganBlock(organ, ((f"{organ}-cond", "Check carefully."),), f"The {organ} looks entirely typical here.")
        for organ in organs
    )
    findings = (Finding("cardiomegaly", True, "There is cardiomegaly."),)
    return ReasoningSample(
        report_id=report_id,
        image_refs=("images/x.png",),
        organ_blocks=blocks,
        findings=findings,
        final_report="Final ground truth report.",
        connectors=pick_connectors(0, report_id),
        verified="passed",
    )


class TestPickTarget:
    def test_single_organ_forced(self):
        assert pick_corruption_target(verified_sample(1), seed=9) == "heart"

    def test_deterministic(self):
        sample = verified_sample(4)
        assert pick_corruption_target(sample, 123) == pick_corruption_target(sample, 123)

    def test_uniform_over_seeds(self):
        sample = verified_sample(4)
        counts = {"heart": 0, "lungs": 0, "pleura": 0, "bones": 0}
        n = 10000
        for seed in range(n):
            counts[pick_corruption_target(sample, seed)] += 1
        for organ, count in counts.items():
            assert 0.22 <= count / n <= 0.28, (organ, count / n)


class TestCorrupt:
    def test_scripted_reply(self):
        block = verified_sample(1).organ_blocks[0]
        gateway = make_gateway(fn=lambda *a: "The heart size is markedly enlarged.")
        assert corrupt_description(gateway, block) == "The heart size is markedly enlarged."

    def test_echoing_twice_falls_back_to_template(self):
        block = verified_sample(1).organ_blocks[0]
        gateway = make_gateway(fn=lambda role, prompt, images, temp: block.description)
        out = corrupt_description(gateway, block)
        # original says "typical" (not a normal-marker word match for "normal"
        # but contains none of the markers), so the normal-sounding fallback is used
        assert out == NORMAL_FALLBACK.format(organ="heart")

    def test_fallback_flips_normal_originals(self):
        block = OrganBlock("lungs", (), "The lungs are clear.")
        gateway = make_gateway(fn=lambda role, prompt, images, temp: "The lungs are clear.")
        out = corrupt_description(gateway, block)
        assert out == ABNORMAL_FALLBACK.format(organ="lungs")

    def test_second_attempt_used_when_first_echoes(self):
        replies = iter(["The heart looks entirely typical here.", "The heart is grossly abnormal."])
        gateway = make_gateway(fn=lambda *a: next(replies))
        block = verified_sample(1).organ_blocks[0]
        assert corrupt_description(gateway, block) == "The heart is grossly abnormal."

    def test_attempts_render_distinct_prompts(self):
        prompts = []

        def fn(role, prompt, images, temp):
            prompts.append(prompt)
            return "The heart looks entirely typical here."

        corrupt_description(make_gateway(fn=fn), verified_sample(1).organ_blocks[0])
        assert len(prompts) == 2 and prompts[0] != prompts[1]


class TestBuildReflection:
    def test_transcript_ordering_invariant(self):
        sample = verified_sample(3)
        out = build_reflection_sample(sample, "lungs", "The lungs are catastrophically dull.", seed=4)
        t = out.transcript
        positions = [
            t.index(out.wrong_description),
            t.index(out.reflection_1),
            t.index("The lungs looks entirely typical here."),
            t.index(out.reflection_2),
            t.rindex(out.final_report),
        ]
        assert positions == sorted(positions)
        assert t.endswith(sample.final_report)

    def test_exactly_one_corruption(self):
        sample = verified_sample(3)
        out = build_reflection_sample(sample, "pleura", "Wrong pleura text.", seed=4)
        assert out.transcript.count("Wrong pleura text.") == 1
        assert out.transcript.count(out.reflection_1) == 1

    def test_deterministic(self):
        sample = verified_sample(2)
        a = build_reflection_sample(sample, "heart", "Wrong.", seed=7)
        b = build_reflection_sample(sample, "heart", "Wrong.", seed=7)
        assert a == b

    def test_unverified_sample_rejected(self):
        sample = replace(verified_sample(1), verified="failed")
        with pytest.raises(SchemaError, match="not verified"):
            build_reflection_sample(sample, "heart", "Wrong.", seed=0)

    def test_unknown_organ_rejected(self):
        with pytest.raises(SchemaError, match="spleen"):
            build_reflection_sample(verified_sample(1), "spleen", "Wrong.", seed=0)

    def test_equal_corruption_rejected(self):
        sample = verified_sample(1)
        with pytest.raises(SchemaError, match="equals"):
            build_reflection_sample(
                sample, "heart", "the heart LOOKS entirely typical here.", seed=0
            )

    def test_final_report_preserved(self):
        sample = verified_sample(2)
        out = build_reflection_sample(sample, "heart", "Wrong.", seed=3)
        assert out.final_report == sample.final_report


class TestReflectOne:
    def test_produces_sample(self):
        sample = verified_sample(2)
        gateway = make_gateway(fn=lambda *a: "A corrupted description of the organ.")
        out = reflect_one(sample, gateway, seed=11)
        assert out is not None
        assert out.corrupted_organ in ("heart", "lungs")

    def test_transport_outage_skips(self):
        from radforge.errors import AgentTransportError

        def fn(*a):
            raise AgentTransportError("down")

        out = reflect_one(verified_sample(2), make_gateway(fn=fn), seed=11)
        assert out is None


class TestReflectionIO:
    def test_round_trip(self, tmp_path):
        sample = verified_sample(2)
        out = build_reflection_sample(sample, "heart", "Wrong heart text.", seed=2)
        path = tmp_path / "reflections.jsonl"
        write_reflections([out], path)
        assert read_reflections(path) == [out]
