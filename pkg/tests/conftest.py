from __future__ import annotations

from pathlib import Path

import pytest

from radforge.agents import AgentGateway, EchoRule, MockBackend
from radforge.corpus import Report, Sentence
from radforge.tree import PerceptionTree, TreeNode

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_DIR = REPO_ROOT / "demo"


class CallableBackend:
    """Test backend delegating to a function(role, prompt, image_refs,
    temperature) -> str."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def send(self, role, prompt, image_refs, temperature):
        self.calls.append((role.name, prompt, image_refs, temperature))
        return self.fn(role, prompt, image_refs, temperature)


def make_gateway(fn=None, echo_reports=None, **kwargs) -> AgentGateway:
    if fn is not None:
        backend = CallableBackend(fn)
    else:
        backend = MockBackend(echo=EchoRule(echo_reports or {}))
    return AgentGateway(backend, **kwargs)


def small_tree(with_sentences: bool = False) -> PerceptionTree:
    """Root -> {heart, lungs}; heart -> cardiomegaly; lungs -> {edema,
    consolidation}. Knowledge text everywhere it is required."""
    nodes = {
        "root": TreeNode(id="root", label="chest", layer=1),
        "heart": TreeNode(id="heart", label="heart", layer=2, parent_id="root"),
        "heart.cardiomegaly": TreeNode(
            id="heart.cardiomegaly",
            label="cardiomegaly",
            layer=3,
            parent_id="heart",
            knowledge_text="Measure the cardiothoracic ratio on the frontal view.",
        ),
        "lungs": TreeNode(id="lungs", label="lungs", layer=2, parent_id="root"),
        "lungs.edema": TreeNode(
            id="lungs.edema",
            label="edema",
            layer=3,
            parent_id="lungs",
            knowledge_text="Look for interstitial thickening and perihilar haze.",
        ),
        "lungs.consolidation": TreeNode(
            id="lungs.consolidation",
            label="consolidation",
            layer=3,
            parent_id="lungs",
            knowledge_text="Look for confluent opacity with air bronchograms.",
        ),
    }
    tree = PerceptionTree(nodes=nodes, root_id="root", version=0)
    if with_sentences:
        from dataclasses import replace

        tree.nodes["heart.cardiomegaly"] = replace(
            nodes["heart.cardiomegaly"],
            sentences=(
                Sentence("r1", 0, "The heart is enlarged."),
                Sentence("r2", 0, "Mild cardiomegaly."),
            ),
        )
        tree.nodes["lungs.edema"] = replace(
            nodes["lungs.edema"],
            sentences=(Sentence("r1", 1, "There is mild edema."),),
        )
    return tree


@pytest.fixture
def demo_report() -> Report:
    return Report(
        id="r1",
        image_refs=("images/r1_frontal.png",),
        report_text="The heart is enlarged with cardiomegaly. There is mild edema. No consolidation.",
        split="train",
        source="iu_xray",
    )
