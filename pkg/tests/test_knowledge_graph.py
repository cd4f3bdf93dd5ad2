from __future__ import annotations

import json
from random import Random

import pytest

from radforge.errors import SchemaError
from radforge.knowledge_graph import default_graph_path, load_graph, prune


@pytest.fixture(scope="module")
def chest_kg():
    return load_graph(default_graph_path())


@pytest.fixture(scope="module")
def raw_kg():
    with open(default_graph_path(), encoding="utf-8") as f:
        return json.load(f)


def write_kg(tmp_path, doc):
    path = tmp_path / "kg.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoadGraph:
    def test_bundled_fixture_counts(self, chest_kg, raw_kg):
        # oracle: count kinds straight off the raw JSON
        kinds = {}
        for node in raw_kg["nodes"]:
            kinds[node["kind"]] = kinds.get(node["kind"], 0) + 1
        assert kinds == {"root": 1, "organ": 7, "condition": 12}
        assert len(chest_kg.nodes) == 20
        assert len(chest_kg.organs()) == 7
        assert len(chest_kg.conditions()) == 12

    def test_dangling_edge(self, tmp_path):
        doc = {
            "nodes": [{"id": "r", "label": "r", "kind": "root"}],
            "edges": [["r", "ghost"]],
        }
        with pytest.raises(SchemaError, match="ghost"):
            load_graph(write_kg(tmp_path, doc))

    def test_no_root(self, tmp_path):
        doc = {"nodes": [{"id": "a", "label": "a", "kind": "organ"}], "edges": []}
        with pytest.raises(SchemaError, match="no root"):
            load_graph(write_kg(tmp_path, doc))

    def test_empty_node_set(self, tmp_path):
        with pytest.raises(SchemaError, match="no root"):
            load_graph(write_kg(tmp_path, {"nodes": [], "edges": []}))

    def test_multiple_roots(self, tmp_path):
        doc = {
            "nodes": [
                {"id": "r1", "label": "r1", "kind": "root"},
                {"id": "r2", "label": "r2", "kind": "root"},
            ],
            "edges": [],
        }
        with pytest.raises(SchemaError, match="r1.*r2"):
            load_graph(write_kg(tmp_path, doc))

    def test_cycle(self, tmp_path):
        doc = {
            "nodes": [
                {"id": "r", "label": "r", "kind": "root"},
                {"id": "a", "label": "a", "kind": "organ"},
                {"id": "b", "label": "b", "kind": "condition"},
            ],
            "edges": [["r", "a"], ["a", "b"], ["b", "a"]],
        }
        with pytest.raises(SchemaError, match="cycle"):
            load_graph(write_kg(tmp_path, doc))

    def test_condition_without_organ_parent(self, tmp_path):
        doc = {
            "nodes": [
                {"id": "r", "label": "r", "kind": "root"},
                {"id": "c", "label": "c", "kind": "condition"},
            ],
            "edges": [["r", "c"]],
        }
        with pytest.raises(SchemaError, match="no organ parent"):
            load_graph(write_kg(tmp_path, doc))


def reachability_oracle(raw_kg, keep_labels):
    """Expected pruned-tree node count: 1 root + kept organs + per-organ
    condition memberships, walked straight over the raw JSON."""
    by_id = {n["id"]: n for n in raw_kg["nodes"]}
    kept = [
        n["id"]
        for n in raw_kg["nodes"]
        if n["kind"] == "organ" and n["label"].lower() in {l.lower() for l in keep_labels}
    ]
    memberships = 0
    for organ_id in kept:
        for parent, child in raw_kg["edges"]:
            if parent == organ_id and by_id[child]["kind"] == "condition":
                memberships += 1
    return 1 + len(kept) + memberships


class TestPrune:
    def test_all_organs_node_count(self, chest_kg, raw_kg):
        labels = {o.label for o in chest_kg.organs()}
        tree = prune(chest_kg, labels)
        assert len(tree.nodes) == reachability_oracle(raw_kg, labels)
        assert len(tree.nodes) == 21  # 1 + 7 + 13 memberships (one shared condition)

    def test_heart_only(self, chest_kg, raw_kg):
        tree = prune(chest_kg, {"heart"})
        organs = [n.label for n in tree.organs()]
        assert organs == ["heart"]
        layer3 = sorted(n.label for n in tree.nodes.values() if n.layer == 3)
        assert layer3 == ["cardiomegaly", "enlarged cardiomediastinum"]
        assert len(tree.nodes) == reachability_oracle(raw_kg, {"heart"})

    def test_case_insensitive_match(self, chest_kg):
        tree = prune(chest_kg, {"HEART"})
        assert [n.label for n in tree.organs()] == ["heart"]

    def test_unknown_organ(self, chest_kg):
        with pytest.raises(SchemaError, match="pancreas"):
            prune(chest_kg, {"pancreas"})

    def test_empty_keep_set(self, chest_kg):
        with pytest.raises(SchemaError, match="non-empty"):
            prune(chest_kg, set())

    def test_shared_condition_duplicated_per_parent(self, chest_kg):
        tree = prune(chest_kg, {"heart", "mediastinum"})
        shared = [
            n for n in tree.nodes.values() if n.label == "enlarged cardiomediastinum"
        ]
        assert len(shared) == 2
        assert sorted(n.parent_id for n in shared) == ["heart", "mediastinum"]
        assert all(n.knowledge_text for n in shared)

    def test_containment_invariant(self, chest_kg):
        tree = prune(chest_kg, {"lungs", "pleura"})
        organ_ids = {n.id for n in tree.organs()}
        for node in tree.nodes.values():
            if node.layer == 3:
                assert node.parent_id in organ_ids

    def test_monotone_under_enlargement(self, chest_kg):
        all_labels = sorted(o.label for o in chest_kg.organs())
        rng = Random(11)
        for _ in range(20):
            size = rng.randrange(1, len(all_labels))
            small = set(rng.sample(all_labels, size))
            large = small | {rng.choice(all_labels)}
            small_ids = set(prune(chest_kg, small).nodes)
            large_ids = set(prune(chest_kg, large).nodes)
            assert small_ids <= large_ids

    def test_layer3_labels_exist_in_graph(self, chest_kg):
        tree = prune(chest_kg, {o.label for o in chest_kg.organs()})
        condition_labels = {c.label for c in chest_kg.conditions()}
        for node in tree.nodes.values():
            if node.layer == 3:
                assert node.label in condition_labels
