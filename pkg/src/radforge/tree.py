"""Perception tree: layered root/organ/condition/topic structure with
sentence assignments, agent-driven growth, manual edits, and a canonical
JSON form.

Trees are value-like: every operation returns a new tree and bumps the
version. Node insertion order is the canonical order (organ order, child
order) and is preserved through serialization.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from random import Random

from .agents import AgentGateway
from .corpus import Sentence
from .errors import AgentTransportError, QualityGateError, SchemaError

log = logging.getLogger("radforge.tree")

UNCLASSIFIED_KEY = "unclassified"
EDIT_KINDS = ("prune_node", "merge_nodes", "rename_node", "set_knowledge_text", "approve_node")
MAX_TOPIC_LABEL_WORDS = 8


@dataclass(frozen=True)
class TreeNode:
    id: str
    label: str
    layer: int
    parent_id: str | None = None
    knowledge_text: str | None = None
    sentences: tuple[Sentence, ...] = ()
    approved: bool = False


@dataclass(frozen=True)
class TreeEdit:
    kind: str
    target_ids: tuple[str, ...]
    payload: str | None
    author: str
    timestamp: str

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_ids": list(self.target_ids),
            "payload": self.payload,
            "author": self.author,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeEdit":
        try:
            return cls(
                kind=obj["kind"],
                target_ids=tuple(obj["target_ids"]),
                payload=obj.get("payload"),
                author=obj.get("author", ""),
                timestamp=obj.get("timestamp", ""),
            )
        except (KeyError, TypeError) as e:
            raise SchemaError(f"bad edit record {obj!r}: {e}") from e


def _sentence_key(s: Sentence) -> tuple[str, int]:
    return (s.report_id, s.index)


@dataclass
class PerceptionTree:
    nodes: dict[str, TreeNode]
    root_id: str
    version: int = 0
    edit_log: tuple[TreeEdit, ...] = ()
    unclassified: tuple[Sentence, ...] = ()

    def node(self, node_id: str) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise SchemaError(f"unknown tree node {node_id!r}") from None

    def children(self, node_id: str) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.parent_id == node_id]

    def leaves(self) -> list[TreeNode]:
        parents = {n.parent_id for n in self.nodes.values() if n.parent_id}
        return [n for n in self.nodes.values() if n.id not in parents]

    def organs(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.layer == 2]

    def subtree_ids(self, node_id: str) -> list[str]:
        ids = [node_id]
        queue = [node_id]
        while queue:
            current = queue.pop(0)
            for child in self.children(current):
                ids.append(child.id)
                queue.append(child.id)
        return ids

    def sentence_count(self) -> int:
        return sum(len(n.sentences) for n in self.nodes.values()) + len(self.unclassified)


def classify_sentences(
    sentences: list[Sentence], tree: PerceptionTree, agent: AgentGateway
) -> dict[str, list[Sentence]]:
    """Assign every sentence to exactly one leaf or to the reserved
    `unclassified` bucket.

    The agent sees the full leaf-label list and must answer with one
    label; anything else lands in `unclassified`. More than half
    unclassified aborts with a tree/corpus mismatch error.
    """
    leaves = tree.leaves()
    if not leaves:
        raise SchemaError("tree has no leaves to classify into")
    seen_labels: dict[str, str] = {}
    display_labels: list[str] = []
    for leaf in leaves:
        key = leaf.label.lower()
        if key not in seen_labels:
            seen_labels[key] = leaf.id  # first leaf in tree order wins ties
            display_labels.append(leaf.label)
    assignment: dict[str, list[Sentence]] = {leaf.id: [] for leaf in leaves}
    assignment[UNCLASSIFIED_KEY] = []

    for sentence in sentences:
        try:
            reply = agent.ask(
                "classify",
                {
                    "report_id": sentence.report_id,
                    "sentence": sentence.text,
                    "labels": " | ".join(display_labels),
                },
            )
        except AgentTransportError as e:
            log.warning("classify transport failure for %s#%d: %s", sentence.report_id, sentence.index, e)
            assignment[UNCLASSIFIED_KEY].append(sentence)
            continue
        normalized = reply.strip().strip("\"'").rstrip(".").strip().lower()
        leaf_id = seen_labels.get(normalized)
        if leaf_id is None:
            assignment[UNCLASSIFIED_KEY].append(sentence)
        else:
            assignment[leaf_id].append(sentence)

    for bucket in assignment.values():
        bucket.sort(key=_sentence_key)
    if sentences and 2 * len(assignment[UNCLASSIFIED_KEY]) > len(sentences):
        raise QualityGateError(
            f"tree/corpus mismatch: {len(assignment[UNCLASSIFIED_KEY])} of "
            f"{len(sentences)} sentences unclassified"
        )
    return assignment


def _normalized_text(s: Sentence) -> str:
    return " ".join(s.text.split()).lower()


def subgroup(
    assignment: dict[str, list[Sentence]], k: int, seed: int
) -> dict[str, list[list[Sentence]]]:
    """Partition each leaf's sentences into k groups.

    Sentences are first collapsed into classes of equal normalized text
    (so duplicates travel together and none is lost), the classes are
    sorted lexicographically, shuffled by the seed, and dealt round-robin
    starting at group 0. Groups may be empty.
    """
    if k < 1:
        raise SchemaError(f"subgroup count must be >= 1, got {k}")
    out: dict[str, list[list[Sentence]]] = {}
    for leaf_id, sentences in assignment.items():
        if leaf_id == UNCLASSIFIED_KEY:
            continue
        classes: dict[str, list[Sentence]] = {}
        for s in sorted(sentences, key=_sentence_key):
            classes.setdefault(_normalized_text(s), []).append(s)
        ordered = sorted(classes.items())
        Random(f"{seed}:{leaf_id}").shuffle(ordered)
        groups: list[list[Sentence]] = [[] for _ in range(k)]
        for i, (_, members) in enumerate(ordered):
            groups[i % k].extend(members)
        out[leaf_id] = groups
    return out


def attach_assignment(
    tree: PerceptionTree, assignment: dict[str, list[Sentence]]
) -> PerceptionTree:
    """Place classified sentences onto their leaves and fill the
    unclassified bucket; returns a new tree version."""
    leaf_ids = {leaf.id for leaf in tree.leaves()}
    nodes = dict(tree.nodes)
    for key, sentences in assignment.items():
        if key == UNCLASSIFIED_KEY:
            continue
        if key not in leaf_ids:
            raise SchemaError(f"assignment key {key!r} is not a leaf of the tree")
        nodes[key] = replace(nodes[key], sentences=tuple(sorted(sentences, key=_sentence_key)))
    unclassified = tuple(sorted(assignment.get(UNCLASSIFIED_KEY, []), key=_sentence_key))
    return PerceptionTree(
        nodes=nodes,
        root_id=tree.root_id,
        version=tree.version + 1,
        edit_log=tree.edit_log,
        unclassified=unclassified,
    )


def summarize_topics(
    tree: PerceptionTree, groups: dict[str, list[list[Sentence]]], agent: AgentGateway
) -> PerceptionTree:
    """Grow layer-4 topic children under each condition leaf, one per
    non-empty group, each labeled by the agent (at most eight words).
    Groups whose agent call fails keep their sentences on the parent leaf;
    sentences on condition-less organ leaves stay where they are (topics
    exist only at layer 4)."""
    if any(n.layer >= 4 for n in tree.nodes.values()):
        raise SchemaError("tree already carries topic nodes")
    new_nodes: dict[str, TreeNode] = {}
    for node in tree.nodes.values():
        node_groups = groups.get(node.id)
        if node.layer != 3 or not node_groups or not any(node_groups):
            new_nodes[node.id] = node
            continue
        kept: list[Sentence] = []
        topics: list[TreeNode] = []
        for group in node_groups:
            if not group:
                continue
            try:
                reply = agent.ask(
                    "summarize",
                    {
                        "leaf_label": node.label,
                        "sentences": "\n".join(s.text for s in group),
                    },
                )
            except AgentTransportError as e:
                log.warning("summarize transport failure under %s: %s", node.id, e)
                kept.extend(group)
                continue
            label = " ".join(reply.split()[:MAX_TOPIC_LABEL_WORDS])
            if not label:
                log.warning("empty topic label under %s; keeping sentences on the leaf", node.id)
                kept.extend(group)
                continue
            topics.append(
                TreeNode(
                    id=f"{node.id}.t{len(topics)}",
                    label=label,
                    layer=node.layer + 1,
                    parent_id=node.id,
                    sentences=tuple(sorted(group, key=_sentence_key)),
                )
            )
        if topics:
            new_nodes[node.id] = replace(node, sentences=tuple(sorted(kept, key=_sentence_key)))
            for topic in topics:
                new_nodes[topic.id] = topic
        else:
            new_nodes[node.id] = node
    return PerceptionTree(
        nodes=new_nodes,
        root_id=tree.root_id,
        version=tree.version + 1,
        edit_log=tree.edit_log,
        unclassified=tree.unclassified,
    )


def _validate_edit(tree: PerceptionTree, edit: TreeEdit) -> None:
    if edit.kind not in EDIT_KINDS:
        raise SchemaError(f"unknown edit kind {edit.kind!r}")
    expected_targets = 2 if edit.kind == "merge_nodes" else 1
    if len(edit.target_ids) != expected_targets:
        raise SchemaError(
            f"{edit.kind} takes {expected_targets} target(s), got {len(edit.target_ids)}"
        )
    for target in edit.target_ids:
        tree.node(target)
    if edit.kind == "prune_node" and edit.target_ids[0] == tree.root_id:
        raise SchemaError("cannot prune the root node")
    if edit.kind == "merge_nodes":
        a, b = (tree.node(t) for t in edit.target_ids)
        if a.id == b.id:
            raise SchemaError("cannot merge a node with itself")
        if a.parent_id != b.parent_id or a.layer != b.layer:
            raise SchemaError(
                f"merge targets {a.id!r} and {b.id!r} must share a parent and layer"
            )
        a_internal = bool(tree.children(a.id))
        b_internal = bool(tree.children(b.id))
        if a_internal != b_internal:
            raise SchemaError(
                "cannot merge a leaf with an internal node; sentences would sit under children"
            )
    if edit.kind == "rename_node" and not (edit.payload or "").strip():
        raise SchemaError("rename requires a non-empty payload")


def apply_edit(tree: PerceptionTree, edit: TreeEdit) -> PerceptionTree:
    """Apply one manual edit, returning a new tree with the edit appended
    to its log. Invalid edits raise and leave the tree untouched."""
    _validate_edit(tree, edit)
    nodes = dict(tree.nodes)
    unclassified = list(tree.unclassified)

    if edit.kind == "prune_node":
        removed = tree.subtree_ids(edit.target_ids[0])
        for node_id in removed:
            unclassified.extend(nodes[node_id].sentences)
            del nodes[node_id]
    elif edit.kind == "merge_nodes":
        keep_id, drop_id = edit.target_ids
        drop = nodes[drop_id]
        merged_sentences = tuple(
            sorted(nodes[keep_id].sentences + drop.sentences, key=_sentence_key)
        )
        nodes[keep_id] = replace(nodes[keep_id], sentences=merged_sentences)
        del nodes[drop_id]
        for node_id, node in list(nodes.items()):
            if node.parent_id == drop_id:
                nodes[node_id] = replace(node, parent_id=keep_id)
    elif edit.kind == "rename_node":
        target = edit.target_ids[0]
        nodes[target] = replace(nodes[target], label=edit.payload.strip())
    elif edit.kind == "set_knowledge_text":
        target = edit.target_ids[0]
        nodes[target] = replace(nodes[target], knowledge_text=edit.payload or None)
    elif edit.kind == "approve_node":
        target = edit.target_ids[0]
        nodes[target] = replace(nodes[target], approved=True)

    return PerceptionTree(
        nodes=nodes,
        root_id=tree.root_id,
        version=tree.version + 1,
        edit_log=tree.edit_log + (edit,),
        unclassified=tuple(sorted(unclassified, key=_sentence_key)),
    )


def replay_edits(tree: PerceptionTree, edits: list[TreeEdit]) -> PerceptionTree:
    for edit in edits:
        tree = apply_edit(tree, edit)
    return tree


def _sentence_obj(s: Sentence) -> dict:
    return {"report_id": s.report_id, "index": s.index, "text": s.text}


def serialize_tree(tree: PerceptionTree) -> str:
    """Canonical JSON: fixed key order, node insertion order preserved;
    equal trees serialize byte-identically."""
    nodes = []
    for node in tree.nodes.values():
        obj: dict = {"id": node.id, "label": node.label, "layer": node.layer}
        if node.parent_id is not None:
            obj["parent_id"] = node.parent_id
        if node.knowledge_text is not None:
            obj["knowledge_text"] = node.knowledge_text
        if node.sentences:
            obj["sentences"] = [_sentence_obj(s) for s in node.sentences]
        if node.approved:
            obj["approved"] = True
        nodes.append(obj)
    doc = {
        "version": tree.version,
        "root_id": tree.root_id,
        "nodes": nodes,
        "edit_log": [e.as_dict() for e in tree.edit_log],
        "unclassified": [_sentence_obj(s) for s in tree.unclassified],
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def _parse_sentence(obj: dict, where: str) -> Sentence:
    try:
        return Sentence(str(obj["report_id"]), int(obj["index"]), str(obj["text"]))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{where}: bad sentence record: {e}") from e


def deserialize_tree(text: str) -> PerceptionTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"/: invalid JSON: {e}") from e
    for key in ("version", "root_id", "nodes"):
        if key not in doc:
            raise SchemaError(f"/{key}: missing")
    nodes: dict[str, TreeNode] = {}
    for i, obj in enumerate(doc["nodes"]):
        where = f"/nodes/{i}"
        for key in ("id", "label", "layer"):
            if key not in obj:
                raise SchemaError(f"{where}/{key}: missing")
        node_id = str(obj["id"])
        if node_id in nodes:
            raise SchemaError(f"{where}/id: duplicate node id {node_id!r}")
        if node_id == UNCLASSIFIED_KEY:
            raise SchemaError(f"{where}/id: {UNCLASSIFIED_KEY!r} is reserved")
        layer = obj["layer"]
        if not isinstance(layer, int) or not 1 <= layer <= 4:
            raise SchemaError(f"{where}/layer: must be an integer in 1..4, got {layer!r}")
        sentences = tuple(
            _parse_sentence(s, f"{where}/sentences/{j}")
            for j, s in enumerate(obj.get("sentences", []))
        )
        nodes[node_id] = TreeNode(
            id=node_id,
            label=str(obj["label"]),
            layer=layer,
            parent_id=obj.get("parent_id"),
            knowledge_text=obj.get("knowledge_text"),
            sentences=sentences,
            approved=bool(obj.get("approved", False)),
        )
    root_id = str(doc["root_id"])
    if root_id not in nodes:
        raise SchemaError(f"/root_id: {root_id!r} not among nodes")
    for i, node in enumerate(nodes.values()):
        where = f"/nodes/{i}"
        if node.id == root_id:
            if node.parent_id is not None:
                raise SchemaError(f"{where}/parent_id: root must have no parent")
            if node.layer != 1:
                raise SchemaError(f"{where}/layer: root must be layer 1")
            continue
        if node.parent_id is None:
            raise SchemaError(f"{where}/parent_id: missing on non-root node {node.id!r}")
        if node.parent_id not in nodes:
            raise SchemaError(f"{where}/parent_id: unknown parent {node.parent_id!r}")
        parent = nodes[node.parent_id]
        if node.layer != parent.layer + 1:
            raise SchemaError(
                f"{where}/layer: layer {node.layer} under layer-{parent.layer} parent "
                f"{parent.id!r} breaks the one-step rule"
            )
    edits = tuple(TreeEdit.from_dict(e) for e in doc.get("edit_log", []))
    unclassified = tuple(
        _parse_sentence(s, f"/unclassified/{j}") for j, s in enumerate(doc.get("unclassified", []))
    )
    version = doc["version"]
    if not isinstance(version, int) or version < 0:
        raise SchemaError(f"/version: must be a non-negative integer, got {version!r}")
    return PerceptionTree(
        nodes=nodes,
        root_id=root_id,
        version=version,
        edit_log=edits,
        unclassified=unclassified,
    )


def load_tree(path) -> PerceptionTree:
    with open(path, encoding="utf-8") as f:
        return deserialize_tree(f.read())


def save_tree(tree: PerceptionTree, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_tree(tree))
