"""Radiology knowledge graph: load/validate the organ-condition DAG and
derive the initial perception tree by pruning to the organs of interest.

A hand-authored chest X-ray graph ships with the package; any graph
matching the JSON schema can be supplied instead:
    {"nodes": [{"id", "label", "kind", "knowledge_text"?}],
     "edges": [[parent_id, child_id], ...]}
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import SchemaError
from .tree import PerceptionTree, TreeNode

KINDS = ("root", "organ", "condition")


@dataclass(frozen=True)
class KGNode:
    id: str
    label: str
    kind: str
    knowledge_text: str | None = None


@dataclass
class KnowledgeGraph:
    nodes: dict[str, KGNode]
    edges: tuple[tuple[str, str], ...]

    @property
    def root(self) -> KGNode:
        return next(n for n in self.nodes.values() if n.kind == "root")

    def organs(self) -> list[KGNode]:
        return [n for n in self.nodes.values() if n.kind == "organ"]

    def conditions(self) -> list[KGNode]:
        return [n for n in self.nodes.values() if n.kind == "condition"]

    def children(self, node_id: str) -> list[KGNode]:
        child_ids = {c for p, c in self.edges if p == node_id}
        return [n for n in self.nodes.values() if n.id in child_ids]

    def parents(self, node_id: str) -> list[KGNode]:
        parent_ids = {p for p, c in self.edges if c == node_id}
        return [n for n in self.nodes.values() if n.id in parent_ids]


def default_graph_path() -> Path:
    return Path(str(resources.files("radforge") / "data" / "chest_kg.json"))


def _check_acyclic(nodes: dict[str, KGNode], edges: tuple[tuple[str, str], ...]) -> None:
    adjacency: dict[str, list[str]] = {node_id: [] for node_id in nodes}
    for parent, child in edges:
        adjacency[parent].append(child)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node_id: WHITE for node_id in nodes}

    def visit(start: str) -> None:
        stack = [(start, iter(adjacency[start]))]
        color[start] = GRAY
        path = [start]
        while stack:
            node_id, it = stack[-1]
            advanced = False
            for child in it:
                if color[child] == GRAY:
                    cycle = path[path.index(child):] + [child]
                    raise SchemaError(f"knowledge graph has a cycle: {' -> '.join(cycle)}")
                if color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, iter(adjacency[child])))
                    path.append(child)
                    advanced = True
                    break
            if not advanced:
                color[node_id] = BLACK
                stack.pop()
                path.pop()

    for node_id in nodes:
        if color[node_id] == WHITE:
            visit(node_id)


def load_graph(path: str | Path) -> KnowledgeGraph:
    """Read and validate a knowledge-graph JSON file."""
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: invalid JSON: {e}") from e
    nodes: dict[str, KGNode] = {}
    for i, obj in enumerate(doc.get("nodes", [])):
        for key in ("id", "label", "kind"):
            if key not in obj:
                raise SchemaError(f"{path}: node {i} missing {key!r}")
        if obj["kind"] not in KINDS:
            raise SchemaError(f"{path}: node {obj['id']!r} has unknown kind {obj['kind']!r}")
        if obj["id"] in nodes:
            raise SchemaError(f"{path}: duplicate node id {obj['id']!r}")
        nodes[obj["id"]] = KGNode(
            id=obj["id"],
            label=obj["label"],
            kind=obj["kind"],
            knowledge_text=obj.get("knowledge_text"),
        )
    edges: list[tuple[str, str]] = []
    for pair in doc.get("edges", []):
        if len(pair) != 2:
            raise SchemaError(f"{path}: edge {pair!r} is not a [parent, child] pair")
        parent, child = pair
        for endpoint in (parent, child):
            if endpoint not in nodes:
                raise SchemaError(f"{path}: edge references missing node {endpoint!r}")
        edges.append((parent, child))
    roots = [n.id for n in nodes.values() if n.kind == "root"]
    if not roots:
        raise SchemaError(f"{path}: no root node")
    if len(roots) > 1:
        raise SchemaError(f"{path}: multiple roots: {roots}")
    graph = KnowledgeGraph(nodes=nodes, edges=tuple(edges))
    _check_acyclic(nodes, graph.edges)
    for condition in graph.conditions():
        if not any(p.kind == "organ" for p in graph.parents(condition.id)):
            raise SchemaError(f"{path}: condition {condition.id!r} has no organ parent")
    return graph


def prune(kg: KnowledgeGraph, keep_organs: set[str]) -> PerceptionTree:
    """Derive the initial perception tree: root, the kept organs in graph
    order, and each organ's conditions below it. Conditions reachable from
    several kept organs appear once under each (the result is a tree, not
    a DAG); condition knowledge text is carried along.
    """
    if not keep_organs:
        raise SchemaError("keep_organs must be non-empty")
    wanted = {label.lower() for label in keep_organs}
    organ_labels = {o.label.lower() for o in kg.organs()}
    unmatched = sorted(wanted - organ_labels)
    if unmatched:
        raise SchemaError(f"keep_organs do not match any organ: {unmatched}")
    root = kg.root
    nodes: dict[str, TreeNode] = {
        root.id: TreeNode(id=root.id, label=root.label, layer=1)
    }
    for organ in kg.organs():
        if organ.label.lower() not in wanted:
            continue
        nodes[organ.id] = TreeNode(
            id=organ.id, label=organ.label, layer=2, parent_id=root.id,
            knowledge_text=organ.knowledge_text,
        )
        for condition in kg.children(organ.id):
            if condition.kind != "condition":
                continue
            node_id = f"{organ.id}.{condition.id}"
            nodes[node_id] = TreeNode(
                id=node_id,
                label=condition.label,
                layer=3,
                parent_id=organ.id,
                knowledge_text=condition.knowledge_text,
            )
    return PerceptionTree(nodes=nodes, root_id=root.id, version=0)
