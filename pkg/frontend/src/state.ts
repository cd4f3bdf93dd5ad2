import type { EditKind, TreeEditJson, TreeJson, TreeNodeJson } from "./types.js";

/** Pure view-model over the served tree plus UI-only state. Structure is
 * never mutated here except by swallowing a fresh server tree. */
export interface TreeViewModel {
  version: number;
  rootId: string;
  nodes: Map<string, TreeNodeJson>;
  childrenOf: Map<string, string[]>;
  expanded: Set<string>;
  selected: Set<string>;
  pendingEdits: number;
  inlineErrors: Map<string, string>;
}

export function buildViewModel(tree: TreeJson, previous?: TreeViewModel): TreeViewModel {
  const nodes = new Map<string, TreeNodeJson>();
  const childrenOf = new Map<string, string[]>();
  for (const node of tree.nodes) {
    nodes.set(node.id, node);
  }
  for (const node of tree.nodes) {
    if (node.parent_id !== undefined) {
      const siblings = childrenOf.get(node.parent_id) ?? [];
      siblings.push(node.id);
      childrenOf.set(node.parent_id, siblings);
    }
  }
  const expanded = new Set<string>();
  const selected = new Set<string>();
  if (previous) {
    for (const id of previous.expanded) if (nodes.has(id)) expanded.add(id);
    for (const id of previous.selected) if (nodes.has(id)) selected.add(id);
  }
  return {
    version: tree.version,
    rootId: tree.root_id,
    nodes,
    childrenOf,
    expanded,
    selected,
    pendingEdits: 0,
    inlineErrors: new Map(),
  };
}

export function isLeaf(model: TreeViewModel, nodeId: string): boolean {
  return (model.childrenOf.get(nodeId) ?? []).length === 0;
}

export function sentenceCount(model: TreeViewModel, nodeId: string): number {
  return model.nodes.get(nodeId)?.sentences?.length ?? 0;
}

/** Client-side validation mirroring the server's edit rules, so obviously
 * bad edits are rejected inline and never sent. Returns an error message
 * or null when the edit may be submitted. */
export function validateEdit(
  model: TreeViewModel,
  kind: EditKind,
  targetIds: string[],
  payload: string | null,
): string | null {
  for (const id of targetIds) {
    if (!model.nodes.has(id)) return `unknown node ${id}`;
  }
  switch (kind) {
    case "prune_node":
      if (targetIds[0] === model.rootId) return "the root cannot be pruned";
      return null;
    case "rename_node":
      if (!payload || payload.trim() === "") return "label must not be empty";
      return null;
    case "merge_nodes": {
      if (targetIds.length !== 2) return "select exactly two nodes to merge";
      const [a, b] = targetIds.map((id) => model.nodes.get(id)!);
      if (a.id === b.id) return "cannot merge a node with itself";
      if (a.parent_id !== b.parent_id || a.layer !== b.layer) {
        return "merge targets must share a parent and layer";
      }
      if (isLeaf(model, a.id) !== isLeaf(model, b.id)) {
        return "cannot merge a leaf with an internal node";
      }
      return null;
    }
    case "set_knowledge_text":
    case "approve_node":
      return null;
  }
}

export function makeEdit(
  kind: EditKind,
  targetIds: string[],
  payload: string | null,
  author = "curator",
): TreeEditJson {
  return {
    kind,
    target_ids: targetIds,
    payload,
    author,
    timestamp: new Date().toISOString(),
  };
}

/** Layer-ordered ids for rendering: depth-first from the root, children in
 * served order. */
export function renderOrder(model: TreeViewModel): string[] {
  const out: string[] = [];
  const walk = (id: string) => {
    out.push(id);
    for (const child of model.childrenOf.get(id) ?? []) walk(child);
  };
  if (model.nodes.has(model.rootId)) walk(model.rootId);
  return out;
}

export function toggleSelected(model: TreeViewModel, nodeId: string): void {
  if (model.selected.has(nodeId)) {
    model.selected.delete(nodeId);
  } else {
    model.selected.add(nodeId);
  }
}

/** The merge button is enabled only when the current selection would pass
 * validation. */
export function mergeSelectionError(model: TreeViewModel): string | null {
  const ids = [...model.selected];
  if (ids.length !== 2) return "select exactly two nodes to merge";
  return validateEdit(model, "merge_nodes", ids, null);
}
