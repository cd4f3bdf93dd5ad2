/** JSON shapes exchanged with the curation service. These mirror the
 * service's tree schema exactly; the API contract is the only coupling to
 * the backend. */

export interface SentenceJson {
  report_id: string;
  index: number;
  text: string;
}

export interface TreeNodeJson {
  id: string;
  label: string;
  layer: number;
  parent_id?: string;
  knowledge_text?: string;
  sentences?: SentenceJson[];
  approved?: boolean;
}

export interface TreeJson {
  version: number;
  root_id: string;
  nodes: TreeNodeJson[];
  edit_log: TreeEditJson[];
  unclassified: SentenceJson[];
}

export type EditKind =
  | "prune_node"
  | "merge_nodes"
  | "rename_node"
  | "set_knowledge_text"
  | "approve_node";

export interface TreeEditJson {
  kind: EditKind;
  target_ids: string[];
  payload: string | null;
  author: string;
  timestamp: string;
}

export interface EditAccepted {
  version: number;
}

export interface EditConflict {
  detail: string;
  current_version: number;
}

export type EditOutcome =
  | { status: "accepted"; version: number }
  | { status: "conflict"; currentVersion: number; detail: string }
  | { status: "invalid"; detail: string };
