import { ApiUnreachableError, CurationApi } from "./api.js";
import {
  buildViewModel,
  isLeaf,
  makeEdit,
  mergeSelectionError,
  renderOrder,
  sentenceCount,
  toggleSelected,
  validateEdit,
  type TreeViewModel,
} from "./state.js";
import type { EditKind, TreeEditJson } from "./types.js";

interface ConflictState {
  edit: TreeEditJson;
  currentVersion: number;
  detail: string;
}

/** Single-page tree curation view. All structural changes go through the
 * service; the DOM is rebuilt from the authoritative tree after every
 * acknowledged edit. */
export class TreeViewApp {
  private model: TreeViewModel | null = null;
  private conflict: ConflictState | null = null;
  private banner: string | null = null;

  constructor(
    private readonly container: HTMLElement,
    private readonly api: CurationApi,
    private readonly author = "curator",
  ) {}

  async load(): Promise<void> {
    try {
      const tree = await this.api.getTree();
      this.model = buildViewModel(tree, this.model ?? undefined);
      this.banner = null;
    } catch (error) {
      this.banner =
        error instanceof ApiUnreachableError
          ? "Curation service unreachable."
          : `Failed to load tree: ${String(error)}`;
    }
    this.render();
  }

  get version(): number | null {
    return this.model?.version ?? null;
  }

  async submit(kind: EditKind, targetIds: string[], payload: string | null): Promise<void> {
    if (!this.model) return;
    const validation = validateEdit(this.model, kind, targetIds, payload);
    if (validation !== null) {
      this.model.inlineErrors.set(targetIds[0], validation);
      this.render();
      return;
    }
    await this.send(makeEdit(kind, targetIds, payload, this.author));
  }

  private async send(edit: TreeEditJson): Promise<void> {
    if (!this.model) return;
    this.model.pendingEdits += 1;
    this.render();
    try {
      const outcome = await this.api.submitEdit(edit, this.model.version);
      if (outcome.status === "accepted") {
        await this.load(); // server tree is the source of truth
      } else if (outcome.status === "conflict") {
        this.conflict = {
          edit,
          currentVersion: outcome.currentVersion,
          detail: outcome.detail,
        };
        await this.load();
      } else {
        this.model.inlineErrors.set(edit.target_ids[0], outcome.detail);
      }
    } catch (error) {
      this.banner = "Curation service unreachable.";
    } finally {
      if (this.model) this.model.pendingEdits = Math.max(0, this.model.pendingEdits - 1);
      this.render();
    }
  }

  /** Conflict dialog actions: replay resubmits against the refreshed
   * version; discard just drops the edit. */
  async resolveConflict(replay: boolean): Promise<void> {
    const pending = this.conflict;
    this.conflict = null;
    if (replay && pending) {
      await this.send(pending.edit);
    } else {
      this.render();
    }
  }

  private async toggleEvidence(nodeId: string): Promise<void> {
    if (!this.model) return;
    if (this.model.expanded.has(nodeId)) {
      this.model.expanded.delete(nodeId);
      this.render();
      return;
    }
    const sentences = await this.api.getLeafSentences(nodeId);
    const node = this.model.nodes.get(nodeId);
    if (node) node.sentences = sentences;
    this.model.expanded.add(nodeId);
    this.render();
  }

  render(): void {
    this.container.replaceChildren();
    if (this.banner !== null) {
      const banner = el("div", "banner");
      banner.textContent = this.banner;
      const retry = el("button", "btn-retry");
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void this.load());
      banner.appendChild(retry);
      this.container.appendChild(banner);
      if (!this.model) return;
    }
    if (!this.model) return;
    const model = this.model;

    const toolbar = el("div", "toolbar");
    const versionBadge = el("span", "version-badge");
    versionBadge.textContent = `version ${model.version}`;
    toolbar.appendChild(versionBadge);
    const mergeButton = el("button", "btn-merge") as HTMLButtonElement;
    mergeButton.textContent = "Merge selected";
    const mergeProblem = mergeSelectionError(model);
    mergeButton.disabled = mergeProblem !== null;
    mergeButton.title = mergeProblem ?? "merge the two selected nodes";
    mergeButton.addEventListener("click", () => {
      void this.submit("merge_nodes", [...model.selected], null);
      model.selected.clear();
    });
    toolbar.appendChild(mergeButton);
    if (model.pendingEdits > 0) {
      const pending = el("span", "pending-badge");
      pending.textContent = "saving…";
      toolbar.appendChild(pending);
    }
    this.container.appendChild(toolbar);

    if (this.conflict) {
      const dialog = el("div", "conflict-dialog");
      const message = el("p");
      message.textContent = `Edit based on a stale version (server is at ${this.conflict.currentVersion}). Replay on the refreshed tree or discard?`;
      dialog.appendChild(message);
      const replay = el("button", "btn-conflict-replay");
      replay.textContent = "Replay";
      replay.addEventListener("click", () => void this.resolveConflict(true));
      const discard = el("button", "btn-conflict-discard");
      discard.textContent = "Discard";
      discard.addEventListener("click", () => void this.resolveConflict(false));
      dialog.append(replay, discard);
      this.container.appendChild(dialog);
    }

    const list = el("div", "tree");
    for (const nodeId of renderOrder(model)) {
      list.appendChild(this.renderNode(nodeId));
    }
    this.container.appendChild(list);
  }

  private renderNode(nodeId: string): HTMLElement {
    const model = this.model!;
    const node = model.nodes.get(nodeId)!;
    const row = el("div", `node-row layer-${node.layer}`);
    row.dataset.nodeId = nodeId;

    if (nodeId !== model.rootId) {
      const checkbox = el("input", "chk-select") as HTMLInputElement;
      checkbox.type = "checkbox";
      checkbox.checked = model.selected.has(nodeId);
      checkbox.addEventListener("change", () => {
        toggleSelected(model, nodeId);
        this.render();
      });
      row.appendChild(checkbox);
    }

    const label = el("span", "node-label");
    label.textContent = node.label;
    row.appendChild(label);

    const layerBadge = el("span", "badge badge-layer");
    layerBadge.textContent = `L${node.layer}`;
    row.appendChild(layerBadge);

    if (node.approved) {
      const approvedBadge = el("span", "badge badge-approved");
      approvedBadge.textContent = "approved";
      row.appendChild(approvedBadge);
    }

    if (isLeaf(model, nodeId)) {
      const count = el("button", "badge badge-count");
      count.textContent = `${sentenceCount(model, nodeId)} sentences`;
      count.addEventListener("click", () => void this.toggleEvidence(nodeId));
      row.appendChild(count);
    }

    const actions = el("span", "actions");
    const renameButton = el("button", "btn-rename");
    renameButton.textContent = "rename";
    renameButton.addEventListener("click", () => this.startRename(row, nodeId));
    actions.appendChild(renameButton);
    if (nodeId !== model.rootId) {
      const pruneButton = el("button", "btn-prune");
      pruneButton.textContent = "prune";
      pruneButton.addEventListener("click", () => void this.submit("prune_node", [nodeId], null));
      actions.appendChild(pruneButton);
    }
    const approveButton = el("button", "btn-approve");
    approveButton.textContent = "approve";
    approveButton.addEventListener("click", () => void this.submit("approve_node", [nodeId], null));
    actions.appendChild(approveButton);
    row.appendChild(actions);

    const inlineError = model.inlineErrors.get(nodeId);
    if (inlineError) {
      const error = el("span", "inline-error");
      error.textContent = inlineError;
      row.appendChild(error);
    }

    if (model.expanded.has(nodeId)) {
      const evidence = el("ul", "sentence-list");
      for (const sentence of node.sentences ?? []) {
        const item = el("li", "sentence-item");
        item.textContent = `${sentence.report_id}#${sentence.index}: ${sentence.text}`;
        evidence.appendChild(item);
      }
      row.appendChild(evidence);
    }
    return row;
  }

  private startRename(row: HTMLElement, nodeId: string): void {
    const model = this.model!;
    model.inlineErrors.delete(nodeId);
    const input = el("input", "rename-input") as HTMLInputElement;
    input.type = "text";
    input.value = model.nodes.get(nodeId)?.label ?? "";
    const ok = el("button", "rename-ok");
    ok.textContent = "ok";
    ok.addEventListener("click", () => {
      void this.submit("rename_node", [nodeId], input.value);
    });
    const cancel = el("button", "rename-cancel");
    cancel.textContent = "cancel";
    cancel.addEventListener("click", () => this.render());
    row.append(input, ok, cancel);
  }
}

function el(tag: string, className?: string): HTMLElement {
  const element = document.createElement(tag);
  if (className) element.className = className;
  return element;
}
