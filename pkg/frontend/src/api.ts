import type {
  EditConflict,
  EditOutcome,
  SentenceJson,
  TreeEditJson,
  TreeJson,
} from "./types.js";

export class ApiUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`curation service unreachable: ${String(cause)}`);
    this.name = "ApiUnreachableError";
  }
}

/** Thin typed client for the curation HTTP API. */
export class CurationApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.url(path));
    } catch (cause) {
      throw new ApiUnreachableError(cause);
    }
    if (!response.ok) {
      throw new Error(`GET ${path} failed with ${response.status}`);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; version: number }> {
    return this.getJson("/health");
  }

  async getTree(): Promise<TreeJson> {
    return this.getJson("/tree");
  }

  async getLeafSentences(nodeId: string): Promise<SentenceJson[]> {
    return this.getJson(`/leaves/${encodeURIComponent(nodeId)}/sentences`);
  }

  async getEditLog(): Promise<TreeEditJson[]> {
    return this.getJson("/edits");
  }

  /** Submit one edit based on the given tree version. Maps the server's
   * optimistic-versioning statuses onto a discriminated union. */
  async submitEdit(edit: TreeEditJson, baseVersion: number): Promise<EditOutcome> {
    let response: Response;
    try {
      response = await fetch(this.url("/edits"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ ...edit, base_version: baseVersion }),
      });
    } catch (cause) {
      throw new ApiUnreachableError(cause);
    }
    if (response.status === 200) {
      const body = (await response.json()) as { version: number };
      return { status: "accepted", version: body.version };
    }
    if (response.status === 409) {
      const body = (await response.json()) as EditConflict;
      return {
        status: "conflict",
        currentVersion: body.current_version,
        detail: body.detail,
      };
    }
    if (response.status === 422) {
      const body = (await response.json()) as { detail: string };
      return { status: "invalid", detail: body.detail };
    }
    throw new Error(`POST /edits failed with ${response.status}`);
  }
}
