/**
 * Typed client for the training service REST API.
 *
 * Every method maps to exactly one endpoint. The fetch implementation is
 * injected so tests can drive the client without a network; the browser
 * entry point passes the real `fetch`.
 *
 * Server errors arrive as `{"error": <name>, "detail": <text>}` and are
 * rethrown as ApiError with the detail preserved verbatim. The UI never
 * paraphrases what the backend said.
 */

export interface DatasetSummary {
  id: string;
  name: string;
  example_count: number;
  per_label: Record<string, number>;
  created_at: string;
  modified_at: string;
}

export interface DataOverview {
  datasets: DatasetSummary[];
  total_examples: number;
  per_label: Record<string, number>;
}

export interface ExampleRecord {
  id: string;
  component: string;
  label: string;
  log: string;
}

export interface UploadRejection {
  index: number;
  id: string | null;
  reason: string;
}

export interface UploadReport {
  accepted: number;
  rejected: UploadRejection[];
}

export interface AnnotationEntry {
  dataset_id: string;
  example_id: string;
  annotator: string;
  old_label: string | null;
  new_label: string;
  annotated_at: string;
  seq: number;
}

export interface LabelInfo {
  labels: string[];
  pinned: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    readonly detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

type Fetch = (input: string, init?: RequestInit) => Promise<Response>;

async function raise(response: Response): Promise<never> {
  const text = await response.text();
  let kind = "HttpError";
  let detail = text || response.statusText;
  try {
    const body = JSON.parse(text);
    if (typeof body.error === "string") kind = body.error;
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON body: keep the raw text as the detail
  }
  throw new ApiError(response.status, kind, detail);
}

export class TrainApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: Fetch = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) await raise(response);
    return response;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json() as Promise<T>;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const response = await this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return response.json() as Promise<T>;
  }

  async health(): Promise<boolean> {
    try {
      await this.request("/health");
      return true;
    } catch {
      return false;
    }
  }

  overview(): Promise<DataOverview> {
    return this.getJson("/train/data");
  }

  labels(): Promise<LabelInfo> {
    return this.getJson("/labels");
  }

  createDataset(name: string): Promise<{ id: string; name: string }> {
    return this.postJson("/datasets", { name });
  }

  async deleteDataset(id: string): Promise<void> {
    await this.request(`/datasets/${encodeURIComponent(id)}`, {
      method: "DELETE",
    });
  }

  /** Raw export bytes, untouched. Download targets must reuse this string. */
  async exportRaw(id: string): Promise<string> {
    const response = await this.request(
      `/datasets/${encodeURIComponent(id)}/export`,
    );
    return response.text();
  }

  /** The export parsed for browsing. */
  async examples(id: string): Promise<ExampleRecord[]> {
    return JSON.parse(await this.exportRaw(id)) as ExampleRecord[];
  }

  upload(id: string, examples: ExampleRecord[]): Promise<UploadReport> {
    return this.postJson(`/datasets/${encodeURIComponent(id)}/examples`, {
      examples,
      mode: "inline",
    });
  }

  relabel(
    datasetId: string,
    exampleId: string,
    newLabel: string,
    annotator: string,
  ): Promise<AnnotationEntry> {
    const path =
      `/datasets/${encodeURIComponent(datasetId)}` +
      `/examples/${encodeURIComponent(exampleId)}/label`;
    return this.postJson(path, { new_label: newLabel, annotator });
  }

  async history(datasetId: string): Promise<AnnotationEntry[]> {
    const body = await this.getJson<{ records: AnnotationEntry[] }>(
      `/datasets/${encodeURIComponent(datasetId)}/history`,
    );
    return body.records;
  }
}
