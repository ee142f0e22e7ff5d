/**
 * Application controller: owns the view state, calls the API client, and
 * re-renders into the mount point after every change.
 *
 * The server stays the single source of truth. A relabel is applied
 * optimistically, then reconciled against the annotation record the server
 * returns; any failure reverts to the server's view and shows the server's
 * error text verbatim. While the service is unreachable every mutating
 * control is disabled.
 */

import {
  ApiError,
  TrainApi,
  type AnnotationEntry,
  type DataOverview,
  type ExampleRecord,
  type LabelInfo,
  type UploadReport,
} from "./api.js";
import {
  annotationView,
  datasetListView,
  errorBanner,
  exampleListView,
  setMutationsEnabled,
  statusBanner,
  uploadReportView,
} from "./render.js";
import { applyLabel, filterByLabel, historyFor, matchesServer } from "./state.js";
import { parseUploadFile, FileFormatError } from "./schema.js";

type View = "datasets" | "examples" | "annotate";

export interface AppState {
  view: View;
  online: boolean;
  error: string | null;
  overview: DataOverview;
  labelInfo: LabelInfo;
  datasetId: string | null;
  datasetName: string;
  examples: ExampleRecord[];
  filter: string | null;
  exampleId: string | null;
  history: AnnotationEntry[];
  uploadReport: UploadReport | null;
}

export interface AppOptions {
  /** Health poll period in ms; 0 disables the timer (tests poll manually). */
  pollMs?: number;
  /** Download hook so tests can capture the exact exported bytes. */
  download?: (filename: string, text: string) => void;
  /** Destructive-action gate; defaults to window.confirm. */
  confirmDelete?: (message: string) => boolean;
}

function browserDownload(filename: string, text: string): void {
  const blob = new Blob([text], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export class App {
  readonly state: AppState;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly download: (filename: string, text: string) => void;
  private readonly confirmDelete: (message: string) => boolean;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: TrainApi,
    options: AppOptions = {},
  ) {
    this.download = options.download ?? browserDownload;
    this.confirmDelete =
      options.confirmDelete ?? ((message) => window.confirm(message));
    this.state = {
      view: "datasets",
      online: true,
      error: null,
      overview: { datasets: [], total_examples: 0, per_label: {} },
      labelInfo: { labels: [], pinned: false },
      datasetId: null,
      datasetName: "",
      examples: [],
      filter: null,
      exampleId: null,
      history: [],
      uploadReport: null,
    };
    const pollMs = options.pollMs ?? 5000;
    if (pollMs > 0) {
      this.timer = setInterval(() => void this.checkHealth(), pollMs);
    }
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async start(): Promise<void> {
    await this.checkHealth();
    await this.refreshDatasets();
  }

  async checkHealth(): Promise<void> {
    const online = await this.api.health();
    if (online !== this.state.online) {
      this.state.online = online;
      if (online) {
        await this.refreshCurrentView();
      } else {
        this.render();
      }
    }
  }

  async refreshDatasets(): Promise<void> {
    await this.guard(async () => {
      this.state.overview = await this.api.overview();
      this.state.labelInfo = await this.api.labels();
      this.state.view = "datasets";
    });
  }

  async openDataset(id: string, name?: string): Promise<void> {
    await this.guard(async () => {
      this.state.examples = await this.api.examples(id);
      this.state.history = await this.api.history(id);
      this.state.labelInfo = await this.api.labels();
      this.state.datasetId = id;
      this.state.datasetName =
        name ??
        this.state.overview.datasets.find((d) => d.id === id)?.name ??
        id;
      this.state.filter = null;
      this.state.view = "examples";
    });
  }

  async openExample(exampleId: string): Promise<void> {
    await this.guard(async () => {
      if (this.state.datasetId !== null) {
        this.state.history = await this.api.history(this.state.datasetId);
      }
      this.state.exampleId = exampleId;
      this.state.view = "annotate";
    });
  }

  setFilter(label: string | null): void {
    this.state.filter = label;
    this.render();
  }

  async createDataset(name: string): Promise<void> {
    await this.guard(async () => {
      await this.api.createDataset(name);
      this.state.overview = await this.api.overview();
    });
  }

  async deleteDataset(id: string): Promise<void> {
    if (!this.confirmDelete(`Delete dataset ${id}? Its examples are removed.`)) {
      return;
    }
    await this.guard(async () => {
      await this.api.deleteDataset(id);
      this.state.overview = await this.api.overview();
    });
  }

  async exportDataset(id: string): Promise<void> {
    await this.guard(async () => {
      const text = await this.api.exportRaw(id);
      this.download(`${id}.json`, text);
    });
  }

  async uploadFile(id: string, file: File): Promise<void> {
    await this.guard(async () => {
      const records = parseUploadFile(await file.text());
      this.state.uploadReport = await this.api.upload(id, records);
      this.state.overview = await this.api.overview();
      this.state.labelInfo = await this.api.labels();
    });
  }

  async relabel(newLabel: string, annotator: string): Promise<void> {
    const { datasetId, exampleId } = this.state;
    if (datasetId === null || exampleId === null) return;
    const before = this.state.examples;
    this.state.examples = applyLabel(before, exampleId, newLabel);
    this.render();
    try {
      const record = await this.api.relabel(
        datasetId,
        exampleId,
        newLabel,
        annotator,
      );
      this.state.history = [...this.state.history, record];
      if (!matchesServer(this.state.examples, record)) {
        // another annotator won the race; fall back to the server's view
        this.state.examples = await this.api.examples(datasetId);
        this.state.history = await this.api.history(datasetId);
      }
      this.state.error = null;
    } catch (exc) {
      this.state.examples = before;
      this.state.error = this.describe(exc);
    }
    this.render();
  }

  render(): void {
    const { state } = this;
    this.root.textContent = "";
    this.root.appendChild(statusBanner(state.online));
    if (state.error !== null) {
      this.root.appendChild(errorBanner(state.error));
    }

    if (state.view === "datasets") {
      this.root.appendChild(
        datasetListView(state.overview.datasets, state.overview.total_examples, {
          onOpen: (id) => void this.openDataset(id),
          onDelete: (id) => void this.deleteDataset(id),
          onExport: (id) => void this.exportDataset(id),
          onUpload: (id, file) => void this.uploadFile(id, file),
          onCreate: (name) => void this.createDataset(name),
        }),
      );
      if (state.uploadReport !== null) {
        this.root.appendChild(uploadReportView(state.uploadReport));
      }
    } else if (state.view === "examples") {
      this.root.appendChild(
        exampleListView(
          state.datasetName,
          state.examples,
          filterByLabel(state.examples, state.filter),
          state.filter,
          {
            onSelect: (id) => void this.openExample(id),
            onFilter: (label) => this.setFilter(label),
            onBack: () => void this.refreshDatasets(),
          },
        ),
      );
    } else {
      const example = state.examples.find((ex) => ex.id === state.exampleId);
      if (example === undefined) {
        this.state.view = "examples";
        this.render();
        return;
      }
      this.root.appendChild(
        annotationView(
          example,
          state.labelInfo,
          historyFor(state.history, example.id),
          {
            onRelabel: (label, annotator) => void this.relabel(label, annotator),
            onBack: () => {
              this.state.view = "examples";
              this.render();
            },
          },
        ),
      );
    }

    setMutationsEnabled(this.root, state.online);
  }

  private async refreshCurrentView(): Promise<void> {
    if (this.state.view === "datasets" || this.state.datasetId === null) {
      await this.refreshDatasets();
    } else {
      await this.guard(async () => {
        this.state.examples = await this.api.examples(this.state.datasetId!);
        this.state.history = await this.api.history(this.state.datasetId!);
      });
    }
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    try {
      await action();
      this.state.error = null;
    } catch (exc) {
      this.state.error = this.describe(exc);
    }
    this.render();
  }

  private describe(exc: unknown): string {
    if (exc instanceof ApiError) return `${exc.kind}: ${exc.detail}`;
    if (exc instanceof FileFormatError) return exc.message;
    return exc instanceof Error ? exc.message : String(exc);
  }
}

export function mountApp(
  root: HTMLElement,
  api: TrainApi,
  options: AppOptions = {},
): App {
  const app = new App(root, api, options);
  void app.start();
  return app;
}
