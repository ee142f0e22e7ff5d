/**
 * DOM builders for the three views: dataset list, example list, and the
 * annotation panel. Builders take data plus callbacks and return elements;
 * they never talk to the network themselves. All user-controlled text is
 * assigned through textContent, so log lines and labels render verbatim
 * without becoming markup.
 */

import type {
  AnnotationEntry,
  DatasetSummary,
  ExampleRecord,
  LabelInfo,
  UploadReport,
} from "./api.js";
import { describeRejection, labelCounts } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(
  label: string,
  onClick: () => void,
  className = "",
): HTMLButtonElement {
  const b = el("button", className, label);
  b.type = "button";
  b.addEventListener("click", onClick);
  return b;
}

export interface DatasetHandlers {
  onOpen(id: string): void;
  onDelete(id: string): void;
  onExport(id: string): void;
  onUpload(id: string, file: File): void;
  onCreate(name: string): void;
}

export function datasetListView(
  datasets: DatasetSummary[],
  totalExamples: number,
  handlers: DatasetHandlers,
): HTMLElement {
  const root = el("section", "dataset-list");
  root.appendChild(el("h2", "", `Datasets (${totalExamples} examples)`));

  const table = el("table", "datasets");
  const head = el("tr");
  for (const title of ["Name", "Examples", "Labels", "Modified", ""]) {
    head.appendChild(el("th", "", title));
  }
  table.appendChild(head);

  for (const ds of datasets) {
    const row = el("tr", "dataset-row");
    row.dataset.datasetId = ds.id;

    const name = el("td");
    name.appendChild(button(ds.name, () => handlers.onOpen(ds.id), "open"));
    row.appendChild(name);

    row.appendChild(el("td", "count", String(ds.example_count)));

    const perLabel = Object.entries(ds.per_label)
      .map(([label, n]) => `${label}: ${n}`)
      .join(", ");
    row.appendChild(el("td", "per-label", perLabel));
    row.appendChild(el("td", "modified", ds.modified_at));

    const actions = el("td", "actions");
    actions.appendChild(
      button("export", () => handlers.onExport(ds.id), "export mutation-free"),
    );

    const picker = el("input") as HTMLInputElement;
    picker.type = "file";
    picker.accept = "application/json,.json";
    picker.className = "upload";
    picker.addEventListener("change", () => {
      const file = picker.files?.[0];
      if (file) handlers.onUpload(ds.id, file);
      picker.value = "";
    });
    actions.appendChild(picker);

    actions.appendChild(
      button("delete", () => handlers.onDelete(ds.id), "delete danger"),
    );
    row.appendChild(actions);
    table.appendChild(row);
  }
  root.appendChild(table);

  const form = el("form", "create-dataset");
  const nameInput = el("input") as HTMLInputElement;
  nameInput.type = "text";
  nameInput.placeholder = "new dataset name";
  nameInput.name = "name";
  form.appendChild(nameInput);
  const submit = el("button", "", "create");
  submit.type = "submit";
  form.appendChild(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (nameInput.value.trim()) handlers.onCreate(nameInput.value.trim());
  });
  root.appendChild(form);
  return root;
}

export function uploadReportView(report: UploadReport): HTMLElement {
  const box = el("div", "upload-report");
  box.appendChild(
    el("p", "accepted", `${report.accepted} record(s) accepted`),
  );
  if (report.rejected.length > 0) {
    const list = el("ul", "rejections");
    for (const rejection of report.rejected) {
      list.appendChild(el("li", "rejection", describeRejection(rejection)));
    }
    box.appendChild(list);
  }
  return box;
}

export interface ExampleHandlers {
  onSelect(id: string): void;
  onFilter(label: string | null): void;
  onBack(): void;
}

export function exampleListView(
  datasetName: string,
  examples: ExampleRecord[],
  visible: ExampleRecord[],
  activeFilter: string | null,
  handlers: ExampleHandlers,
): HTMLElement {
  const root = el("section", "example-list");
  const header = el("h2", "", datasetName);
  root.appendChild(header);
  root.appendChild(button("back to datasets", handlers.onBack, "back"));

  const bar = el("div", "filter-bar");
  const all = button(`all (${examples.length})`, () => handlers.onFilter(null), "filter");
  if (activeFilter === null) all.classList.add("active");
  bar.appendChild(all);
  for (const [label, count] of labelCounts(examples)) {
    const chip = button(`${label} (${count})`, () => handlers.onFilter(label), "filter");
    chip.dataset.label = label;
    if (activeFilter === label) chip.classList.add("active");
    bar.appendChild(chip);
  }
  root.appendChild(bar);

  const table = el("table", "examples");
  const head = el("tr");
  for (const title of ["Id", "Component", "Label"]) {
    head.appendChild(el("th", "", title));
  }
  table.appendChild(head);
  for (const ex of visible) {
    const row = el("tr", "example-row");
    row.dataset.exampleId = ex.id;
    const id = el("td");
    id.appendChild(button(ex.id, () => handlers.onSelect(ex.id), "open"));
    row.appendChild(id);
    row.appendChild(el("td", "component", ex.component));
    row.appendChild(el("td", "label", ex.label));
    table.appendChild(row);
  }
  root.appendChild(table);
  return root;
}

export interface AnnotationHandlers {
  onRelabel(newLabel: string, annotator: string): void;
  onBack(): void;
}

export function annotationView(
  example: ExampleRecord,
  labelInfo: LabelInfo,
  history: AnnotationEntry[],
  handlers: AnnotationHandlers,
): HTMLElement {
  const root = el("section", "annotation");
  root.appendChild(el("h2", "", `${example.id} [${example.component}]`));
  root.appendChild(button("back to examples", handlers.onBack, "back"));
  root.appendChild(el("p", "current-label", `current label: ${example.label}`));

  const log = el("pre", "log", example.log);
  root.appendChild(log);

  const form = el("form", "relabel");
  const select = el("select") as HTMLSelectElement;
  select.name = "label";
  for (const label of labelInfo.labels) {
    const option = el("option", "", label) as HTMLOptionElement;
    option.value = label;
    if (label === example.label) option.selected = true;
    select.appendChild(option);
  }
  form.appendChild(select);

  let freeText: HTMLInputElement | null = null;
  if (!labelInfo.pinned) {
    freeText = el("input") as HTMLInputElement;
    freeText.type = "text";
    freeText.name = "new-label";
    freeText.placeholder = "or type a new label";
    form.appendChild(freeText);
  }

  const annotator = el("input") as HTMLInputElement;
  annotator.type = "text";
  annotator.name = "annotator";
  annotator.placeholder = "annotator";
  form.appendChild(annotator);

  const submit = el("button", "apply", "apply label");
  submit.type = "submit";
  form.appendChild(submit);
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const typed = freeText?.value.trim() ?? "";
    const label = typed || select.value;
    if (label && annotator.value.trim()) {
      handlers.onRelabel(label, annotator.value.trim());
    }
  });
  root.appendChild(form);

  const panel = el("div", "history");
  panel.appendChild(el("h3", "", "Annotation history"));
  if (history.length === 0) {
    panel.appendChild(el("p", "empty", "no annotations yet"));
  } else {
    const list = el("ol", "history-entries");
    for (const entry of history) {
      const text =
        `${entry.annotated_at} ${entry.annotator}: ` +
        `${entry.old_label ?? "(none)"} -> ${entry.new_label}`;
      const item = el("li", "history-entry", text);
      item.dataset.seq = String(entry.seq);
      list.appendChild(item);
    }
    panel.appendChild(list);
  }
  root.appendChild(panel);
  return root;
}

/** Connection banner; mutating controls are disabled while offline. */
export function statusBanner(online: boolean): HTMLElement {
  const banner = el(
    "div",
    online ? "status online" : "status offline",
    online ? "connected" : "service unreachable: annotation is paused",
  );
  return banner;
}

export function errorBanner(message: string): HTMLElement {
  return el("div", "error-banner", message);
}

/** Disable every control that would mutate server state. */
export function setMutationsEnabled(root: HTMLElement, enabled: boolean): void {
  const selector =
    "form button, form input, form select, button.delete, input.upload";
  for (const node of root.querySelectorAll<HTMLElement>(selector)) {
    (node as HTMLButtonElement).disabled = !enabled;
  }
}
