/**
 * Pure view-state helpers. No DOM, no network; everything here is a
 * plain function over the API types, which keeps the interesting logic
 * testable without a browser.
 */

import type {
  AnnotationEntry,
  ExampleRecord,
  LabelInfo,
  UploadRejection,
} from "./api.js";

export function filterByLabel(
  examples: ExampleRecord[],
  label: string | null,
): ExampleRecord[] {
  if (label === null) return examples;
  return examples.filter((ex) => ex.label === label);
}

export function labelCounts(examples: ExampleRecord[]): Map<string, number> {
  const counts = new Map<string, number>();
  for (const ex of examples) {
    counts.set(ex.label, (counts.get(ex.label) ?? 0) + 1);
  }
  return counts;
}

/** History entries for one example, in the order the server returned them. */
export function historyFor(
  records: AnnotationEntry[],
  exampleId: string,
): AnnotationEntry[] {
  return records.filter((r) => r.example_id === exampleId);
}

/**
 * Optimistic relabel: a new array with one example's label replaced.
 * The caller reconciles against the server's annotation record afterwards
 * and reverts if the request failed.
 */
export function applyLabel(
  examples: ExampleRecord[],
  exampleId: string,
  newLabel: string,
): ExampleRecord[] {
  return examples.map((ex) =>
    ex.id === exampleId ? { ...ex, label: newLabel } : ex,
  );
}

/**
 * True when the optimistic state already matches what the server recorded.
 * A mismatch means another annotator raced us and the view must reload.
 */
export function matchesServer(
  examples: ExampleRecord[],
  record: AnnotationEntry,
): boolean {
  const ex = examples.find((e) => e.id === record.example_id);
  return ex !== undefined && ex.label === record.new_label;
}

/** Free-text label entry is only offered when the label set is not pinned. */
export function canEnterNewLabel(info: LabelInfo): boolean {
  return !info.pinned;
}

export function describeRejection(r: UploadRejection): string {
  const who = r.id === null ? `record ${r.index}` : `record ${r.index} (${r.id})`;
  return `${who}: ${r.reason}`;
}
