/**
 * Validation for files the user uploads into a dataset.
 *
 * An upload file is the same shape the export endpoint produces: a JSON
 * array of records with string fields id, component, label, log. Parsing
 * is deliberately strict about the envelope (must be an array of objects)
 * but leaves record-level policy to the server, which reports per-record
 * rejections the UI then shows inline.
 */

import type { ExampleRecord } from "./api.js";

export class FileFormatError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "FileFormatError";
  }
}

const FIELDS: (keyof ExampleRecord)[] = ["id", "component", "label", "log"];

/**
 * Parse an upload file into records.
 *
 * Throws FileFormatError when the file is not JSON or not an array of
 * objects. Records missing fields pass through untouched so the server's
 * rejection reasons (the authoritative ones) surface per record.
 */
export function parseUploadFile(text: string): ExampleRecord[] {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (exc) {
    throw new FileFormatError(`file is not valid JSON: ${(exc as Error).message}`);
  }
  if (!Array.isArray(data)) {
    throw new FileFormatError("file must contain a JSON array of records");
  }
  data.forEach((entry, index) => {
    if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
      throw new FileFormatError(`entry ${index} is not an object`);
    }
  });
  return data as ExampleRecord[];
}

/** Local preview of which fields a record is missing; server stays authoritative. */
export function missingFields(record: Partial<ExampleRecord>): string[] {
  return FIELDS.filter((field) => typeof record[field] !== "string");
}
