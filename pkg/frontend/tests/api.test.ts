import { describe, expect, it } from "vitest";

import { ApiError, TrainApi } from "../src/api.js";
import { FakeBackend } from "./fake_backend.js";

const EXAMPLES = [
  { id: "ex-1", component: "kernel", label: "OOM", log: "oom-killer invoked" },
  { id: "ex-2", component: "net", label: "network", log: "link down on eth0" },
];

function makeApi(backend: FakeBackend): TrainApi {
  return new TrainApi("http://train.test/api/v1", backend.fetch);
}

describe("TrainApi request shapes", () => {
  it("lists datasets from the overview endpoint", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("bootstrap", EXAMPLES);
    const api = makeApi(backend);

    const overview = await api.overview();
    expect(overview.total_examples).toBe(2);
    expect(overview.datasets).toHaveLength(1);
    expect(overview.datasets[0].id).toBe(id);
    expect(overview.datasets[0].per_label).toEqual({ OOM: 1, network: 1 });
    expect(backend.calls[0]).toMatchObject({
      method: "GET",
      url: "http://train.test/api/v1/train/data",
    });
  });

  it("creates a dataset with a JSON name payload", async () => {
    const backend = new FakeBackend();
    const api = makeApi(backend);
    const created = await api.createDataset("triage");
    expect(created.name).toBe("triage");
    expect(backend.calls[0]).toMatchObject({
      method: "POST",
      url: "http://train.test/api/v1/datasets",
      body: { name: "triage" },
    });
  });

  it("deletes through the dataset resource url", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("doomed", []);
    const api = makeApi(backend);
    await api.deleteDataset(id);
    expect(backend.calls[0].method).toBe("DELETE");
    expect(backend.calls[0].url).toBe(`http://train.test/api/v1/datasets/${id}`);
    expect((await api.overview()).datasets).toHaveLength(0);
  });

  it("uploads examples inline", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("target", []);
    const api = makeApi(backend);
    const report = await api.upload(id, EXAMPLES);
    expect(report).toEqual({ accepted: 2, rejected: [] });
    expect(backend.calls[0].body).toEqual({ examples: EXAMPLES, mode: "inline" });
  });

  it("reports per-record rejections with server reasons", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("target", EXAMPLES);
    const api = makeApi(backend);
    const report = await api.upload(id, [
      { id: "ex-9", component: "disk", label: "hardware", log: "smart failure" },
      { id: "ex-1", component: "kernel", label: "OOM", log: "dup" },
      { id: "ex-10", component: "disk", label: "hardware" } as any,
    ]);
    expect(report.accepted).toBe(1);
    expect(report.rejected).toEqual([
      { index: 1, id: "ex-1", reason: "duplicate id ex-1" },
      { index: 2, id: "ex-10", reason: "missing or non-string field(s): log" },
    ]);
  });

  it("posts relabels and returns the annotation record unchanged", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    const record = await api.relabel(id, "ex-1", "overload", "casey");
    expect(record).toMatchObject({
      dataset_id: id,
      example_id: "ex-1",
      annotator: "casey",
      old_label: "OOM",
      new_label: "overload",
      seq: 0,
    });
    expect(backend.calls[0]).toMatchObject({
      method: "POST",
      url: `http://train.test/api/v1/datasets/${id}/examples/ex-1/label`,
      body: { new_label: "overload", annotator: "casey" },
    });
  });

  it("keeps history in server order", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    await api.relabel(id, "ex-1", "overload", "casey");
    await api.relabel(id, "ex-2", "hardware", "robin");
    await api.relabel(id, "ex-1", "OOM", "casey");
    const history = await api.history(id);
    expect(history.map((r) => r.seq)).toEqual([0, 1, 2]);
    expect(history.map((r) => r.new_label)).toEqual(["overload", "hardware", "OOM"]);
  });

  it("returns export text byte-for-byte", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    const text = await api.exportRaw(id);
    expect(text).toBe(backend.exportText(id));
    expect(text.endsWith("\n")).toBe(true);
    expect(JSON.parse(text)).toHaveLength(2);
  });

  it("parses examples out of the export", async () => {
    const backend = new FakeBackend();
    const id = backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    const examples = await api.examples(id);
    expect(examples).toEqual(EXAMPLES);
  });

  it("reads the label policy", async () => {
    const backend = new FakeBackend();
    backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    expect(await api.labels()).toEqual({ labels: ["OOM", "network"], pinned: false });
    backend.pinnedLabels = ["OOM", "network", "hardware", "overload"];
    expect(await api.labels()).toEqual({
      labels: ["OOM", "hardware", "network", "overload"],
      pinned: true,
    });
  });
});

describe("TrainApi error handling", () => {
  it("rethrows server errors with the detail text verbatim", async () => {
    const backend = new FakeBackend();
    backend.pinnedLabels = ["OOM", "network"];
    const id = backend.seed("pool", EXAMPLES);
    const api = makeApi(backend);
    const attempt = api.relabel(id, "ex-1", "made-up", "casey");
    await expect(attempt).rejects.toThrowError(ApiError);
    const error = await attempt.catch((e) => e as ApiError);
    expect(error.status).toBe(409);
    expect(error.kind).toBe("UnknownLabel");
    expect(error.detail).toBe("label 'made-up' is outside the pinned set");
  });

  it("maps missing datasets to UnknownDataset", async () => {
    const backend = new FakeBackend();
    const api = makeApi(backend);
    const error = await api.exportRaw("ds-nope").catch((e) => e as ApiError);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).kind).toBe("UnknownDataset");
    expect((error as ApiError).status).toBe(404);
  });

  it("keeps non-JSON error bodies as raw detail", async () => {
    const api = new TrainApi("http://x", async () =>
      new Response("bad gateway", { status: 502, statusText: "Bad Gateway" }),
    );
    const error = await api.overview().catch((e) => e as ApiError);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).detail).toBe("bad gateway");
    expect((error as ApiError).kind).toBe("HttpError");
  });

  it("health is false when the service is unreachable", async () => {
    const backend = new FakeBackend();
    const api = makeApi(backend);
    expect(await api.health()).toBe(true);
    backend.online = false;
    expect(await api.health()).toBe(false);
  });
});
