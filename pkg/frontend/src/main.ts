/**
 * Browser entry point. When the page is served from the training service's
 * /ui mount the API lives on the same origin under /api/v1; a different
 * backend can be pointed at with ?api=http://host:port/api/v1.
 */

import { TrainApi } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "/api/v1";
const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
mountApp(root, new TrainApi(base));
