// End-to-end scripted annotation session against a live service:
// open -> threshold 0.97 -> grow -> save, then score the saved mask
// against the phantom ground truth. Also verifies the slider debounce
// policy against the real endpoint.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { AnnotatorApi } from "../src/api.js";
import { debounce } from "../src/debounce.js";
import { SessionController } from "../src/session.js";

const PORT = 8471;
const BASE = `http://127.0.0.1:${PORT}`;

let dataDir: string;
let server: ChildProcess | null = null;

function readNiiMask(path: string): { dims: number[]; data: Uint8Array } {
  const buf = readFileSync(path);
  const dims = [buf.readInt16LE(42), buf.readInt16LE(44), buf.readInt16LE(46)];
  const datatype = buf.readInt16LE(70);
  expect(datatype).toBe(2); // uint8 mask
  const voxOffset = Math.round(buf.readFloatLE(108));
  const n = dims[0] * dims[1] * dims[2];
  return { dims, data: new Uint8Array(buf.buffer, buf.byteOffset + voxOffset, n) };
}

function dice(a: Uint8Array, b: Uint8Array): number {
  let inter = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    if (a[i]) na++;
    if (b[i]) nb++;
    if (a[i] && b[i]) inter++;
  }
  return na + nb === 0 ? 1 : (2 * inter) / (na + nb);
}

async function waitForServer(): Promise<void> {
  for (let tries = 0; tries < 120; tries++) {
    try {
      const resp = await fetch(`${BASE}/volumes`);
      if (resp.ok) {
        return;
      }
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "vb-ui-"));
  // a clean phantom: intensities nearly two-valued, so the 97% threshold
  // captures the whole vessel tree
  execFileSync("python3", [
    "-m", "vesselbench.cli", "phantom", "gen",
    "--out", dataDir, "--n", "1", "--dims", "48,48,48", "--seed", "13",
    "--noise-std", "1.5", "--bias-amplitude", "0.01",
  ]);
  server = spawn("python3",
    ["-m", "vesselbench.cli", "serve", "--data", dataDir, "--port", String(PORT)],
    { stdio: "ignore" });
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(dataDir, { recursive: true, force: true });
});

describe("scripted browser session", () => {
  it("threshold 0.97 -> grow -> save reaches DSC >= 0.9 vs ground truth", async () => {
    const api = new AnnotatorApi(BASE);
    const session = await SessionController.open(api, "case_000");
    const thr = await session.setThreshold(0.97);
    expect(thr.voxels_selected).toBeGreaterThan(0);
    const grown = await session.grow();
    expect(grown.mask_voxels).toBeGreaterThan(0);
    const saved = await session.save();

    const label = readNiiMask(saved.mask_path);
    const gt = readNiiMask(join(dataDir, "case_000_gt.nii"));
    expect(label.dims).toEqual(gt.dims);
    const dsc = dice(label.data, gt.data);
    expect(dsc).toBeGreaterThanOrEqual(0.9);
  }, 30_000);

  it("rapid slider movement issues at most one threshold request per 150 ms",
     async () => {
    let thresholdRequests = 0;
    const countingFetch: typeof fetch = async (url, init) => {
      if (String(url).includes("/threshold")) {
        thresholdRequests++;
      }
      return fetch(url, init);
    };
    const api = new AnnotatorApi(BASE, countingFetch);
    const session = await SessionController.open(api, "case_000");
    const push = debounce((fraction: number) => {
      void session.setThreshold(fraction);
    }, 150);

    const start = Date.now();
    for (let i = 0; i < 30; i++) {
      push(0.9 + i * 0.003); // a 300 ms slider drag, events every 10 ms
      await new Promise((resolve) => setTimeout(resolve, 10));
    }
    await new Promise((resolve) => setTimeout(resolve, 400));
    const elapsed = Date.now() - start;
    const budget = Math.ceil(elapsed / 150);
    expect(thresholdRequests).toBeGreaterThan(0);
    expect(thresholdRequests).toBeLessThanOrEqual(budget);
  }, 30_000);

  it("slice endpoint streams a PNG the viewer can composite", async () => {
    const resp = await fetch(`${BASE}/sessions/nope/slice?axis=z&index=0`);
    expect(resp.status).toBe(404);
    const api = new AnnotatorApi(BASE);
    const session = await SessionController.open(api, "case_000");
    const ok = await fetch(
      api.sliceUrl(session.sessionId, "z", 24, true, false));
    expect(ok.headers.get("content-type")).toBe("image/png");
    const bytes = new Uint8Array(await ok.arrayBuffer());
    // PNG magic
    expect([...bytes.slice(0, 4)]).toEqual([137, 80, 78, 71]);
  }, 30_000);
});
